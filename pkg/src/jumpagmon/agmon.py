"""Agmon weights and the decay verifications built on them.

The weights are node fields on a :class:`~jumpagmon.grid.GridDomain` built from a
distance field ``d``:

* ``Phi = d - (B eps/2) ln(B/2) - g (B eps/2) ln(2d/(B eps))`` with ``g = chi(d/(B eps))``;
* ``Phi_alpha = (1 - g^) Phi + g^ (1 - alpha/2) ((1 - g~) d + g~ d_delta)``;
* ``Phi~_alpha = (1 - alpha/2) ((1 - g^) d + g^ d_delta)``,

where ``g~, g^`` are rescaled copies of ``chi`` in ``d`` and ``d_delta`` is the
mollified distance. All norms are ``h^d``-weighted and computed in log space.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError
from .finsler import mollify
from .operator import v_phi

CHI_SLOPE_CAP = 2.0 / np.log(2.0)


class CutoffChi:
    """C^2 step with ``chi = 0`` on ``r <= 1/2`` and ``chi = 1`` on ``r >= 1``.

    ``chi'`` is a trapezoid: cubic smoothstep ramps of width ``w`` up to the
    plateau value ``P`` and back down, with ``w = 1/2 - 1/P`` so that the total
    mass is one. The default ``P = 2.5`` gives ramps on ``[0.5, 0.6]`` and
    ``[0.9, 1.0]``.

    Parameters
    ----------
    plateau : float
        Peak slope, in ``(2, 2/ln 2]``.
    """

    lo = 0.5
    hi = 1.0

    def __init__(self, plateau=2.5):
        if not 2.0 < plateau <= CHI_SLOPE_CAP:
            raise ConfigError(f"plateau slope {plateau} must lie in (2, {CHI_SLOPE_CAP:.6f}]")
        self.plateau = float(plateau)
        self.ramp = (self.hi - self.lo) - 1.0 / self.plateau
        self.knots = (self.lo, self.lo + self.ramp, self.hi - self.ramp, self.hi)

    def _pieces(self, r):
        r = np.asarray(r, float)
        a, b, c, e = self.knots
        t_up = np.clip((r - a) / self.ramp, 0.0, 1.0)
        t_dn = np.clip((r - c) / self.ramp, 0.0, 1.0)
        return r, a, b, c, e, t_up, t_dn

    def __call__(self, r):
        r, a, b, c, e, tu, td = self._pieces(r)
        P, w = self.plateau, self.ramp
        up = P * w * (tu ** 3 - 0.5 * tu ** 4)
        mid = P * w / 2 + P * (np.clip(r, b, c) - b)
        dn = P * w * (td - td ** 3 + 0.5 * td ** 4)
        out = np.where(r < b, up, np.where(r < c, mid, mid + dn))
        return np.where(r <= a, 0.0, np.where(r >= e, 1.0, out))

    def derivative(self, r):
        r, a, b, c, e, tu, td = self._pieces(r)
        P = self.plateau
        s_up = 3 * tu ** 2 - 2 * tu ** 3
        s_dn = 1.0 - (3 * td ** 2 - 2 * td ** 3)
        out = np.where(r < b, P * s_up, np.where(r < c, P, P * s_dn))
        return np.where((r <= a) | (r >= e), 0.0, out)

    def second_derivative(self, r):
        r, a, b, c, e, tu, td = self._pieces(r)
        k = self.plateau / self.ramp
        out = np.where(r < b, k * 6 * tu * (1 - tu), np.where(r < c, 0.0, -k * 6 * td * (1 - td)))
        return np.where((r <= a) | (r >= e), 0.0, out)


class ScaledCutoff:
    """``chi`` moved so it rises from 0 at ``start`` to 1 at ``stop``."""

    def __init__(self, chi: CutoffChi, start, stop):
        if stop <= start:
            raise ConfigError(f"cutoff interval [{start}, {stop}] is empty")
        self.chi, self.start, self.stop = chi, float(start), float(stop)
        self._k = 0.5 / (self.stop - self.start)

    def _r(self, t):
        return 0.5 + self._k * (np.asarray(t, float) - self.start)

    def __call__(self, t):
        return self.chi(self._r(t))

    def derivative(self, t):
        return self._k * self.chi.derivative(self._r(t))


def _log_norm(log_weight, u, volume):
    """``ln || e^{log_weight} u ||`` with the ``h^d`` weight."""
    with np.errstate(divide="ignore"):
        a = 2 * (np.asarray(log_weight, float) + np.log(np.abs(u)))
    return 0.5 * (float(logsumexp(a)) + np.log(volume))


@dataclass
class WeightField:
    """Weights and cutoffs on the grid.

    Attributes
    ----------
    phi, phi_alpha, phi_tilde : (N,)
        ``Phi``, ``Phi_alpha`` and ``Phi~_alpha``; the last two are ``None``
        before :func:`phi_alpha_field`.
    g, g_tilde, g_hat : (N,)
        ``chi(d/(B eps))`` and the two distance cutoffs.
    in_K : (N,) bool
        ``d <= D``.
    """

    d: np.ndarray
    eps: float
    B: float
    phi: np.ndarray
    g: np.ndarray
    alpha: float | None = None
    D: float | None = None
    eta: float | None = None
    delta: float | None = None
    d_delta: np.ndarray | None = None
    g_tilde: np.ndarray | None = None
    g_hat: np.ndarray | None = None
    phi_alpha: np.ndarray | None = None
    phi_tilde: np.ndarray | None = None
    in_K: np.ndarray | None = None
    eps_alpha: float | None = None
    notes: dict = dc_field(default_factory=dict)

    @property
    def eps_admissible(self):
        """Whether ``eps <= eps_alpha`` (the log-correction condition off ``K``)."""
        return bool(self.eps_alpha is not None and self.eps <= self.eps_alpha)


def phi_field(d, B, eps, chi=None):
    """The log-corrected decay weight ``Phi`` (see module docstring).

    Parameters
    ----------
    d : array or DistanceField
    """
    if d is None:
        raise ConfigError("distance field has not been computed")
    d = np.asarray(getattr(d, "values", d), float)
    if B <= 0 or eps <= 0:
        raise ConfigError(f"B={B} and eps={eps} must be positive")
    chi = CutoffChi() if chi is None else chi
    s = B * eps
    g = chi(d / s)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(g > 0, g * np.log(2 * d / s), 0.0)
    phi = d - 0.5 * s * np.log(B / 2) - 0.5 * s * corr
    return WeightField(d=d, eps=float(eps), B=float(B), phi=phi, g=g)


def sandwich_constant(weight: WeightField, mask=None):
    """Smallest ``C'`` with ``e^{d/eps}(1+d/eps)^{-B/2}/C' <= e^{Phi/eps} <= C' e^{d/eps}(1+d/eps)^{-B/2}``."""
    d, eps, B = weight.d, weight.eps, weight.B
    log_ratio = (weight.phi - d) / eps + 0.5 * B * np.log1p(d / eps)
    if mask is not None:
        log_ratio = log_ratio[mask]
    return float(np.exp(np.max(np.abs(log_ratio))))


def hessian_bound(grid, values):
    """``max |d_nu d_mu f|`` by finite differences."""
    return float(np.max(np.abs(grid.hessian(values))))


def _delta_ok(d, d_delta, alpha, off_K):
    return np.all((1 - alpha / 2) * np.abs(d_delta - d)[off_K] <= (alpha / 2) * d[off_K])


def admissible_delta(field, alpha, D, delta_max, iters=30):
    """Largest ``delta`` in ``[2h, delta_max]`` with ``(1-alpha/2)|d_delta - d| <= (alpha/2) d`` off ``K``.

    Returns
    -------
    (delta, MollifiedField)

    Raises
    ------
    ConfigError
        If even ``delta = 2h`` fails; the message names the smallest ``alpha``
        the grid supports.
    """
    d = field.values
    off_K = d > D
    lo = 2 * field.grid.h
    m_lo = mollify(field, lo)
    if not _delta_ok(d, m_lo.values, alpha, off_K):
        r = np.abs(m_lo.values - d)[off_K]
        a_min = float(np.max(2 * r / (d[off_K] + r)))
        raise ConfigError(f"no admissible mollifier radius for alpha={alpha} on this grid; "
                          f"the smallest supported alpha is {a_min:.4g}")
    hi = max(lo, float(delta_max))
    m_hi = mollify(field, hi)
    if _delta_ok(d, m_hi.values, alpha, off_K):
        return hi, m_hi
    best = m_lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        m = mollify(field, mid)
        if _delta_ok(d, m.values, alpha, off_K):
            lo, best = mid, m
        else:
            hi = mid
        if hi - lo < 0.25 * field.grid.h:
            break
    return lo, best


def eps_alpha(d, alpha, B, D):
    """Largest ``eps`` with ``(B eps/2) ln(d/eps) <= (alpha/4) d`` at every node with ``d > D``."""
    dd = np.asarray(d, float)
    dd = dd[dd > D]
    if dd.size == 0:
        return np.inf

    def ok(e):
        return bool(np.all(0.5 * B * e * np.log(dd / e) <= 0.25 * alpha * dd))

    lo, hi = 1e-300, float(np.min(dd)) / np.e
    if ok(hi):
        return hi
    for _ in range(200):
        mid = np.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-12:
            break
    return lo


def phi_alpha_field(field, alpha, B, D, eta, eps, delta=None, delta_max=0.05, chi=None):
    """``Phi_alpha`` and ``Phi~_alpha`` for the distance field.

    Parameters
    ----------
    field : DistanceField
    delta : float, optional
        Mollifier radius. By default the largest admissible value up to
        ``delta_max`` is searched.

    Raises
    ------
    ConfigError
        For ``alpha`` outside ``(0, 1]``, a ball ``K`` not strictly inside the
        grid range of ``d``, or no admissible ``delta``.
    """
    if not 0 < alpha <= 1:
        raise ConfigError(f"alpha={alpha} must lie in (0, 1]")
    if D <= 0 or eta <= 0:
        raise ConfigError(f"D={D} and eta={eta} must be positive")
    chi = CutoffChi() if chi is None else chi
    d = field.values
    if D + 2 * eta >= float(np.max(d)):
        raise ConfigError(f"D + 2 eta = {D + 2 * eta} reaches max d = {float(np.max(d)):.4g}; K is not inside Sigma")
    w = phi_field(d, B, eps, chi)
    if delta is None:
        delta, moll = admissible_delta(field, alpha, D, delta_max)
    else:
        moll = mollify(field, delta)
    g_t = ScaledCutoff(chi, D + eta, D + 2 * eta)(d)
    g_h = ScaledCutoff(chi, D, D + eta)(d)
    dd = moll.values
    w.alpha, w.D, w.eta, w.delta, w.d_delta = float(alpha), float(D), float(eta), float(delta), dd
    w.g_tilde, w.g_hat = g_t, g_h
    a2 = 1 - alpha / 2
    w.phi_alpha = (1 - g_h) * w.phi + g_h * a2 * ((1 - g_t) * d + g_t * dd)
    w.phi_tilde = a2 * ((1 - g_h) * d + g_h * dd)
    w.in_K = d <= D
    w.eps_alpha = eps_alpha(d, alpha, B, D)
    w.notes["jensen_violation"] = moll.violation
    return w


def sandwich_report(weight: WeightField):
    """Nodewise checks of the three weight brackets.

    Returns
    -------
    dict
        ``C_prime`` (on ``K``), ``phi_C_prime`` (everywhere), booleans
        ``off_K_upper``, ``off_K_lower`` for ``(1-alpha)d <= Phi_alpha <= d``,
        ``tilde_bracket`` for ``(1-alpha)d <= Phi~_alpha <= d``, and the worst
        signed violations.
    """
    d, a = weight.d, weight.alpha
    off = ~weight.in_K
    tol = 1e-12 * max(1.0, float(np.max(d)))
    up = weight.phi_alpha[off] - d[off]
    low = (1 - a) * d[off] - weight.phi_alpha[off]
    tu = weight.phi_tilde - d
    tl = (1 - a) * d - weight.phi_tilde
    worst = lambda x: float(np.max(x, initial=-np.inf))  # noqa: E731
    return {
        "C_prime": sandwich_constant(weight, weight.in_K),
        "phi_C_prime": sandwich_constant(weight),
        "off_K_upper": bool(worst(up) <= tol),
        "off_K_lower": bool(worst(low) <= tol),
        "off_K_upper_excess": worst(up),
        "off_K_lower_excess": worst(low),
        "tilde_bracket": bool(max(worst(tu), worst(tl)) <= tol),
        "eps_admissible": weight.eps_admissible,
    }


@dataclass
class FPlusMinus:
    """``F_+``, ``F_-``, ``Omega_-`` and the inner set ``{d < B eps}``."""

    F_plus: np.ndarray
    F_minus: np.ndarray
    omega_minus: np.ndarray
    inner: np.ndarray
    total: np.ndarray

    @property
    def F(self):
        return self.F_plus + self.F_minus


def f_pm(d, potential, vphi, E, B, eps):
    """The pair ``F_+, F_-`` for the weighted potential ``W = potential + vphi - E``.

    ``F_+ = sqrt(eps 1_{d<B eps} + W 1_{W>=0})`` and
    ``F_- = sqrt(eps 1_{d<B eps} - W 1_{W<0})``, so ``F_+^2 - F_-^2 = W``.
    """
    d = np.asarray(d, float)
    W = np.asarray(potential, float) + np.asarray(vphi, float) - E
    inner = d < B * eps
    om = W < 0
    base = np.where(inner, eps, 0.0)
    Fp = np.sqrt(base + np.where(om, 0.0, W))
    Fm = np.sqrt(base + np.where(om, -W, 0.0))
    return FPlusMinus(Fp, Fm, om, inner, W)


@dataclass
class RegionReport:
    """Region bounds for ``V0 - t~0^Sigma(x, grad Phi_alpha)`` and ``V + V^Phi``.

    The three regions are ``{d < B eps}``, ``{B eps <= d < D + eta}`` and
    ``{d >= D + eta}``. Constants are the smallest ones consistent with the
    sampled values.
    """

    eps: float
    B: float
    mins_symbol: tuple
    mins_potential: tuple
    C0: float
    C1: float
    C2: float
    C3: float
    C4: float
    inner_ok: bool
    middle_ok: bool
    outer_ok: bool
    step3_ok: bool
    B_required: float
    omega_minus_ok: bool | None
    omega_minus_escape: np.ndarray
    counts: tuple

    @property
    def passed(self):
        return self.inner_ok and self.middle_ok and self.outer_ok and self.step3_ok and self.omega_minus_ok is not False

    def constants(self):
        return {"C0": self.C0, "C1": self.C1, "C2": self.C2, "C3": self.C3, "C4": self.C4}

    def flags(self):
        keys = ("inner_ok", "middle_ok", "outer_ok", "step3_ok", "omega_minus_ok")
        return {k: getattr(self, k) for k in keys}


def _mins(values, masks):
    return tuple(float(np.min(values[m])) if np.any(m) else np.nan for m in masks)


def weight_gradient(grid, values):
    """Central-difference gradient of a weight (one-sided on the edge)."""
    return grid.gradient(values)


def three_region_check(weight: WeightField, form, symbol, potential, E=0.0, R0=None, inner_tol=5e-3):
    """Three-region bounds for ``Phi_alpha`` on the form's grid.

    Parameters
    ----------
    form : FormMatrix
        Supplies the grid, ``eps``, the interior jump table and ``V`` (the
        potential plus, in Dirichlet mode, the killing term).
    symbol : SymbolEvaluator
        For ``t~0^Sigma``.
    E : float
        Energy for the ``Omega_-`` check.
    R0 : float, optional
        Window constant for ``B >= C0 (1 + R0 + C3)``; defaults to ``E/eps``.

    Notes
    -----
    ``C0 = max(B eps / min_middle, max_{d >= B eps} 2d / V0)``,
    ``C1 = min_outer``, ``C2 = max(0, -min_inner^V) / eps``,
    ``C3 = max(0, B/C0 - min_middle^V / eps)``, ``C4 = min_outer^V``.
    """
    grid, eps = form.grid, form.eps
    B, D, eta = weight.B, weight.D, weight.eta
    if weight.phi_alpha is None:
        raise ConfigError("phi_alpha_field must be built before the region check")
    d = weight.d
    phi = weight.phi_alpha
    grad = weight_gradient(grid, phi)
    nodes = np.arange(grid.size)
    V0 = potential.v0(grid.points)
    gap = V0 - symbol.t_tilde0_sigma(nodes, grad, grid, eps)
    inner = d < B * eps
    outer = d >= D + eta
    middle = ~inner & ~outer
    masks = (inner, middle, outer)
    ms = _mins(gap, masks)

    Vform = form.potential + form.kappa
    W = Vform + v_phi(form.table, phi)
    mv = _mins(W, masks)

    far = d >= B * eps
    with np.errstate(divide="ignore", invalid="ignore"):
        c_ratio = float(np.max(2 * d[far] / V0[far], initial=0.0))
    mid_ok = bool(np.any(middle)) and ms[1] > 0
    C0 = max(B * eps / ms[1], c_ratio) if mid_ok else np.inf
    C1 = ms[2]
    C2 = max(0.0, -mv[0]) / eps if np.any(inner) else 0.0
    C3 = max(0.0, B / C0 - mv[1] / eps) if mid_ok else np.inf
    C4 = mv[2]
    R0 = E / eps if R0 is None else R0
    B_req = C0 * (1 + R0 + C3)
    escape = np.nonzero((W - E < 0) & ~inner)[0]
    om_ok = bool(escape.size == 0) if B >= B_req else None
    return RegionReport(
        eps=float(eps), B=float(B), mins_symbol=ms, mins_potential=mv,
        C0=float(C0), C1=float(C1), C2=float(C2), C3=float(C3), C4=float(C4),
        inner_ok=bool(not np.any(inner) or ms[0] >= -inner_tol),
        middle_ok=mid_ok, outer_ok=bool(np.any(outer) and C1 > 0),
        step3_ok=bool(np.isfinite(C2) and np.isfinite(C3) and np.any(outer) and C4 > 0),
        B_required=float(B_req), omega_minus_ok=om_ok, omega_minus_escape=escape,
        counts=tuple(int(np.sum(m)) for m in masks),
    )


@dataclass
class FPMResult:
    """Log-space sides of the F+- inequality."""

    log_lhs: float
    log_rhs: float
    log_terms: tuple
    constants: tuple

    @property
    def lhs(self):
        return float(np.exp(self.log_lhs))

    @property
    def rhs(self):
        return float(np.exp(self.log_rhs))

    @property
    def slack(self):
        """``(rhs - lhs) / rhs``; nonnegative when the inequality holds."""
        return float(-np.expm1(self.log_lhs - self.log_rhs))

    @property
    def holds(self):
        return self.log_lhs <= self.log_rhs + np.log1p(1e-8)


def fpm_inequality(u, E, phi, fpm: FPlusMinus, form, constants=(4.0, 8.0)):
    """``||F e^{phi/eps} u||^2 <= c1 ||F^{-1} e^{phi/eps}(H - E)u||^2 + c2 ||F_- e^{phi/eps} u||^2``.

    Parameters
    ----------
    u : array or EigenPair
    phi : array
        Weight; ``0`` for the unweighted form.
    """
    u = np.asarray(getattr(u, "vector", u), float)
    eps, vol = form.eps, form.grid.volume
    phi = np.broadcast_to(np.asarray(phi, float), u.shape)
    F = fpm.F
    if np.any(F <= 0):
        raise ConfigError("F = F_+ + F_- must be positive on Sigma")
    r = form.H @ u - E * u
    lw = phi / eps
    with np.errstate(divide="ignore"):
        lF, lFm = np.log(F), np.log(fpm.F_minus)
    l_lhs = 2 * _log_norm(lw + lF, u, vol)
    l_res = 2 * _log_norm(lw - lF, r, vol)
    l_neg = 2 * _log_norm(lw + lFm, u, vol)
    c1, c2 = constants
    l_rhs = float(np.logaddexp(np.log(c1) + l_res, np.log(c2) + l_neg))
    return FPMResult(float(l_lhs), l_rhs, (float(l_res), float(l_neg)), tuple(constants))


def sharpness_probe(form, phi, fpm: FPlusMinus, E, trials=200, seed=0, constant=7.0, pairs=None):
    """Count trials violating the F+- inequality with ``c2`` replaced by ``constant``.

    Trial vectors are Gaussian random fields, half of them mixed into the
    eigenvectors in ``pairs`` when given. Reported only.
    """
    rng = np.random.default_rng(seed)
    n = form.size
    base = [np.asarray(p.vector) for p in pairs] if pairs else []
    worst, violations = -np.inf, 0
    for t in range(trials):
        u = rng.standard_normal(n)
        if base and t % 2:
            u = base[t % len(base)] + 10.0 ** rng.uniform(-8, 0) * u
        res = fpm_inequality(u, E, phi, fpm, form, constants=(4.0, constant))
        gap = res.log_lhs - res.log_rhs
        worst = max(worst, gap)
        violations += gap > 0
    return {"constant": constant, "trials": trials, "violations": int(violations), "max_log_ratio": float(worst)}


@dataclass
class DecayReport:
    """Decay ratios and the slope of ``-eps ln|u|`` against ``d``.

    Attributes
    ----------
    r1 : float
        ``||(1 + d/eps)^{-B} e^{d/eps} u|| / ||u||``.
    r2 : float
        ``||e^{(1-alpha) d/eps} u|| / ||u||``.
    r3 : float or None
        Split norm: ``sqrt(||(1+d/eps)^{-B/2} e^{d/eps} u||_K^2 / C' + ||e^{(1-alpha)d/eps} u||_{Sigma\\K}^2) / ||u||``.
    r_phi : float or None
        ``||e^{Phi_alpha/eps} u|| / ||u||``.
    split_ok : bool or None
        Whether the split norm is bounded by the ``Phi_alpha`` norm.
    """

    eps: float
    B: float
    alpha: float
    r1: float
    r2: float
    r3: float | None
    r_phi: float | None
    split_ok: bool | None
    slope: float
    intercept: float
    fit_nodes: int
    underflow_nodes: int
    well_value_ratio: float

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def decay_report(u, d, eps, B, alpha, grid, weight: WeightField | None = None, d_min=0.1, floor=1e-10):
    """Weighted norms of ``u`` and the decay-rate fit.

    Parameters
    ----------
    u : array or EigenPair
    d : array
        Distance at the nodes.
    floor : float
        Nodes with ``|u| <= floor * max|u|`` are excluded from the slope fit.
    """
    u = np.asarray(getattr(u, "vector", u), float)
    d = np.asarray(d, float)
    vol = grid.volume
    ln_u = _log_norm(np.zeros_like(u), u, vol)
    r1 = np.exp(_log_norm(d / eps - B * np.log1p(d / eps), u, vol) - ln_u)
    r2 = np.exp(_log_norm((1 - alpha) * d / eps, u, vol) - ln_u)
    r3 = r_phi = split_ok = None
    if weight is not None and weight.phi_alpha is not None:
        K = weight.in_K
        Cp = sandwich_constant(weight, K)
        lk = 2 * _log_norm(np.where(K, d / eps - 0.5 * B * np.log1p(d / eps), -np.inf), u, vol) - np.log(Cp)
        lo = 2 * _log_norm(np.where(K, -np.inf, (1 - alpha) * d / eps), u, vol)
        l_split = 0.5 * float(np.logaddexp(lk, lo))
        l_phi = _log_norm(weight.phi_alpha / eps, u, vol)
        r3 = float(np.exp(l_split - ln_u))
        r_phi = float(np.exp(l_phi - ln_u))
        split_ok = bool(l_split <= l_phi + 1e-12)
    au = np.abs(u)
    # exact zeros lie off the lattice component carrying u
    support = au > 0
    live = au > floor * np.max(au)
    sel = (d >= d_min) & live
    if np.sum(sel) >= 2:
        slope, icpt = np.polyfit(d[sel], -eps * np.log(au[sel]), 1)
    else:
        slope = icpt = np.nan
    j = grid.well_index
    return DecayReport(
        eps=float(eps), B=float(B), alpha=float(alpha), r1=float(r1), r2=float(r2), r3=r3,
        r_phi=r_phi, split_ok=split_ok, slope=float(slope), intercept=float(icpt),
        fit_nodes=int(np.sum(sel)), underflow_nodes=int(np.sum((d >= d_min) & support & ~live)),
        well_value_ratio=float(au[j] * np.sqrt(vol) / np.exp(ln_u)),
    )


def smallest_passing_alpha(field, form, symbol, potential, B, D, eta, E, R0, alphas):
    """Sorted ``alpha`` values from ``alphas`` for which the region check passes, and the smallest."""
    ok = []
    for a in sorted(alphas):
        w = phi_alpha_field(field, a, B, D, eta, form.eps)
        if three_region_check(w, form, symbol, potential, E=E, R0=R0).passed:
            ok.append(a)
    return ok, (ok[0] if ok else None)


def sweep_point(field, kernel, potential, symbol, eps, mode, B, alpha, D, eta, R0,
                k=1, tol=1e-10, maxiter=None, seed=0, max_raise=3):
    """One row of the decay sweep at ``(eps, mode)``.

    Assembles the form, computes the ground state on the well's lattice
    component, and evaluates the decay ratios, the F+- inequality slack for
    ``Phi_alpha``, the region bounds and the sandwich constant. When the
    region check asks for a larger ``B`` (``B < C0 (1 + R0 + C3)``) the check
    is repeated with ``1.05 B_required``, at most ``max_raise`` times.

    Returns
    -------
    (dict, dict)
        The CSV row and the underlying objects.
    """
    from .operator import assemble
    from .spectra import lowest_eigenpairs

    grid = field.grid
    grid.check_alignment(eps)
    form = assemble(grid, kernel, potential, eps, mode)
    pairs = lowest_eigenpairs(form, k=k, tol=tol, maxiter=maxiter, seed=seed, component=grid.well_index)
    u = pairs[0]
    E = u.value
    weight = phi_alpha_field(field, alpha, B, D, eta, eps)
    decay = decay_report(u, field.values, eps, B, alpha, grid, weight)
    Vform = form.potential + form.kappa
    fpm = f_pm(field.values, Vform, v_phi(form.table, weight.phi_alpha), E, B, eps)
    lem = fpm_inequality(u, E, weight.phi_alpha, fpm, form)

    B_reg, raised = B, 0
    region = three_region_check(weight, form, symbol, potential, E=E, R0=R0)
    while region.omega_minus_ok is None and np.isfinite(region.B_required) and raised < max_raise:
        B_reg = 1.05 * region.B_required
        raised += 1
        w2 = phi_alpha_field(field, alpha, B_reg, D, eta, eps, delta=weight.delta)
        region = three_region_check(w2, form, symbol, potential, E=E, R0=R0)
    sand = sandwich_report(weight)
    row = {
        "epsilon": eps, "mode": mode, "E0": E, "r1": decay.r1, "r2_alpha": decay.r2, "r3": decay.r3,
        "slope_fit": decay.slope, "lemma23_slack": lem.slack,
        "region_flags": "".join("1" if v else ("0" if v is False else "-") for v in region.flags().values()),
        **region.constants(), "Cprime": sand["C_prime"], "B_region": B_reg, "in_window": E <= eps * R0,
    }
    return row, {"form": form, "pairs": pairs, "weight": weight, "decay": decay, "fpm_check": lem,
                 "region": region, "sandwich": sand, "fpm": fpm}
