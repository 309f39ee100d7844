"""Reversible jump kernels, their lattice quadrature, and hypothesis checks.

A kernel is ``K_eps(x, dgamma) = K0(x, dgamma) + eps * P(x, dgamma)`` where the
leading part ``K0`` is nonnegative and the perturbation ``P`` may be signed.
On a lattice of spacing ``h`` with ``eps / h = m`` an integer, a jump ``eps*gamma``
lands on the node ``x + h z`` with ``z = m gamma``.

Spatial weights enter through the midpoint ``x + eps*gamma/2`` so that
``k_eps(x, gamma) = k_eps(x + eps*gamma, -gamma)`` holds bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, HypothesisViolation, NumericalFailure

GL_ORDER = 16
GRADE_LEVELS = 60
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)
# exp(-45) ~ 3e-20: integrands are negligible beyond the profile cutoff
_CUTOFF_LOG = 45.0


def _as_field(w, dim):
    """Wrap a constant or callable spatial weight as a vectorised callable."""
    if callable(w):
        return w
    val = float(w)

    def const(points):
        return np.full(np.asarray(points).reshape(-1, dim).shape[0], val)

    const.constant = val
    return const


def _constant_value(w):
    return getattr(w, "constant", None)


# ---------------------------------------------------------------- profiles


@dataclass(frozen=True)
class GaussianProfile:
    """``s(r) = amplitude * exp(-(r/scale)^2)``; all exponential moments finite."""

    amplitude: float = 1.0
    scale: float = 1.0

    c_max = np.inf

    def __call__(self, r):
        return self.amplitude * np.exp(-(np.asarray(r) / self.scale) ** 2)

    def cutoff(self, growth=0.0, log_tol=_CUTOFF_LOG):
        s2 = self.scale ** 2
        return 0.5 * (growth * s2 + np.sqrt(growth ** 2 * s2 ** 2 + 4 * s2 * (log_tol + 5.0)))


@dataclass(frozen=True)
class CompactProfile:
    """``s(r) = amplitude * (1 - (r/radius)^2)^3`` on ``r < radius``, zero beyond."""

    amplitude: float = 1.0
    radius: float = 1.0

    c_max = np.inf

    def __call__(self, r):
        r = np.asarray(r, float)
        t = np.clip(1.0 - (r / self.radius) ** 2, 0.0, None)
        return self.amplitude * t ** 3

    def cutoff(self, growth=0.0, log_tol=_CUTOFF_LOG):
        return self.radius


@dataclass(frozen=True)
class ExponentialProfile:
    """``s(r) = amplitude * exp(-rate r)``; exponential moments finite only for c < rate."""

    amplitude: float = 1.0
    rate: float = 1.0

    @property
    def c_max(self):
        return self.rate

    def __call__(self, r):
        return self.amplitude * np.exp(-self.rate * np.asarray(r))

    def cutoff(self, growth=0.0, log_tol=_CUTOFF_LOG):
        gap = self.rate - growth
        if gap <= 0:
            raise HypothesisViolation(
                f"exponential moment with c={growth} diverges for rate {self.rate}")
        return (log_tol + 5.0 * np.log1p(log_tol / gap)) / gap


# ---------------------------------------------------------- radial quadrature


def _panel_nodes(breaks):
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    r = (mid[:, None] + half[:, None] * _GL_X).ravel()
    w = (half[:, None] * _GL_W).ravel()
    return r, w


def _subdivide(base, pieces):
    t = np.linspace(0.0, 1.0, pieces + 1)[:-1]
    inner = (base[:-1, None] + (base[1:] - base[:-1])[:, None] * t).ravel()
    return np.append(inner, base[-1])


def radial_integrate(dim, rho, f, r_lo, r_hi, graded=False, rtol=1e-10, max_doublings=9):
    """Integrate ``f(gamma) rho(|gamma|)`` over the shell ``r_lo <= |gamma| <= r_hi``.

    Composite Gauss-Legendre panels in ``r`` times (in 2D) a uniform angular
    trapezoid; panels and angles are doubled until the relative change drops
    below ``rtol``.

    Parameters
    ----------
    f : callable
        Maps jump vectors ``(q, dim)`` to values ``(k, q)``.
    graded : bool
        Dyadic grading towards ``r = 0`` for singular radial densities.

    Returns
    -------
    ndarray, shape (k,)
    """
    if r_hi <= r_lo:
        probe = np.asarray(f(np.zeros((1, dim))))
        return np.zeros(probe.shape[0])
    if graded and r_lo == 0.0:
        base = np.concatenate([[0.0], r_hi * 2.0 ** -np.arange(GRADE_LEVELS, 0, -1), [r_hi]])
    else:
        base = np.array([r_lo, r_hi], float)
    pieces, n_ang = 2, 32
    prev = None
    for _ in range(max_doublings):
        r, w = _panel_nodes(_subdivide(base, pieces))
        w = w * rho(r)
        if dim == 1:
            gam = np.concatenate([r, -r])[:, None]
            wt = np.concatenate([w, w])
        else:
            theta = 2 * np.pi * np.arange(n_ang) / n_ang
            dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
            gam = (r[:, None, None] * dirs[None]).reshape(-1, 2)
            wt = np.repeat(w * r * (2 * np.pi / n_ang), n_ang)
        fv = np.asarray(f(gam))
        vals = fv @ wt
        # relative to the integral of |f rho| so that vanishing integrals converge
        scale = np.abs(fv) @ np.abs(wt)
        if prev is not None and np.all(np.abs(vals - prev) <= rtol * scale + 1e-300):
            return vals
        prev = vals
        pieces *= 2
        n_ang *= 2
    raise NumericalFailure("radial quadrature did not converge",
                           best_residual=float(np.max(np.abs(vals - prev) / (scale + 1e-300))))


# ----------------------------------------------------------------- variants


@dataclass(frozen=True)
class Atom:
    offset: tuple
    weight: object = 1.0


class AtomicKernel:
    """Finite sum of weighted point masses ``sum_i a_i(x) delta_{gamma_i}``."""

    def __init__(self, atoms: Sequence[Atom], dim: int):
        self.dim = int(dim)
        self.offsets = np.array([np.atleast_1d(np.asarray(a.offset, float)) for a in atoms])
        if self.offsets.ndim != 2 or self.offsets.shape[1] != self.dim:
            raise ConfigError(f"atom offsets must be vectors of length {self.dim}")
        if np.any(np.all(self.offsets == 0, axis=1)):
            raise ConfigError("atom at gamma = 0 is not a jump")
        self.weights = [_as_field(a.weight, self.dim) for a in atoms]
        self.raw_weights = [a.weight for a in atoms]

    c_max = np.inf

    @property
    def singular(self):
        return False

    def weight_values(self, points):
        """``(P, n_atoms)`` weights ``a_i`` at the given points."""
        pts = np.asarray(points, float).reshape(-1, self.dim)
        return np.stack([w(pts) for w in self.weights], axis=1)

    def integrate(self, x, f, r_lo=0.0, r_hi=np.inf, growth=0.0, absolute=False, rtol=1e-10):
        r = np.linalg.norm(self.offsets, axis=1)
        keep = (r >= r_lo) & (r <= r_hi)
        a = self.weight_values(x)[:, keep]
        if absolute:
            a = np.abs(a)
        vals = np.asarray(f(self.offsets[keep]))
        return a @ vals.T

    def partner_index(self):
        """Index of the atom at ``-gamma_i`` for each atom, or -1."""
        idx = np.full(len(self.offsets), -1)
        for i, g in enumerate(self.offsets):
            hit = np.nonzero(np.all(np.abs(self.offsets + g) < 1e-12, axis=1))[0]
            if hit.size:
                idx[i] = hit[0]
        return idx

    def structurally_reversible(self):
        """Each atom has a partner at the opposite offset carrying the same weight."""
        for i, j in enumerate(self.partner_index()):
            if j < 0:
                return False
            wi, wj = self.raw_weights[i], self.raw_weights[j]
            if callable(wi) or callable(wj):
                same_expr = getattr(wi, "expression", None) is not None and (
                    getattr(wi, "expression", None) == getattr(wj, "expression", None))
                if wi is not wj and not same_expr:
                    return False
            elif float(wi) != float(wj):
                return False
        return True

    def lattice_offsets(self, m):
        z = self.offsets * m
        zi = np.rint(z).astype(int)
        bad = np.any(np.abs(z - zi) > 1e-9 * np.maximum(1.0, np.abs(z)), axis=1)
        if np.any(bad):
            raise ConfigError(
                f"atom offset {self.offsets[bad][0].tolist()} scaled by eps/h={m} is not a lattice vector")
        return zi

    def lattice_weights(self, grid, eps, m, R, rule, part):
        z = self.lattice_offsets(m)
        if part == "k0" or rule == "left":
            at = grid.points
            w = np.stack([wf(at) for wf in self.weights], axis=1)
        else:
            w = np.empty((grid.size, len(z)))
            for k, wf in enumerate(self.weights):
                w[:, k] = wf(grid.well + grid.h * (2 * grid.ijk + z[k]) / 2.0)
        zeros = np.zeros(grid.size)
        return z, w, zeros, zeros.copy(), zeros.copy()

    def describe(self):
        return {"variant": "atomic", "offsets": self.offsets.tolist()}


class DensityKernel:
    """``K0(x, dgamma) = w(x) s(|gamma|) |gamma|^{-d-s0} dgamma`` (``s0`` optional)."""

    def __init__(self, profile, dim, spatial_weight=1.0, singular_exponent=None):
        self.dim = int(dim)
        self.profile = profile
        self.spatial = _as_field(spatial_weight, self.dim)
        if singular_exponent is not None and not 0.0 <= singular_exponent < 2.0:
            raise ConfigError(f"singular exponent must lie in [0, 2), got {singular_exponent}")
        self.s0 = singular_exponent

    @property
    def c_max(self):
        return self.profile.c_max

    @property
    def singular(self):
        return self.s0 is not None

    def rho(self, r):
        r = np.asarray(r, float)
        base = self.profile(r)
        if self.s0 is None:
            return base
        with np.errstate(divide="ignore"):
            return base * r ** (-self.dim - self.s0)

    def radial(self, f, r_lo=0.0, r_hi=np.inf, growth=0.0, rtol=1e-10):
        """``int f(gamma) rho(|gamma|) dgamma`` over a shell, without the spatial weight."""
        r_hi = min(r_hi, self.profile.cutoff(growth))
        return radial_integrate(self.dim, self.rho, f, r_lo, r_hi, graded=self.singular, rtol=rtol)

    def integrate(self, x, f, r_lo=0.0, r_hi=np.inf, growth=0.0, absolute=False, rtol=1e-10):
        rad = self.radial(f, r_lo, r_hi, growth, rtol)
        w = self.spatial(np.asarray(x, float).reshape(-1, self.dim))
        if absolute:
            return np.abs(w)[:, None] * np.abs(rad)[None, :]
        return w[:, None] * rad[None, :]

    def reference_mass(self):
        one = lambda g: np.ones((1, g.shape[0]))
        sq = lambda g: np.sum(g ** 2, axis=1)[None]
        return abs(self.radial(one, 1.0)[0]) + abs(self.radial(sq, 0.0, 1.0)[0])

    def tail_mass(self, R):
        """``int_{|gamma| > R} rho`` (per unit spatial weight)."""
        return float(self.radial(lambda g: np.ones((1, g.shape[0])), R)[0])

    def default_radius(self, tol):
        return max(4.0, float(self.profile.cutoff(0.0, np.log(1.0 / tol))))

    def lattice_offsets(self, m, R):
        rad = int(np.floor(R * m + 1e-9))
        axes = [np.arange(-rad, rad + 1)] * self.dim
        z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        n2 = np.sum(z ** 2, axis=1)
        keep = (n2 > 0) & (n2 <= (R * m) ** 2 + 1e-9)
        return z[keep]

    def lattice_weights(self, grid, eps, m, R, rule, part):
        z = self.lattice_offsets(m, R)
        cell = (1.0 / m) ** self.dim
        s = self.rho(np.linalg.norm(z, axis=1) / m) * cell
        const = _constant_value(self.spatial)
        if const is not None:
            w = np.broadcast_to(const * s, (grid.size, len(z))).copy()
        elif part == "k0" or rule == "left":
            w = self.spatial(grid.points)[:, None] * s[None, :]
        else:
            w = np.empty((grid.size, len(z)))
            for k in range(len(z)):
                w[:, k] = self.spatial(grid.well + grid.h * (2 * grid.ijk + z[k]) / 2.0) * s[k]
        wx = self.spatial(grid.points)
        tail = wx * self.tail_mass(R)
        inner = 1.0 / m
        m2 = self.radial(lambda g: np.sum(g ** 2, axis=1)[None], 0.0, inner)[0]
        dropped_m2 = wx * m2
        if self.singular:
            dropped_mass = np.full(grid.size, np.nan)
        else:
            dropped_mass = wx * float(self.rho(0.0)) * cell
        return z, w, tail, dropped_mass, dropped_m2

    def describe(self):
        return {"variant": "density", "profile": repr(self.profile), "singular_exponent": self.s0}


# ------------------------------------------------------------------ declaration


@dataclass(frozen=True)
class KernelSpec:
    """Declarative kernel ``K_eps = K0 + eps * P``, optionally tilted.

    Parameters
    ----------
    dimension : int
    variant : AtomicKernel or DensityKernel
        The nonnegative leading part ``K0``.
    perturbation : AtomicKernel or DensityKernel, optional
        ``P`` with ``R1_eps = eps * P``; may be signed.
    tilts : tuple of (callable, float)
        Factors ``exp(c (F(x + eps gamma) - F(x)) / (2 eps))`` applied to ``K_eps``.
    """

    dimension: int
    variant: object
    perturbation: object = None
    tilts: tuple = field(default=())

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.variant.dim != self.dimension:
            raise ConfigError("variant dimension does not match kernel dimension")

    @property
    def c_max(self):
        c = self.variant.c_max
        if self.perturbation is not None:
            c = min(c, self.perturbation.c_max)
        return c

    @property
    def tilted(self):
        return len(self.tilts) > 0

    def with_tilt(self, F, coef):
        return replace(self, tilts=self.tilts + ((F, float(coef)),))

    def k0_integrate(self, x, f, r_lo=0.0, r_hi=np.inf, growth=0.0, rtol=1e-10):
        """``int f(gamma) K0(x, dgamma)`` for each point in ``x``; shape (P, k)."""
        return self.variant.integrate(x, f, r_lo, r_hi, growth, rtol=rtol)

    def second_moment(self, x):
        """``int gamma gamma^T K0(x, dgamma)``, shape (P, d, d)."""
        d = self.dimension

        def outer(g):
            return np.einsum("qi,qj->ijq", g, g).reshape(d * d, -1)

        return self.k0_integrate(x, outer).reshape(-1, d, d)


# --------------------------------------------------------------- quadrature


@dataclass
class QuadratureTable:
    """Lattice realisation of ``K_eps(x, .)`` at every node of a grid.

    Attributes
    ----------
    offsets : (M, d) int
        Lattice offsets ``z``; the jump lands at ``x + h z`` (``gamma = h z / eps``).
    weights : (N, M)
        Jump weights (cell volume already included).
    targets : (N, M) int
        Node index of ``x + h z``; -1 marks an exit from Sigma.
    tail_mass : (N,)
        Mass of ``K0`` beyond the truncation radius.
    dropped_mass : (N,)
        Mass of the excluded ``z = 0`` cell (NaN for singular profiles).
    dropped_moment2 : (N,)
        ``int_{|gamma| < h/eps} |gamma|^2 K0``.
    """

    grid: object
    eps: float
    offsets: np.ndarray
    weights: np.ndarray
    targets: np.ndarray
    radius: float
    tail_mass: np.ndarray
    dropped_mass: np.ndarray
    dropped_moment2: np.ndarray
    part: str = "full"

    @property
    def gammas(self):
        return self.offsets * self.grid.h / self.eps

    @property
    def exits(self):
        return self.targets < 0

    def killing(self):
        """``kappa(x)``: total weight of jumps leaving Sigma."""
        return np.sum(np.where(self.exits, self.weights, 0.0), axis=1)

    def total(self):
        return np.sum(self.weights, axis=1)


@dataclass
class QuadratureAtoms:
    """Jump atoms of ``K_eps(x, .)`` at a single node."""

    x: np.ndarray
    offsets: np.ndarray
    weights: np.ndarray
    exit: np.ndarray
    radius: float
    tail_mass: float
    dropped_mass: float


def _variant_table(variant, grid, eps, m, R, rule, part):
    return variant.lattice_weights(grid, eps, m, R, rule, part)


def build_table(kernel: KernelSpec, grid, eps, R=None, part="full", rule="midpoint",
                tail_tol=1e-6):
    """Quadrature table of ``K_eps`` (``part="full"``) or of ``K0`` at ``x`` (``part="k0"``).

    Raises
    ------
    ConfigError
        If ``eps/h`` is not an integer or an atom misses the lattice.
    NumericalFailure
        If the truncated tail exceeds ``tail_tol`` relative to the kernel mass.
    HypothesisViolation
        If ``K_eps`` has a negative weight.
    """
    if part not in ("full", "k0"):
        raise ConfigError(f"unknown table part {part!r}; expected 'full' or 'k0'")
    if rule not in ("midpoint", "left"):
        raise ConfigError(f"unknown weight rule {rule!r}; expected 'midpoint' or 'left'")
    m = grid.check_alignment(eps)
    var = kernel.variant
    if isinstance(var, DensityKernel):
        R = var.default_radius(1e-12) if R is None else float(R)
        if R < 1:
            raise ConfigError(f"truncation radius must be >= 1, got {R}")
        ref = var.reference_mass()
        tail = var.tail_mass(R)
        if tail > tail_tol * ref:
            raise NumericalFailure(
                f"truncated tail mass {tail:.3e} at R={R} exceeds tolerance {tail_tol:.1e}",
                best_residual=tail / ref)
    else:
        R = float(np.max(np.linalg.norm(var.offsets, axis=1))) if R is None else float(R)

    z, w, tail, dmass, dm2 = _variant_table(var, grid, eps, m, R, rule, part)
    if part == "full" and kernel.perturbation is not None:
        zp, wp, *_ = _variant_table(kernel.perturbation, grid, eps, m, R, rule, part)
        z, w = _merge(z, w, zp, eps * wp)
        if np.any(w < 0):
            raise HypothesisViolation(
                f"K_eps has negative weight {w.min():.3e}: perturbation too large for eps={eps}")
    targets = grid.lookup(grid.ijk[:, None, :] + z[None, :, :])
    if part == "full":
        for F, coef in kernel.tilts:
            fx = F(grid.points)
            fy = F((grid.points[:, None, :] + grid.h * z[None, :, :]).reshape(-1, grid.dim))
            dF = fy.reshape(grid.size, len(z)) - fx[:, None]
            w = w * np.exp(coef * dF / (2.0 * eps))
    return QuadratureTable(grid, float(eps), z, w, targets, R, tail, dmass, dm2, part)


def _merge(z1, w1, z2, w2):
    keys = {tuple(r): i for i, r in enumerate(z1)}
    extra = [tuple(r) for r in z2 if tuple(r) not in keys]
    z = np.vstack([z1] + ([np.array(extra, int)] if extra else []))
    for k, r in enumerate(extra):
        keys[r] = len(z1) + k
    w = np.zeros((w1.shape[0], len(z)))
    w[:, : len(z1)] = w1
    for j, r in enumerate(z2):
        w[:, keys[tuple(r)]] += w2[:, j]
    return z, w


def quadrature(kernel: KernelSpec, grid, node, eps, R=None, tail_tol=1e-6):
    """Jump atoms of ``K_eps`` at one grid node.

    Parameters
    ----------
    node : int
        Node index in ``grid``.
    """
    tab = build_table(kernel, grid, eps, R=R, tail_tol=tail_tol)
    return QuadratureAtoms(
        x=grid.points[node].copy(),
        offsets=tab.offsets.copy(),
        weights=tab.weights[node].copy(),
        exit=tab.exits[node].copy(),
        radius=tab.radius,
        tail_mass=float(tab.tail_mass[node]),
        dropped_mass=float(tab.dropped_mass[node]),
    )


def reversibility_residual(kernel: KernelSpec, eps, grid, rule="midpoint", R=None):
    """``max |k_eps(x, gamma) - k_eps(x + eps gamma, -gamma)|`` over interior pairs."""
    tab = build_table(kernel, grid, eps, R=R, rule=rule)
    col = {tuple(r): j for j, r in enumerate(tab.offsets)}
    partner = np.array([col.get(tuple(-r), -1) for r in tab.offsets])
    worst = 0.0
    for j, pj in enumerate(partner):
        t = tab.targets[:, j]
        ok = t >= 0
        if pj < 0:
            if np.any(ok & (tab.weights[:, j] != 0)):
                worst = max(worst, float(np.max(np.abs(tab.weights[ok, j]))))
            continue
        diff = np.abs(tab.weights[ok, j] - tab.weights[t[ok], pj])
        if diff.size:
            worst = max(worst, float(diff.max()))
    return worst


# --------------------------------------------------------------- validation


@dataclass
class ValidationReport:
    """Moment, nondegeneracy and continuity diagnostics at sample points."""

    sample_points: np.ndarray
    c_values: np.ndarray
    exp_moment: np.ndarray
    small_moment2: np.ndarray
    pert_exp_moment: np.ndarray
    pert_small_moment2: np.ndarray
    b_min_eig: np.ndarray
    continuity: np.ndarray
    reversible: bool
    flags: list

    @property
    def passed(self):
        return not self.flags

    def as_dict(self):
        return {
            "c_values": self.c_values.tolist(),
            "exp_moment": self.exp_moment.tolist(),
            "small_moment2": self.small_moment2.tolist(),
            "pert_exp_moment": self.pert_exp_moment.tolist(),
            "pert_small_moment2": self.pert_small_moment2.tolist(),
            "b_min_eig": self.b_min_eig.tolist(),
            "continuity": self.continuity.tolist(),
            "reversible": self.reversible,
            "flags": list(self.flags),
            "passed": self.passed,
        }


def _moments(variant, x, c_values, absolute):
    exp_m = np.empty((len(x), len(c_values)))
    for k, c in enumerate(c_values):
        f = lambda g, c=c: np.exp(c * np.linalg.norm(g, axis=1))[None]
        exp_m[:, k] = variant.integrate(x, f, r_lo=1.0, growth=c, absolute=absolute)[:, 0]
    sq = lambda g: np.sum(g ** 2, axis=1)[None]
    small = variant.integrate(x, sq, r_hi=1.0, absolute=absolute)[:, 0]
    return exp_m, small


def validate_hypotheses(kernel: KernelSpec, sample_points, c_values, shift=1e-3, bound=1e8):
    """Check moment bounds, nondegeneracy of ``B`` and x-continuity of ``K0``.

    Parameters
    ----------
    sample_points : array_like, shape (P, d)
    c_values : sequence of float
        Exponential rates; each must be below ``kernel.c_max``.
    shift : float
        Step used for the continuity modulus.
    bound : float
        Moments above this value are flagged as unbounded.

    Raises
    ------
    HypothesisViolation
        If some ``c >= c_max`` or the moment quadrature does not converge.
    """
    x = np.asarray(sample_points, float).reshape(-1, kernel.dimension)
    c_values = np.atleast_1d(np.asarray(c_values, float))
    if np.any(c_values <= 0):
        raise ConfigError("c values must be positive")
    bad = c_values[c_values >= kernel.c_max]
    if bad.size:
        raise HypothesisViolation(f"c={bad[0]} is not below c_max={kernel.c_max}")
    flags = []
    try:
        exp_m, small = _moments(kernel.variant, x, c_values, absolute=False)
        if kernel.perturbation is not None:
            pexp, psmall = _moments(kernel.perturbation, x, c_values, absolute=True)
        else:
            pexp, psmall = np.zeros_like(exp_m), np.zeros_like(small)
        cont = np.empty((len(x), len(c_values)))
        unit = np.eye(kernel.dimension)
        for k, c in enumerate(c_values):
            f = lambda g, c=c: (np.sum(g ** 2, axis=1) * np.exp(c * np.linalg.norm(g, axis=1)))[None]
            base = kernel.k0_integrate(x, f, growth=c)[:, 0]
            worst = np.zeros(len(x))
            for e in unit:
                moved = kernel.k0_integrate(x + shift * e, f, growth=c)[:, 0]
                worst = np.maximum(worst, np.abs(moved - base))
            cont[:, k] = worst
    except NumericalFailure as exc:
        raise HypothesisViolation(f"moment quadrature failed: {exc}") from exc

    B = 0.5 * kernel.second_moment(x)
    bmin = np.linalg.eigvalsh(B)[:, 0]
    if np.any(bmin <= 1e-12 * np.maximum(1.0, np.abs(np.linalg.eigvalsh(B)[:, -1]))):
        flags.append("nondegeneracy: B(x) has a zero eigenvalue at "
                     f"{x[np.argmin(bmin)].tolist()} (min eig {bmin.min():.3e})")
    finite = np.all(np.isfinite(exp_m)) and np.all(np.isfinite(small))
    if not finite or exp_m.max() > bound or small.max() > bound:
        flags.append("moment bound: exponential or second moment unbounded")
    if pexp.max(initial=0) > bound or psmall.max(initial=0) > bound:
        flags.append("moment bound: perturbation moments unbounded")
    if isinstance(kernel.variant, AtomicKernel):
        reversible = kernel.variant.structurally_reversible()
        if not reversible:
            flags.append("reversibility: atoms do not pair at opposite offsets with equal weights")
    else:
        reversible = True
    if isinstance(kernel.variant, AtomicKernel):
        neg = [i for i, wf in enumerate(kernel.variant.weights) if np.any(wf(x) < 0)]
        if neg:
            flags.append(f"positivity: atom weights negative for atoms {neg}")
    return ValidationReport(x, c_values, exp_m, small, pexp, psmall, bmin, cont, reversible, flags)


# ------------------------------------------------------- ground state transform


@dataclass
class GroundStateResult:
    kernel: KernelSpec
    potential: np.ndarray
    C: float


def reversible_base(kernel: KernelSpec, F: Callable):
    """``K_tilde = exp(-(F(x+eps gamma) - F(x)) / 2eps) K``: reversible for ``exp(-F/eps) dx``."""
    return kernel.with_tilt(F, -1.0)


def ground_state_transform(base: KernelSpec, F: Callable, grid, eps, R=None):
    """Conjugate a pure-jump kernel by ``exp(F / 2eps)``.

    Returns the tilted kernel ``K_eps = exp((F(x+eps gamma) - F(x)) / 2eps) K_tilde``
    together with ``V_eps(x) = sum (K_tilde - K_eps)(x, .)`` on the nodes and
    ``C = max(0, -min V_eps) / eps``.

    Raises
    ------
    HypothesisViolation
        If the base kernel has infinite mass or the tilt exhausts the
        exponential-moment budget (``sup |grad F| / 2 >= c_max``).
    """
    if getattr(base.variant, "singular", False):
        raise HypothesisViolation("ground-state transform needs a kernel with finite total mass")
    grad = grid.gradient(F(grid.points))
    slope = 0.5 * float(np.max(np.linalg.norm(grad, axis=1)))
    if slope >= base.c_max:
        raise HypothesisViolation(
            f"tilted kernel needs exponential moments up to {slope:.3g} but c_max={base.c_max}")
    tilted = base.with_tilt(F, +1.0)
    t_base = build_table(base, grid, eps, R=R)
    t_new = build_table(tilted, grid, eps, R=R)
    V = np.sum(t_base.weights - t_new.weights, axis=1)
    C = max(0.0, -float(V.min())) / eps
    return GroundStateResult(tilted, V, C)
