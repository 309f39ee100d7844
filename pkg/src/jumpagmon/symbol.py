"""The symbols t0, t~0, their restriction to Sigma, and the matrix B(x).

``t~0(x, xi) = int (cosh(gamma.xi) - 1) K0(x, dgamma)`` is even, nonnegative and
uniformly convex in ``xi``; its Taylor expansion at 0 is ``<xi, B(x) xi> + O(|xi|^4)``
with ``B(x) = 1/2 int gamma gamma^T K0(x, dgamma)``.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, DomainError, HypothesisViolation, NumericalFailure
from .kernel import AtomicKernel, DensityKernel, GaussianProfile, KernelSpec, build_table


def coshm1(u):
    """``cosh(u) - 1`` without cancellation near 0."""
    return 2.0 * np.sinh(0.5 * u) ** 2


def omcos(u):
    """``1 - cos(u)``; accepts complex ``u``."""
    return 2.0 * np.sin(0.5 * u) ** 2


def cosh_quartic(u):
    """``cosh(u) - 1 - u^2/2`` with a series for small ``|u|``."""
    u = np.asarray(u, float)
    u2 = u * u
    series = u2 * u2 * (1 / 24 + u2 * (1 / 720 + u2 * (1 / 40320 + u2 / 3628800)))
    return np.where(np.abs(u) < 0.1, series, coshm1(u) - 0.5 * u2)


def _expm1_minus(q):
    """``exp(q) - 1 - q`` with a series for small ``q``."""
    q = np.asarray(q, float)
    series = q * q * (0.5 + q * (1 / 6 + q * (1 / 24 + q * (1 / 120 + q / 720))))
    return np.where(np.abs(q) < 1e-2, series, np.expm1(q) - q)


class SymbolEvaluator:
    """Evaluate ``t0``, ``t~0``, ``t~0^Sigma`` and ``B`` for a kernel.

    Parameters
    ----------
    kernel : KernelSpec
        Untilted kernel; only its leading part ``K0`` enters.
    method : {"auto", "quadrature"}
        ``auto`` uses closed forms for atomic and regular Gaussian kernels.
    rtol : float
        Relative tolerance of the radial quadrature.

    Notes
    -----
    Arguments ``x`` and ``xi`` have shape ``(..., d)`` and broadcast against
    each other; results drop the trailing axis.
    """

    def __init__(self, kernel: KernelSpec, method="auto", rtol=1e-10):
        if method not in ("auto", "quadrature"):
            raise ConfigError(f"unknown symbol method {method!r}; expected 'auto' or 'quadrature'")
        if kernel.tilted:
            raise ConfigError("symbols are defined for untilted kernels only")
        self.kernel = kernel
        self.dim = kernel.dimension
        self.rtol = rtol
        var = kernel.variant
        self.closed = isinstance(var, AtomicKernel) or (
            method == "auto" and isinstance(var, DensityKernel)
            and isinstance(var.profile, GaussianProfile) and not var.singular)
        self._sigma_tables = {}

    @property
    def c_max(self):
        return self.kernel.c_max

    # ------------------------------------------------------------ helpers

    def _prep(self, x, xi):
        x = np.asarray(x, float)
        xi = np.asarray(xi)
        if x.shape[-1:] != (self.dim,) or xi.shape[-1:] != (self.dim,):
            raise ConfigError(f"x and xi must end in an axis of length {self.dim}")
        shape = np.broadcast_shapes(x.shape, xi.shape)[:-1]
        return np.broadcast_to(x, shape + (self.dim,)), np.broadcast_to(xi, shape + (self.dim,)), shape

    def _check_strip(self, growth):
        if np.isfinite(self.c_max) and np.any(growth >= self.c_max):
            raise DomainError(f"|xi| = {np.max(growth):.6g} outside the admissible strip |xi| < {self.c_max}")

    def _gauss_const(self, x):
        var = self.kernel.variant
        p = var.profile
        w = var.spatial(x.reshape(-1, self.dim))
        return w * p.amplitude * (np.sqrt(np.pi) * p.scale) ** self.dim, p.scale ** 2

    def _integrate(self, x, xi, g, oscillatory=False):
        """``w(x) * int g(gamma . xi) rho`` by quadrature, one column per xi."""
        var = self.kernel.variant
        flat_xi = xi.reshape(-1, self.dim)
        uniq, inv = np.unique(flat_xi, axis=0, return_inverse=True)
        grow_part = np.imag(uniq) if oscillatory else np.real(uniq)
        growth = float(np.max(np.linalg.norm(grow_part, axis=1), initial=0.0))
        rad = var.radial(lambda gam: g(uniq @ gam.T), growth=growth, rtol=self.rtol)
        w = var.spatial(x.reshape(-1, self.dim))
        return w * rad[np.ravel(inv)]

    # ------------------------------------------------------------ symbols

    def t_tilde0(self, x, xi):
        """``int (cosh(gamma.xi) - 1) K0(x, dgamma)``.

        Raises
        ------
        DomainError
            If ``|xi| >= c_max``.
        """
        x, xi, shape = self._prep(x, xi)
        xi = np.asarray(xi, float)
        self._check_strip(np.linalg.norm(xi, axis=-1))
        var = self.kernel.variant
        if isinstance(var, AtomicKernel):
            a = var.weight_values(x.reshape(-1, self.dim))
            u = xi.reshape(-1, self.dim) @ var.offsets.T
            return np.sum(a * coshm1(u), axis=1).reshape(shape)
        if self.closed:
            C, s2 = self._gauss_const(x)
            q = 0.25 * s2 * np.sum(xi.reshape(-1, self.dim) ** 2, axis=1)
            return (C * np.expm1(q)).reshape(shape)
        return self._integrate(x, xi, coshm1).reshape(shape)

    def t0(self, x, xi):
        """``int (1 - cos(gamma.xi)) K0(x, dgamma)``; complex ``xi`` gives ``t0(x, i eta) = -t~0(x, eta)``."""
        x, xi, shape = self._prep(x, xi)
        is_complex = np.iscomplexobj(xi)
        self._check_strip(np.linalg.norm(np.imag(xi), axis=-1))
        var = self.kernel.variant
        flat = xi.reshape(-1, self.dim)
        if isinstance(var, AtomicKernel):
            a = var.weight_values(x.reshape(-1, self.dim))
            out = np.sum(a * omcos(flat @ var.offsets.T), axis=1)
        elif self.closed:
            C, s2 = self._gauss_const(x)
            q = 0.25 * s2 * np.sum(flat * flat, axis=1)
            out = -C * np.expm1(-q)
        else:
            out = self._integrate(x, xi, omcos, oscillatory=True)
        out = out.reshape(shape)
        return out if is_complex else np.real(out)

    def gradient_xi(self, x, xi):
        """``int gamma sinh(gamma.xi) K0(x, dgamma)``, shape (..., d)."""
        x, xi, shape = self._prep(x, xi)
        xi = np.asarray(xi, float)
        self._check_strip(np.linalg.norm(xi, axis=-1))
        var = self.kernel.variant
        flat = xi.reshape(-1, self.dim)
        if isinstance(var, AtomicKernel):
            a = var.weight_values(x.reshape(-1, self.dim))
            s = a * np.sinh(flat @ var.offsets.T)
            return (s @ var.offsets).reshape(shape + (self.dim,))
        if self.closed:
            C, s2 = self._gauss_const(x)
            q = 0.25 * s2 * np.sum(flat ** 2, axis=1)
            return ((C * np.exp(q) * 0.5 * s2)[:, None] * flat).reshape(shape + (self.dim,))
        cols = []
        for k in range(self.dim):
            cols.append(self._vector_integrate(x, xi, lambda gam, u, k=k: gam[None, :, k] * np.sinh(u)))
        return np.stack(cols, axis=-1).reshape(shape + (self.dim,))

    def _vector_integrate(self, x, xi, g):
        var = self.kernel.variant
        flat_xi = xi.reshape(-1, self.dim)
        uniq, inv = np.unique(flat_xi, axis=0, return_inverse=True)
        growth = float(np.max(np.linalg.norm(uniq, axis=1), initial=0.0))
        rad = var.radial(lambda gam: g(gam, uniq @ gam.T), growth=growth, rtol=self.rtol)
        w = var.spatial(x.reshape(-1, self.dim))
        return w * rad[np.ravel(inv)]

    def hessian_xi(self, x, xi):
        """``D^2_xi t~0 = int gamma gamma^T cosh(gamma.xi) K0``, shape (..., d, d)."""
        x, xi, shape = self._prep(x, xi)
        xi = np.asarray(xi, float)
        self._check_strip(np.linalg.norm(xi, axis=-1))
        var = self.kernel.variant
        d = self.dim
        flat = xi.reshape(-1, d)
        if isinstance(var, AtomicKernel):
            a = var.weight_values(x.reshape(-1, d))
            c = a * np.cosh(flat @ var.offsets.T)
            out = np.einsum("na,ai,aj->nij", c, var.offsets, var.offsets)
            return out.reshape(shape + (d, d))
        if self.closed:
            C, s2 = self._gauss_const(x)
            q = 0.25 * s2 * np.sum(flat ** 2, axis=1)
            pref = C * np.exp(q) * 0.5 * s2
            out = pref[:, None, None] * (np.eye(d)[None] + 0.5 * s2 * np.einsum("ni,nj->nij", flat, flat))
            return out.reshape(shape + (d, d))
        out = np.empty((flat.shape[0], d, d))
        for i in range(d):
            for j in range(i, d):
                vals = self._vector_integrate(
                    x, xi, lambda gam, u, i=i, j=j: (gam[:, i] * gam[:, j])[None] * np.cosh(u))
                out[:, i, j] = out[:, j, i] = vals
        return out.reshape(shape + (d, d))

    def hessian_B(self, x):
        """``B(x) = 1/2 int gamma gamma^T K0(x, dgamma)``.

        Raises
        ------
        HypothesisViolation
            If ``B(x)`` is not positive definite.
        """
        x = np.asarray(x, float)
        single = x.ndim == 1
        pts = x.reshape(-1, self.dim)
        if self.closed and isinstance(self.kernel.variant, DensityKernel):
            C, s2 = self._gauss_const(pts)
            B = (C * s2 / 4.0)[:, None, None] * np.eye(self.dim)[None]
        else:
            B = 0.5 * self.kernel.second_moment(pts)
        lam = np.linalg.eigvalsh(B)
        if np.any(lam[:, 0] <= 0):
            k = int(np.argmin(lam[:, 0]))
            raise HypothesisViolation(
                f"B(x) is not positive definite at x={pts[k].tolist()} (eigenvalues {lam[k].tolist()})")
        return B[0] if single else B

    def b_min_eig(self, x):
        B = self.hessian_B(x)
        return np.linalg.eigvalsh(B)[..., 0]

    def convexity_certificate(self, x, rho, samples=64, seed=0):
        """Sampled minimum eigenvalue of ``D^2_xi t~0(x, .)`` over the ball ``|xi| <= rho``.

        The origin is always sampled. Raises HypothesisViolation if the minimum is
        not positive or falls below ``lambda_min(2B(x))``.
        """
        if rho >= self.c_max:
            raise DomainError(f"ball radius {rho} reaches the strip boundary c_max={self.c_max}")
        x = np.asarray(x, float).reshape(self.dim)
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(samples, self.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = rho * rng.uniform(size=samples) ** (1.0 / self.dim)
        xis = np.vstack([np.zeros(self.dim), dirs * radii[:, None]])
        H = self.hessian_xi(x[None], xis)
        alpha = float(np.min(np.linalg.eigvalsh(H)[:, 0]))
        floor = float(np.linalg.eigvalsh(2.0 * self.hessian_B(x))[0])
        if alpha <= 0 or alpha < floor - 1e-10 * max(1.0, abs(floor)):
            raise HypothesisViolation(f"convexity certificate failed: alpha={alpha:.6g}, 2B floor={floor:.6g}")
        return alpha

    def quartic_remainder(self, x, xis):
        """``t~0(x, xi) - <xi, B(x) xi>`` and its ratio to ``|xi|^4``.

        Returns
        -------
        dict with arrays ``xi``, ``remainder``, ``ratio``.

        Raises
        ------
        DomainError
            If some ``|xi|`` exceeds ``min(1, c_max/4)``.
        NumericalFailure
            If a remainder is below ``-1e-12``.
        """
        x = np.asarray(x, float).reshape(self.dim)
        xis = np.asarray(xis, float).reshape(-1, self.dim)
        norms = np.linalg.norm(xis, axis=1)
        limit = min(1.0, self.c_max / 4.0)
        if np.any(norms > limit):
            raise DomainError(f"quartic expansion requires |xi| <= {limit}")
        var = self.kernel.variant
        if isinstance(var, AtomicKernel):
            a = var.weight_values(x[None])[0]
            rem = cosh_quartic(xis @ var.offsets.T) @ a
        elif self.closed:
            C, s2 = self._gauss_const(x[None])
            rem = C[0] * _expm1_minus(0.25 * s2 * norms ** 2)
        else:
            rem = self._integrate(np.broadcast_to(x, xis.shape), xis, cosh_quartic)
        if np.any(rem < -1e-12):
            raise NumericalFailure(f"negative quartic remainder {rem.min():.3e}", best_residual=float(rem.min()))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(norms > 0, rem / norms ** 4, np.nan)
        return {"xi": xis, "remainder": rem, "ratio": ratio}

    # ------------------------------------------------------ restricted symbol

    def sigma_table(self, grid, eps):
        key = (id(grid), float(eps))
        if key not in self._sigma_tables:
            self._sigma_tables[key] = build_table(self.kernel, grid, eps, part="k0")
        return self._sigma_tables[key]

    def t_tilde0_sigma(self, nodes, xi, grid, eps):
        """``t~0`` restricted to jumps from ``x`` that stay in Sigma.

        Uses the lattice realisation of ``K0(x, .)`` at the nodes; exact for
        atomic kernels.

        Parameters
        ----------
        nodes : int array, shape (n,)
        xi : array, shape (n, d)
        """
        tab = self.sigma_table(grid, eps)
        nodes = np.atleast_1d(np.asarray(nodes, int))
        xi = np.asarray(xi, float).reshape(len(nodes), self.dim)
        u = xi @ tab.gammas.T
        w = np.where(tab.targets[nodes] >= 0, tab.weights[nodes], 0.0)
        return np.sum(w * coshm1(u), axis=1)

    def t_tilde0_lattice(self, nodes, xi, grid, eps):
        """Lattice realisation of the unrestricted ``t~0`` at the nodes."""
        tab = self.sigma_table(grid, eps)
        nodes = np.atleast_1d(np.asarray(nodes, int))
        xi = np.asarray(xi, float).reshape(len(nodes), self.dim)
        return np.sum(tab.weights[nodes] * coshm1(xi @ tab.gammas.T), axis=1)
