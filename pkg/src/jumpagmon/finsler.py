"""Agmon-Finsler distance from the eikonal Hamiltonian ``t~0(x, xi) - V0(x)``.

The length of a velocity ``v`` at ``x`` is the support function
``l(x, v) = sup { v.xi : t~0(x, xi) <= V0(x) }``; the distance to the well is the
shortest-path value of this length over an extended lattice stencil.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import ConfigError, DomainError, HypothesisViolation, NumericalFailure

_CHUNK = 400_000


class LengthOracle:
    """Support function of the sublevel set ``{xi : t~0(x, xi) <= V0(x)}``.

    Parameters
    ----------
    symbol : SymbolEvaluator
    potential : PotentialSpec
    n_dirs : int
        Boundary samples on the full circle (2D). Must be even; the set is
        symmetric so only half of them are solved for.
    tol : float
        Absolute/relative tolerance of the radial root.
    """

    def __init__(self, symbol, potential, n_dirs=64, tol=1e-12, max_iter=200):
        if n_dirs % 2:
            raise ConfigError("n_dirs must be even")
        self.symbol = symbol
        self.potential = potential
        self.dim = symbol.dim
        self.n_dirs = int(n_dirs)
        self.tol = tol
        self.max_iter = max_iter
        theta = 2 * np.pi * np.arange(self.n_dirs) / self.n_dirs
        self.theta = theta
        self.dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1) if self.dim == 2 else None

    def radial_solve(self, x, e, v0=None):
        """Root ``R >= 0`` of ``t~0(x, R e) = V0(x)`` for unit directions ``e``.

        Newton iteration started above the root at the quadratic estimate
        ``sqrt(V0 / <e, B e>)``; on a convex increasing function it decreases
        monotonically to the root.

        Raises
        ------
        DomainError
            If the root lies outside the strip ``|xi| < c_max``.
        """
        x = np.asarray(x, float).reshape(-1, self.dim)
        e = np.asarray(e, float)
        e = np.broadcast_to(e, x.shape) if e.ndim == 1 else e.reshape(-1, self.dim)
        V = self.potential.v0(x) if v0 is None else np.asarray(v0, float).reshape(-1)
        if np.any(V < 0):
            raise DomainError("V0 is negative; the sublevel set is empty")
        B = self.symbol.hessian_B(x)
        quad = np.einsum("ni,nij,nj->n", e, B, e)
        R = np.sqrt(V / quad)
        cmax = self.symbol.c_max
        if np.isfinite(cmax):
            cap = cmax * (1 - 1e-12)
            capped = R > cap
            R = np.where(capped, cap, R)
            if np.any(capped):
                t_cap = self.symbol.t_tilde0(x[capped], cap * e[capped])
                if np.any(t_cap < V[capped]):
                    raise DomainError(f"radial root lies beyond the strip |xi| < {cmax}")
        active = V > 0
        for _ in range(self.max_iter):
            if not np.any(active):
                break
            xa, ea, Ra = x[active], e[active], R[active]
            f = self.symbol.t_tilde0(xa, Ra[:, None] * ea) - V[active]
            df = np.einsum("ni,ni->n", self.symbol.gradient_xi(xa, Ra[:, None] * ea), ea)
            step = np.where(df > 0, f / np.where(df > 0, df, 1.0), 0.0)
            step = np.maximum(step, 0.0)
            R[active] = Ra - step
            done = step <= self.tol * np.maximum(1.0, Ra)
            idx = np.nonzero(active)[0]
            active[idx[done]] = False
        else:
            raise NumericalFailure("radial Newton iteration did not converge")
        return R

    def boundary(self, x):
        """Radii ``R(theta_k)`` of the sublevel boundary, shape (P, n_dirs) (2D) or (P, 1)."""
        x = np.asarray(x, float).reshape(-1, self.dim)
        if self.dim == 1:
            return self.radial_solve(x, np.ones(1))[:, None]
        half = self.n_dirs // 2
        out = np.empty((len(x), self.n_dirs))
        V = self.potential.v0(x)
        rows_per = max(1, _CHUNK // half)
        for s in range(0, len(x), rows_per):
            xs = np.repeat(x[s:s + rows_per], half, axis=0)
            es = np.tile(self.dirs[:half], (min(rows_per, len(x) - s), 1))
            vs = np.repeat(V[s:s + rows_per], half)
            R = self.radial_solve(xs, es, v0=vs).reshape(-1, half)
            out[s:s + rows_per, :half] = R
            out[s:s + rows_per, half:] = R
        return out

    def support_from_boundary(self, radii, v):
        """Support values ``l(x, v)`` from sampled boundaries.

        Parameters
        ----------
        radii : (P, n_dirs) or (P, 1) in 1D
        v : (M, d)

        Returns
        -------
        (P, M)
        """
        v = np.asarray(v, float).reshape(-1, self.dim)
        if self.dim == 1:
            return radii[:, :1] * np.abs(v[:, 0])[None, :]
        out = np.empty((radii.shape[0], len(v)))
        n = self.n_dirs
        rows = np.arange(radii.shape[0])
        for j, vj in enumerate(v):
            proj = self.dirs @ vj
            h = radii * proj[None, :]
            k = np.argmax(h, axis=1)
            h0 = h[rows, k]
            hm = h[rows, (k - 1) % n]
            hp = h[rows, (k + 1) % n]
            curv = 2 * h0 - hm - hp
            # vertex of the parabola through three equally spaced samples
            bump = np.where(curv > 0, (hp - hm) ** 2 / (8 * np.where(curv > 0, curv, 1.0)), 0.0)
            out[:, j] = h0 + bump
        return out

    def length(self, x, v):
        """``l(x, v)`` for points ``x`` (P, d) and one or more velocities; shape (P, M)."""
        x = np.asarray(x, float).reshape(-1, self.dim)
        v = np.asarray(v, float).reshape(-1, self.dim)
        return self.support_from_boundary(self.boundary(x), v)


def stencil(dim, radius):
    """Coprime integer offsets with ``|z| <= radius``, one per +/- pair."""
    if dim == 1:
        return np.array([[1]])
    r = int(np.floor(radius))
    out = []
    for i in range(-r, r + 1):
        for j in range(-r, r + 1):
            if (i, j) == (0, 0) or i * i + j * j > radius * radius + 1e-12:
                continue
            if gcd(abs(i), abs(j)) != 1:
                continue
            if i > 0 or (i == 0 and j > 0):
                out.append((i, j))
    return np.array(out, int)


@dataclass
class DistanceField:
    """Shortest-path distance on the grid with eikonal diagnostics.

    Attributes
    ----------
    values : (N,)
        ``d`` at the nodes.
    gradient : (N, d)
        Upwind one-sided gradient.
    residual_eq : (N,)
        ``t~0(x, grad_h d) - V0(x)`` with the upwind gradient.
    residual_ineq : (N,)
        The same with the most favourable one-sided gradient.
    cut_mask : (N,) bool
        Nodes where forward and backward differences disagree by more than ``sqrt(h)``.
    edges : tuple of arrays
        ``(tail, head, cost)`` of the undirected graph.
    """

    grid: object
    values: np.ndarray
    gradient: np.ndarray
    residual_eq: np.ndarray
    residual_ineq: np.ndarray
    cut_mask: np.ndarray
    edges: tuple
    stencil_radius: float
    oracle: LengthOracle


def _edge_costs(grid, oracle, offsets, refine_radius):
    h = grid.h
    lo2 = 2 * grid.corner
    shape2 = tuple(2 * s - 1 for s in grid.shape)
    axes = [np.arange(a, a + s) for a, s in zip(lo2, shape2)]
    q = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.dim)
    pts = grid.well + 0.5 * h * q
    ell = oracle.support_from_boundary(oracle.boundary(pts), offsets).reshape(shape2 + (len(offsets),))

    tails, heads, costs = [], [], []
    node_q = 2 * grid.ijk - lo2
    for j, z in enumerate(offsets):
        b = grid.lookup(grid.ijk + z)
        a = np.nonzero(b >= 0)[0]
        b = b[a]
        qa = node_q[a]
        f0 = ell[tuple(qa.T) + (j,)]
        f1 = ell[tuple((qa + z).T) + (j,)]
        f2 = ell[tuple((qa + 2 * z).T) + (j,)]
        cost = h * (f0 + 4 * f1 + f2) / 6.0
        near = np.linalg.norm(grid.points[a] - grid.well, axis=1) <= refine_radius * h * (np.linalg.norm(z) + 1)
        if np.any(near):
            xa = grid.points[a[near]]
            quarter = np.concatenate([xa + 0.25 * h * z, xa + 0.75 * h * z])
            lq = oracle.length(quarter, z[None])[:, 0].reshape(2, -1)
            cost[near] = h * (f0[near] + 4 * lq[0] + 2 * f1[near] + 4 * lq[1] + f2[near]) / 12.0
        tails.append(a)
        heads.append(b)
        costs.append(cost)
    return np.concatenate(tails), np.concatenate(heads), np.concatenate(costs)


def _upwind(a, b):
    """Godunov choice between backward ``a`` and forward ``b`` differences (NaN = missing)."""
    use_a = (a > 0) & (np.isnan(b) | (a >= -b))
    use_b = ~use_a & (b < 0) & (np.isnan(a) | (-b > a))
    return np.where(use_a, a, np.where(use_b, b, 0.0))


def eikonal_fields(grid, symbol, potential, values):
    """Upwind gradient, equality and inequality residuals, and cut-locus mask."""
    fwd, bwd = grid.one_sided_differences(values)
    grad = _upwind(bwd, fwd)
    V = potential.v0(grid.points)
    res_eq = symbol.t_tilde0(grid.points, grad) - V
    best = np.full(grid.size, np.inf)
    for combo in range(2 ** grid.dim):
        g = np.empty_like(fwd)
        for k in range(grid.dim):
            g[:, k] = fwd[:, k] if (combo >> k) & 1 else bwd[:, k]
        ok = ~np.any(np.isnan(g), axis=1)
        if np.any(ok):
            r = symbol.t_tilde0(grid.points[ok], g[ok]) - V[ok]
            best[ok] = np.minimum(best[ok], r)
    best = np.where(np.isfinite(best), best, res_eq)
    with np.errstate(invalid="ignore"):
        jump = np.abs(fwd - bwd)
    cut = np.any(np.nan_to_num(jump, nan=0.0) > np.sqrt(grid.h), axis=1)
    return grad, res_eq, best, cut


def distance_field(grid, oracle, stencil_radius=None, refine_radius=2.0):
    """Distance to the well by label-setting shortest paths on an extended stencil.

    Edge costs integrate ``l(x + t h z, h z)`` over ``t in [0, 1]`` with Simpson's
    rule; edges near the well use composite Simpson on quarter points.

    Raises
    ------
    HypothesisViolation
        If ``V0`` does not vanish at the well node.
    DomainError
        If some node is unreachable.
    """
    if stencil_radius is None:
        stencil_radius = 1 if grid.dim == 1 else 4
    v_well = float(oracle.potential.v0(grid.points[grid.well_index])[0])
    if abs(v_well) > 1e-14:
        raise HypothesisViolation(f"V0 at the well node is {v_well:.3e}, not 0")
    offsets = stencil(grid.dim, stencil_radius)
    tail, head, cost = _edge_costs(grid, oracle, offsets, refine_radius)
    G = csr_matrix((cost, (tail, head)), shape=(grid.size, grid.size))
    d = dijkstra(G, directed=False, indices=grid.well_index)
    if not np.all(np.isfinite(d)):
        raise DomainError(f"{int(np.sum(~np.isfinite(d)))} nodes are unreachable from the well")
    grad, res_eq, res_ineq, cut = eikonal_fields(grid, oracle.symbol, oracle.potential, d)
    return DistanceField(grid, d, grad, res_eq, res_ineq, cut, (tail, head, cost), stencil_radius, oracle)


def eikonal_residual(field: DistanceField):
    """Summary of the eikonal diagnostics.

    Returns
    -------
    dict
        ``max_abs_eq``: max ``|residual_eq|`` off the cut mask;
        ``max_signed_ineq``: max of ``residual_ineq`` over all nodes;
        ``max_signed_eq``: max of ``residual_eq`` over all nodes.
    """
    off = ~field.cut_mask
    return {
        "max_abs_eq": float(np.max(np.abs(field.residual_eq[off]), initial=0.0)),
        "max_signed_ineq": float(np.max(field.residual_ineq)),
        "max_signed_eq": float(np.max(field.residual_eq)),
        "cut_nodes": int(np.sum(field.cut_mask)),
    }


def bump(y):
    """Unnormalised ``exp(-1 / (1 - |y|^2))`` on the unit ball."""
    r2 = np.sum(np.asarray(y, float) ** 2, axis=-1)
    out = np.zeros_like(r2)
    inside = r2 < 1
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@dataclass
class MollifiedField:
    values: np.ndarray
    gradient: np.ndarray
    jensen_gap: np.ndarray
    delta: float

    @property
    def violation(self):
        """``max(0, -min gap)``."""
        return max(0.0, -float(np.min(self.jensen_gap)))


def extend_nearest(grid, values, pad):
    """Values on the bounding box padded by ``pad`` cells, filled with the nearest node value."""
    arr = grid.to_array(values)
    if not np.all(grid.mask):
        _, ind = ndimage.distance_transform_edt(~grid.mask, return_indices=True)
        arr = arr[tuple(ind)]
    return np.pad(arr, pad, mode="edge")


def mollify(field: DistanceField, delta, values=None):
    """``d_delta = d * j_delta`` with the normalised bump and the Jensen gap ``V0 - t~0(x, grad d_delta)``.

    Raises
    ------
    ConfigError
        If ``delta < 2h``.
    """
    grid = field.grid
    if delta < 2 * grid.h * (1 - 1e-12):
        raise ConfigError(f"mollifier radius delta={delta} is below 2h={2 * grid.h}")
    vals = field.values if values is None else np.asarray(values, float)
    n = int(np.ceil(delta / grid.h))
    k = np.arange(-n, n + 1)
    offs = np.stack(np.meshgrid(*([k] * grid.dim), indexing="ij"), axis=-1)
    j = bump(offs * grid.h / delta)
    j /= j.sum()
    arr = extend_nearest(grid, vals, n)
    sm = ndimage.correlate(arr, j, mode="nearest")
    inner = tuple(slice(n, n + s) for s in grid.shape)
    d_delta = grid.from_array(sm[inner])
    grad = grid.gradient(d_delta)
    sym = field.oracle.symbol
    gap = field.oracle.potential.v0(grid.points) - sym.t_tilde0(grid.points, grad)
    return MollifiedField(d_delta, grad, gap, float(delta))


def well_quadratic_fit(field: DistanceField, radius):
    """Least-squares quadratic ``c + g.y + y^T H y / 2`` of ``d`` around the well.

    Returns
    -------
    dict with ``hessian``, ``eigenvalues``, ``gradient``, ``constant``.

    Raises
    ------
    ConfigError
        If fewer than 5 nodes per axis fall inside the radius.
    HypothesisViolation
        If the fitted Hessian is not positive definite.
    """
    grid = field.grid
    y = grid.points - grid.well
    sel = np.linalg.norm(y, axis=1) <= radius * (1 + 1e-12)
    for k in range(grid.dim):
        on_axis = sel & np.all(np.delete(np.abs(y), k, axis=1) < 0.5 * grid.h, axis=1)
        if np.sum(on_axis) < 5:
            raise ConfigError(f"fit radius {radius} covers fewer than 5 nodes along axis {k}")
    ys = y[sel]
    cols = [np.ones(len(ys))] + [ys[:, k] for k in range(grid.dim)]
    pairs = [(i, j) for i in range(grid.dim) for j in range(i, grid.dim)]
    for i, j in pairs:
        cols.append(ys[:, i] * ys[:, j] * (0.5 if i == j else 1.0))
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, field.values[sel], rcond=None)
    H = np.zeros((grid.dim, grid.dim))
    for c, (i, j) in zip(coef[1 + grid.dim:], pairs):
        H[i, j] = H[j, i] = c
    lam = np.linalg.eigvalsh(H)
    if lam[0] <= 0:
        raise HypothesisViolation(f"fitted Hessian of d at the well is not positive definite: {lam.tolist()}")
    return {"hessian": H, "eigenvalues": lam, "gradient": coef[1:1 + grid.dim], "constant": float(coef[0])}


def harmonic_mismatch(hessian, B, hessian_v0):
    """Relative mismatch of ``H B H`` against ``D^2 V0 / 2`` (quadratic balance at the well)."""
    lhs = hessian @ B @ hessian
    rhs = 0.5 * np.asarray(hessian_v0, float)
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))
