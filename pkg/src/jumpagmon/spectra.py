"""Lowest eigenpairs of assembled forms by shift-invert Lanczos."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, NumericalFailure

DENSE_LIMIT = 64


@dataclass
class EigenPair:
    """Eigenvalue, eigenvector (unit norm with the ``h^d`` weight) and residual ``||Hu - lu|| / ||u||``."""

    value: float
    vector: np.ndarray
    residual: float


def _orient(u, anchor):
    """Sign convention: positive at the anchor, or else at the first entry above 1e-3 max|u|."""
    big = np.abs(u) > 1e-3 * np.max(np.abs(u))
    if anchor is not None and big[anchor]:
        ref = u[anchor]
    else:
        # odd states vanish at the well up to roundoff
        ref = u[np.argmax(big)]
    return -u if ref < 0 else u


def _finish(H, vals, vecs, volume, anchor, tol):
    """Rayleigh-Ritz on the computed subspace, normalisation, orientation, residual check."""
    Q, _ = np.linalg.qr(vecs)
    Hq = Q.T @ (H @ Q)
    lam, Y = np.linalg.eigh(0.5 * (Hq + Hq.T))
    U = Q @ Y
    hnorm = float(np.max(np.asarray(abs(H).sum(axis=1)).ravel())) if sparse.issparse(H) else float(np.max(np.sum(np.abs(H), axis=1)))
    out = []
    for j in range(len(lam)):
        u = U[:, j]
        Hu = H @ u
        lj = float(u @ Hu / (u @ u))
        res = float(np.linalg.norm(Hu - lj * u) / np.linalg.norm(u))
        if res > tol * max(1.0, hnorm):
            raise NumericalFailure(f"eigenpair {j} residual {res:.3e} above tolerance", best_residual=res)
        u = _orient(u, anchor) / np.sqrt(volume)
        out.append(EigenPair(lj, u, res))
    out.sort(key=lambda p: p.value)
    return out


def component_nodes(H, node):
    """Nodes in the connected component of ``node`` in the off-diagonal graph of ``H``."""
    off = H - sparse.diags(H.diagonal())
    off.eliminate_zeros()
    _, labels = connected_components(off, directed=False)
    return np.nonzero(labels == labels[node])[0]


def lowest_eigenpairs(form, k=1, tol=1e-10, maxiter=None, seed=0, component=None, ncv=None):
    """The ``k`` smallest eigenpairs of ``H``.

    Shift-invert Lanczos (ARPACK) with shift ``-1e-6 ||H||``; the inner solves use
    Jacobi-preconditioned conjugate gradients.

    Parameters
    ----------
    maxiter : int, optional
        Iteration budget for both the Lanczos restarts and each inner solve.
    component : int, optional
        Restrict to the connected component of this node and embed the vectors
        back with zeros elsewhere.

    Raises
    ------
    NumericalFailure
        On non-convergence or a residual above ``tol * max(1, ||H||)``.
    """
    H = form.H
    n = H.shape[0]
    idx = None
    anchor = form.grid.well_index if component is None else component
    if component is not None:
        idx = component_nodes(H, component)
        H = H[idx][:, idx]
        anchor = int(np.searchsorted(idx, component))
        n = len(idx)
    if k < 1 or k > n:
        raise ConfigError(f"requested {k} eigenpairs from a problem of size {n}")
    if n <= max(DENSE_LIMIT, 2 * k + 1):
        lam, vecs = np.linalg.eigh(H.toarray())
        pairs = _finish(H, lam[:k], vecs[:, :k], form.grid.volume, anchor, tol)
    else:
        pairs = _shift_invert(H, k, tol, maxiter, seed, ncv, form.grid.volume, anchor)
    if idx is not None:
        for p in pairs:
            full = np.zeros(form.size)
            full[idx] = p.vector
            p.vector = full
    return pairs


def _shift_invert(H, k, tol, maxiter, seed, ncv, volume, anchor):
    n = H.shape[0]
    hnorm = float(np.max(np.asarray(abs(H).sum(axis=1)).ravel()))
    sigma = -1e-6 * hnorm
    A = (H - sigma * sparse.identity(n, format="csr")).tocsr()
    M = spla.LinearOperator((n, n), matvec=lambda x: x / A.diagonal(), dtype=float)
    inner = 20 * n if maxiter is None else maxiter

    def solve(b):
        x, info = spla.cg(A, b, rtol=1e-13, atol=0.0, maxiter=inner, M=M)
        if info != 0:
            res = float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))
            raise NumericalFailure(f"inner conjugate-gradient solve did not converge (info={info})",
                                   best_residual=res)
        return x

    opinv = spla.LinearOperator((n, n), matvec=solve, dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        vals, vecs = spla.eigsh(H, k=k, sigma=sigma, which="LM", OPinv=opinv, v0=v0,
                                maxiter=maxiter, ncv=ncv, tol=0.0)
    except spla.ArpackNoConvergence as exc:
        best = None
        if exc.eigenvectors is not None and exc.eigenvectors.size:
            V = exc.eigenvectors
            R = H @ V - V * exc.eigenvalues
            best = float(np.max(np.linalg.norm(R, axis=0)))
        raise NumericalFailure("Lanczos iteration did not converge within the iteration budget",
                               best_residual=best) from exc
    order = np.argsort(vals)
    return _finish(H, vals[order], vecs[:, order], volume, anchor, tol)


def dense_eigenpairs(form):
    """All eigenpairs by a dense symmetric solver (oracle)."""
    lam, vecs = np.linalg.eigh(form.H.toarray())
    vecs = vecs / np.sqrt(form.grid.volume)
    anchor = form.grid.well_index
    vecs = np.stack([_orient(vecs[:, j], anchor) for j in range(vecs.shape[1])], axis=1)
    return lam, vecs


def eigen_window(form, threshold, tol=1e-10, seed=0, k0=4, maxiter=None):
    """All eigenpairs with ``lambda <= threshold``; ``k`` doubles until one lies above."""
    k = min(k0, form.size)
    while True:
        pairs = lowest_eigenpairs(form, k=k, tol=tol, seed=seed, maxiter=maxiter)
        if pairs[-1].value > threshold or k == form.size:
            return [p for p in pairs if p.value <= threshold]
        k = min(2 * k, form.size)


def lanczos_spectrum(form, tol=1e-10, seed=0):
    """Every eigenvalue by Lanczos: shift-invert for the lower half, plain for the upper half.

    Intended for small grids where the result can be compared with a dense solve.
    """
    H = form.H
    n = H.shape[0]
    if n < 4:
        raise ConfigError(f"lanczos_spectrum needs at least 4 nodes, got {n}")
    lo = (n + 1) // 2
    low = _shift_invert(H, lo, tol, None, seed, n, form.grid.volume, form.grid.well_index)
    v0 = np.random.default_rng(seed + 1).standard_normal(n)
    try:
        high = spla.eigsh(H, k=n - lo, which="LA", v0=v0, ncv=n, tol=0.0, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise NumericalFailure("Lanczos iteration for the upper spectrum did not converge") from exc
    return np.sort(np.concatenate([[p.value for p in low], high]))
