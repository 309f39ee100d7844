"""Discrete Dirichlet and Neumann forms on Sigma and the conjugated form identity.

With ``u`` sampled at the nodes the form is

    E(u, v) = h^d [ 1/2 sum_x sum_z w(x, z) (u(x) - u(x+hz)) (v(x) - v(x+hz))
                    + sum_x (V(x) + kappa(x)) u(x) v(x) ]

where the double sum runs over jumps that stay in Sigma and ``kappa`` is the
mass of jumps leaving Sigma (Dirichlet mode only). The stored matrix is
``H = E / h^d``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ConfigError
from .kernel import build_table

MODES = ("dirichlet", "neumann")
_LOG_GUARD = 350.0


@dataclass
class FormMatrix:
    """Sparse symmetric operator matrix of a discrete form.

    Attributes
    ----------
    H : scipy.sparse.csr_matrix
    mode : {"dirichlet", "neumann"}
    kappa : (N,)
        Killing diagonal (zero in Neumann mode).
    potential : (N,)
        ``V_eps`` at the nodes, plus any extra potential.
    asymmetry : float
        ``max |H - H^T|`` as assembled (no symmetrisation is applied).
    """

    H: sparse.csr_matrix
    mode: str
    kappa: np.ndarray
    potential: np.ndarray
    asymmetry: float
    table: object
    grid: object
    eps: float

    @property
    def size(self):
        return self.H.shape[0]

    @property
    def norm(self):
        """Max absolute row sum; bounds the spectral norm."""
        return float(np.max(np.asarray(abs(self.H).sum(axis=1)).ravel()))

    def apply(self, u):
        u = np.asarray(u)
        if u.shape[0] != self.size:
            raise ConfigError(f"vector length {u.shape[0]} does not match matrix size {self.size}")
        return self.H @ u

    def quadratic_form(self, u, v=None):
        """``E(u, v) = h^d <u, H v>``."""
        v = u if v is None else v
        return float(self.grid.volume * (u @ (self.H @ v)))

    def dense(self):
        return self.H.toarray()


def assemble(grid, kernel, potential, eps, mode="dirichlet", R=None, extra_potential=None, table=None):
    """Assemble ``H`` for the kernel and potential on the grid.

    Parameters
    ----------
    potential : PotentialSpec or None
        ``None`` gives ``V = 0``.
    extra_potential : array, optional
        Added to the diagonal (for example a ground-state potential).
    table : QuadratureTable, optional
        Reuse a precomputed table.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown boundary mode {mode!r}; expected one of {', '.join(MODES)}")
    tab = build_table(kernel, grid, eps, R=R) if table is None else table
    n = grid.size
    inside = ~tab.exits
    rows = np.repeat(np.arange(n), tab.offsets.shape[0]).reshape(n, -1)[inside]
    cols = tab.targets[inside]
    w = tab.weights[inside]
    jump_diag = np.sum(np.where(inside, tab.weights, 0.0), axis=1)
    kappa = tab.killing() if mode == "dirichlet" else np.zeros(n)
    V = np.zeros(n) if potential is None else potential.v_eps(grid.points, eps)
    if extra_potential is not None:
        V = V + np.asarray(extra_potential, float)
    diag = jump_diag + kappa + V
    H = sparse.coo_matrix((np.concatenate([-w, diag]),
                           (np.concatenate([rows, np.arange(n)]), np.concatenate([cols, np.arange(n)]))),
                          shape=(n, n)).tocsr()
    H.sort_indices()
    diff = H - H.T
    asym = float(np.max(np.abs(diff.data), initial=0.0))
    return FormMatrix(H, mode, kappa, V, asym, tab, grid, float(eps))


def explicit_form(table, diag_potential, u, v=None):
    """Double-sum evaluation of the form (independent of the sparse matrix)."""
    v = u if v is None else v
    inside = ~table.exits
    t = np.where(inside, table.targets, 0)
    du = u[:, None] - u[t]
    dv = v[:, None] - v[t]
    jump = 0.5 * np.sum(np.where(inside, table.weights * du * dv, 0.0))
    return float(table.grid.volume * (jump + np.sum(diag_potential * u * v)))


def _pair_diffs(table, phi):
    inside = ~table.exits
    t = np.where(inside, table.targets, 0)
    return inside, t, (phi[:, None] - phi[t]) / table.eps


def lipschitz(table, phi):
    """``max |phi(x) - phi(x + eps gamma)| / (eps |gamma|)`` over interior jumps."""
    inside, _, dphi = _pair_diffs(table, np.asarray(phi, float))
    glen = np.linalg.norm(table.gammas, axis=1)[None, :]
    return float(np.max(np.where(inside, np.abs(dphi) / glen, 0.0)))


def v_phi(table, phi, scale=0.0):
    """``V^phi(x) = sum_{interior z} (1 - cosh((phi(x) - phi(x+hz)) / eps)) w(x, z)``.

    With ``scale = s`` the result is multiplied by ``exp(-s)`` (for large arguments).
    """
    inside, _, t = _pair_diffs(table, np.asarray(phi, float))
    t = np.where(inside, t, 0.0)
    if scale == 0.0:
        # 1 - cosh t = -2 sinh^2(t/2)
        term = -2.0 * np.sinh(0.5 * t) ** 2
    else:
        term = np.exp(-scale) - 0.5 * (np.exp(t - scale) + np.exp(-t - scale))
    return np.sum(np.where(inside, term * table.weights, 0.0), axis=1)


def v_phi_bound(table, phi):
    """Pointwise bound ``sum w L|gamma| sinh(L|gamma|)`` with the measured Lipschitz constant."""
    L = lipschitz(table, phi)
    Lg = L * np.linalg.norm(table.gammas, axis=1)[None, :]
    return np.sum(np.where(~table.exits, table.weights * Lg * np.sinh(Lg), 0.0), axis=1), L


@dataclass
class ConjugationResult:
    lhs: float
    rhs_potential_part: float
    rhs_cosh_energy: float
    v_phi: np.ndarray
    log_scale: float

    @property
    def rhs(self):
        return self.rhs_potential_part + self.rhs_cosh_energy

    @property
    def relative_error(self):
        return abs(self.lhs - self.rhs) / max(abs(self.lhs), 1e-300)


def conjugated_form_identity(form: FormMatrix, phi, v):
    """Both sides of ``E(e^{-phi/eps} v, e^{phi/eps} v) = <(V + V^phi) v, v> + cosh energy``.

    The left side uses the sparse matrix; the right side is a separate double
    sum. ``phi`` is centred at its mid-range first (both sides are invariant).
    When ``range(phi) / 2eps`` exceeds 350 every quantity is returned multiplied
    by ``exp(-log_scale)``.
    """
    tab = form.table
    eps = form.eps
    phi = np.asarray(phi, float)
    v = np.asarray(v, float)
    phi = phi - 0.5 * (phi.max() + phi.min())
    s = 0.5 * (phi.max() - phi.min()) / eps
    scale = s if s > _LOG_GUARD else 0.0
    a = np.exp(-phi / eps - scale) * v
    b = np.exp(phi / eps - scale) * v
    lhs = form.quadratic_form(a, b)
    vphi = v_phi(tab, phi, scale=2 * scale)
    pot = form.potential + form.kappa
    vol = form.grid.volume
    rhs_pot = float(vol * np.sum((pot * np.exp(-2 * scale) + vphi) * v * v))
    inside, t, targ = _pair_diffs(tab, phi)
    targ = np.where(inside, targ, 0.0)
    if scale == 0.0:
        ch = np.cosh(targ)
    else:
        ch = 0.5 * (np.exp(targ - 2 * scale) + np.exp(-targ - 2 * scale))
    dv = v[:, None] - v[t]
    cosh_energy = float(vol * 0.5 * np.sum(np.where(inside, ch * dv * dv * tab.weights, 0.0)))
    return ConjugationResult(lhs, rhs_pot, cosh_energy, vphi, 2 * scale)


def weighted_energy_bound(form: FormMatrix, phi, v):
    """Check ``E(e^{phi/eps} v) <= e^{C~/eps} (E(v) + ||v||^2)`` for a bounded Lipschitz ``phi``.

    ``C~ = 2 sup|phi| + eps * ln max(2, L^2 M2)`` with ``M2 = sup_x sum w |gamma|^2``
    over interior jumps. Requires a nonnegative diagonal potential.
    """
    tab = form.table
    eps = form.eps
    phi = np.asarray(phi, float)
    v = np.asarray(v, float)
    C = float(np.max(np.abs(phi)))
    L = lipschitz(tab, phi)
    g2 = np.sum(tab.gammas ** 2, axis=1)[None, :]
    M2 = float(np.max(np.sum(np.where(~tab.exits, tab.weights * g2, 0.0), axis=1)))
    C_tilde = 2 * C + eps * np.log(max(2.0, L * L * M2))
    f = np.exp(phi / eps) * v
    lhs = form.quadratic_form(f)
    rhs = np.exp(C_tilde / eps) * (form.quadratic_form(v) + form.grid.volume * float(v @ v))
    return {"lhs": lhs, "rhs": float(rhs), "C_tilde": float(C_tilde), "lipschitz": L, "holds": lhs <= rhs}


def dump_coo(form: FormMatrix, path):
    """Write ``row col value`` lines (17 significant digits)."""
    coo = form.H.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}\n")
