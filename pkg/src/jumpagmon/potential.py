"""Potentials V_eps = V0 + R1(.; eps) with a single declared well."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, HypothesisViolation


@dataclass(frozen=True)
class Well:
    location: np.ndarray
    hessian: np.ndarray


class PotentialSpec:
    """Closed-form nonnegative potential with analytic gradient and Hessian.

    Parameters
    ----------
    family : {"quadratic", "double_well", "inverted_gaussians"}
    params : dict
        ``quadratic``: ``A`` (d x d, PD), ``center``.
        ``double_well``: ``a``, ``b``; ``V0 = a (x0^2 - 1)^2 + b sum_{k>0} x_k^2``.
        ``inverted_gaussians``: ``centers`` (m x d), ``depths`` (m,), ``width``;
        ``V0 = min_i depth_i (1 - exp(-|x - m_i|^2 / (2 width^2)))``.
    dim : int
    r1_scale : float
        Constant first-order correction ``R1(x; eps) = r1_scale * eps``.
    """

    FAMILIES = ("quadratic", "double_well", "inverted_gaussians")

    def __init__(self, family, params, dim, r1_scale=0.0):
        if family not in self.FAMILIES:
            raise ConfigError(f"unknown potential family {family!r}; expected one of {', '.join(self.FAMILIES)}")
        self.family = family
        self.dim = int(dim)
        self.r1_scale = float(r1_scale)
        self.params = {}
        if family == "quadratic":
            A = np.atleast_2d(np.asarray(params.get("A", np.eye(self.dim)), float))
            if A.shape != (self.dim, self.dim):
                raise ConfigError(f"quadratic A must be {self.dim}x{self.dim}, got {A.shape}")
            if not np.allclose(A, A.T):
                raise ConfigError("quadratic A must be symmetric")
            self.params["A"] = A
            self.params["center"] = np.asarray(params.get("center", np.zeros(self.dim)), float).reshape(self.dim)
        elif family == "double_well":
            self.params["a"] = float(params.get("a", 1.0))
            self.params["b"] = float(params.get("b", 1.0))
        else:
            centers = np.atleast_2d(np.asarray(params["centers"], float))
            if centers.shape[1] != self.dim:
                raise ConfigError("inverted_gaussians centers must have one column per dimension")
            depths = np.asarray(params.get("depths", np.ones(len(centers))), float).reshape(len(centers))
            self.params.update(centers=centers, depths=depths, width=float(params.get("width", 1.0)))
        self.wells = self._declared_wells()
        for w in self.wells:
            lam = np.linalg.eigvalsh(w.hessian)
            if lam.min() <= 0:
                raise HypothesisViolation(f"well at {w.location.tolist()} is degenerate: Hessian eigenvalues {lam.tolist()}")

    @classmethod
    def quadratic(cls, A=None, center=None, dim=1, r1_scale=0.0):
        params = {}
        if A is not None:
            params["A"] = A
        if center is not None:
            params["center"] = center
        return cls("quadratic", params, dim, r1_scale)

    def _declared_wells(self):
        p = self.params
        if self.family == "quadratic":
            return [Well(p["center"], 2.0 * p["A"])]
        if self.family == "double_well":
            out = []
            for s in (-1.0, 1.0):
                loc = np.zeros(self.dim)
                loc[0] = s
                H = np.diag([8.0 * p["a"]] + [2.0 * p["b"]] * (self.dim - 1))
                out.append(Well(loc, H))
            return out
        return [Well(m, (dep / p["width"] ** 2) * np.eye(self.dim)) for m, dep in zip(p["centers"], p["depths"])]

    def v0(self, x):
        x = np.asarray(x, float).reshape(-1, self.dim)
        p = self.params
        if self.family == "quadratic":
            y = x - p["center"]
            return np.einsum("ni,ij,nj->n", y, p["A"], y)
        if self.family == "double_well":
            return p["a"] * (x[:, 0] ** 2 - 1.0) ** 2 + p["b"] * np.sum(x[:, 1:] ** 2, axis=1)
        return np.min(self._bumps(x), axis=1)

    def _bumps(self, x):
        p = self.params
        r2 = np.sum((x[:, None, :] - p["centers"][None]) ** 2, axis=-1)
        return p["depths"] * -np.expm1(-r2 / (2 * p["width"] ** 2))

    def gradient(self, x):
        x = np.asarray(x, float).reshape(-1, self.dim)
        p = self.params
        if self.family == "quadratic":
            return 2.0 * (x - p["center"]) @ p["A"]
        if self.family == "double_well":
            g = 2.0 * p["b"] * x
            g[:, 0] = 4.0 * p["a"] * x[:, 0] * (x[:, 0] ** 2 - 1.0)
            return g
        i = np.argmin(self._bumps(x), axis=1)
        m = p["centers"][i]
        r2 = np.sum((x - m) ** 2, axis=1)
        coef = p["depths"][i] * np.exp(-r2 / (2 * p["width"] ** 2)) / p["width"] ** 2
        return coef[:, None] * (x - m)

    def r1(self, x, eps):
        n = np.asarray(x, float).reshape(-1, self.dim).shape[0]
        return np.full(n, self.r1_scale * eps)

    def v_eps(self, x, eps):
        return self.v0(x) + self.r1(x, eps)

    def well_in(self, grid):
        """The unique declared well inside the grid's region, or raise."""
        inside = [w for w in self.wells if grid.region.contains(w.location[None])[0]]
        if len(inside) != 1:
            raise ConfigError(f"Sigma must contain exactly one well, found {len(inside)}")
        return inside[0]

    def validate(self, points):
        """Check V0 >= 0 on sample points; raise HypothesisViolation otherwise."""
        v = self.v0(points)
        if v.min() < -1e-14:
            raise HypothesisViolation(f"V0 is negative ({v.min():.3e}) at sampled points")
        return float(v.min())
