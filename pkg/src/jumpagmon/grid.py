"""Lattice realisation of a bounded open region Sigma.

Nodes are the points ``well + h * i`` (``i`` integer) lying strictly inside the
region; the well is therefore always a lattice point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError

_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def contains(self, points):
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        span = np.max(hi - lo)
        return np.all((points > lo + _EDGE_TOL * span) & (points < hi - _EDGE_TOL * span), axis=-1)

    def bounds(self):
        return np.asarray(self.lower, float), np.asarray(self.upper, float)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def contains(self, points):
        c = np.asarray(self.center, float)
        r2 = np.sum((points - c) ** 2, axis=-1)
        return r2 < (self.radius * (1.0 - _EDGE_TOL)) ** 2

    def bounds(self):
        c = np.asarray(self.center, float)
        return c - self.radius, c + self.radius


class GridDomain:
    """Nodes of ``Sigma`` on the lattice ``well + h Z^d``.

    Parameters
    ----------
    region : Box or Ball
        The open bounded set Sigma.
    h : float
        Lattice spacing.
    well : array_like
        Location of the single potential well inside Sigma.
    """

    def __init__(self, region, h, well):
        self.region = region
        self.h = float(h)
        if not self.h > 0:
            raise ConfigError(f"grid spacing h must be positive, got {h}")
        self.well = np.atleast_1d(np.asarray(well, float))
        self.dim = self.well.size
        lo, hi = region.bounds()
        if lo.size != self.dim:
            raise ConfigError(f"region dimension {lo.size} does not match well dimension {self.dim}")
        self.corner = np.ceil((lo - self.well) / self.h - _EDGE_TOL).astype(int)
        top = np.floor((hi - self.well) / self.h + _EDGE_TOL).astype(int)
        self.shape = tuple(int(t) for t in top - self.corner + 1)

        axes = [np.arange(c, c + s) for c, s in zip(self.corner, self.shape)]
        ijk = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        pts = self.well + self.h * ijk
        inside = region.contains(pts)
        self.ijk = ijk[inside]
        self.points = pts[inside]
        self.index_array = np.full(self.shape, -1, dtype=np.int64)
        self.index_array[tuple((self.ijk - self.corner).T)] = np.arange(len(self.ijk))
        self.mask = self.index_array >= 0

        well_id = self.lookup(np.zeros((1, self.dim), int))[0]
        if well_id < 0:
            raise ConfigError(f"well {self.well.tolist()} is not inside Sigma")
        self.well_index = int(well_id)
        _, ncomp = ndimage.label(self.mask)
        if ncomp != 1:
            raise ConfigError(f"Sigma must be connected on the lattice; found {ncomp} components")

    @classmethod
    def box(cls, lower, upper, h, well=None):
        lower = np.atleast_1d(np.asarray(lower, float))
        upper = np.atleast_1d(np.asarray(upper, float))
        if well is None:
            well = np.zeros_like(lower)
        return cls(Box(tuple(lower), tuple(upper)), h, well)

    @classmethod
    def ball(cls, center, radius, h, well=None):
        center = np.atleast_1d(np.asarray(center, float))
        return cls(Ball(tuple(center), float(radius)), h, center if well is None else well)

    @property
    def size(self):
        return len(self.ijk)

    @property
    def volume(self):
        """Cell volume h^d."""
        return self.h ** self.dim

    def lookup(self, ijk):
        """Node ids of lattice indices ``ijk`` (..., d); -1 outside Sigma."""
        ijk = np.asarray(ijk)
        rel = ijk - self.corner
        ok = np.all((rel >= 0) & (rel < np.asarray(self.shape)), axis=-1)
        out = np.full(ok.shape, -1, dtype=np.int64)
        if np.any(ok):
            out[ok] = self.index_array[tuple(rel[ok].T)]
        return out

    def coords(self, ijk):
        return self.well + self.h * np.asarray(ijk, float)

    def to_array(self, values, fill=np.nan):
        arr = np.full(self.shape + np.shape(values)[1:], fill, dtype=np.result_type(values, float))
        arr[tuple((self.ijk - self.corner).T)] = values
        return arr

    def from_array(self, arr):
        return arr[tuple((self.ijk - self.corner).T)]

    def neighbor(self, axis, step):
        """Node ids of the neighbours ``x + step*h*e_axis`` (-1 where absent)."""
        shift = np.zeros(self.dim, int)
        shift[axis] = step
        return self.lookup(self.ijk + shift)

    def one_sided_differences(self, values):
        """Forward and backward differences per axis; NaN where a neighbour is missing.

        Returns arrays of shape (N, d).
        """
        values = np.asarray(values, float)
        fwd = np.full((self.size, self.dim), np.nan)
        bwd = np.full((self.size, self.dim), np.nan)
        for k in range(self.dim):
            nxt = self.neighbor(k, +1)
            prv = self.neighbor(k, -1)
            ok = nxt >= 0
            fwd[ok, k] = (values[nxt[ok]] - values[ok]) / self.h
            ok = prv >= 0
            bwd[ok, k] = (values[ok] - values[prv[ok]]) / self.h
        return fwd, bwd

    def gradient(self, values):
        """Central differences, one-sided where Sigma ends on one side."""
        fwd, bwd = self.one_sided_differences(values)
        grad = np.where(np.isnan(fwd), bwd, np.where(np.isnan(bwd), fwd, 0.5 * (fwd + bwd)))
        return np.nan_to_num(grad, nan=0.0)

    def hessian(self, values):
        """Second differences (N, d, d); mixed terms by central differences of the gradient."""
        g = self.gradient(values)
        hess = np.zeros((self.size, self.dim, self.dim))
        for k in range(self.dim):
            hess[:, :, k] = self.gradient(g[:, k])
        return 0.5 * (hess + np.swapaxes(hess, 1, 2))

    def check_alignment(self, eps):
        """Return the integer ratio eps/h or raise ConfigError."""
        ratio = eps / self.h
        m = int(round(ratio))
        if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
            raise ConfigError(f"epsilon={eps!r} is not an integer multiple of h={self.h!r}")
        return m
