"""Shipped test instances.

* ``TI-1``: 1D atoms ``+-1`` with weight 1/2, ``V0 = x^2`` on ``(-1, 1)``.
* ``TI-2``: 1D Gaussian density ``exp(-|gamma|^2)``, same potential and domain.
* ``TI-3``: 2D atoms ``+-e1, +-e2`` with weight 1/2, ``V0 = |x|^2`` on ``(-1, 1)^2``.
* ``G-2``: 2D isotropic Gaussian density, ``V0 = |x|^2`` on ``(-1, 1)^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .finsler import LengthOracle, distance_field
from .grid import GridDomain
from .kernel import Atom, AtomicKernel, DensityKernel, GaussianProfile, KernelSpec
from .potential import PotentialSpec
from .symbol import SymbolEvaluator

# Sweep defaults used by the CLI and the acceptance suite.
DEFAULTS = {"B": 6.0, "alpha": 0.3, "R0": 2.0, "D": 0.3, "eta": 0.08}


@dataclass
class Instance:
    """Kernel, potential and grid with a lazily computed distance field."""

    name: str
    kernel: KernelSpec
    potential: PotentialSpec
    grid: GridDomain
    stencil_radius: int | None = None
    _field: object = field(default=None, repr=False)

    def __post_init__(self):
        self.symbol = SymbolEvaluator(self.kernel)
        self.oracle = LengthOracle(self.symbol, self.potential)

    def distance(self):
        if self._field is None:
            self._field = distance_field(self.grid, self.oracle, stencil_radius=self.stencil_radius)
        return self._field


def axis_atoms(dim, weight=0.5):
    atoms = []
    for k in range(dim):
        e = [0.0] * dim
        for s in (1.0, -1.0):
            e[k] = s
            atoms.append(Atom(tuple(e), weight))
    return KernelSpec(dim, AtomicKernel(atoms, dim))


def gaussian_kernel(dim):
    return KernelSpec(dim, DensityKernel(GaussianProfile(), dim))


def ti1(h=1 / 400):
    return Instance("TI-1", axis_atoms(1), PotentialSpec.quadratic(dim=1), GridDomain.box([-1.0], [1.0], h))


def ti2(h=1 / 400):
    return Instance("TI-2", gaussian_kernel(1), PotentialSpec.quadratic(dim=1), GridDomain.box([-1.0], [1.0], h))


def ti3(h=0.01, stencil_radius=4):
    return Instance("TI-3", axis_atoms(2), PotentialSpec.quadratic(dim=2),
                    GridDomain.box([-1.0, -1.0], [1.0, 1.0], h), stencil_radius)


def g2(h=0.01, stencil_radius=4):
    return Instance("G-2", gaussian_kernel(2), PotentialSpec.quadratic(dim=2),
                    GridDomain.box([-1.0, -1.0], [1.0, 1.0], h), stencil_radius)


REGISTRY = {"TI-1": ti1, "TI-2": ti2, "TI-3": ti3, "G-2": g2}


def get(name, **kwargs):
    try:
        return REGISTRY[name](**kwargs)
    except KeyError:
        raise ConfigError(f"unknown instance {name!r}; expected one of {', '.join(REGISTRY)}") from None
