import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jumpagmon.errors import ConfigError
from jumpagmon.grid import GridDomain
from jumpagmon.instances import axis_atoms, gaussian_kernel
from jumpagmon.kernel import Atom, AtomicKernel, DensityKernel, GaussianProfile, KernelSpec
from jumpagmon.operator import (assemble, conjugated_form_identity, dump_coo, explicit_form, lipschitz, v_phi,
                                v_phi_bound, weighted_energy_bound)
from jumpagmon.potential import PotentialSpec

LINE = GridDomain.box([-1.0], [1.0], 0.01)
SQUARE = GridDomain.box([-1.0, -1.0], [1.0, 1.0], 0.05)
V1 = PotentialSpec.quadratic(dim=1)
V2 = PotentialSpec.quadratic(dim=2)


def varying_atoms():
    w = lambda p: 1.0 + 0.5 * np.cos(3 * p[:, 0])
    return KernelSpec(1, AtomicKernel([Atom((1.0,), w), Atom((-1.0,), w), Atom((2.0,), 0.1), Atom((-2.0,), 0.1)], 1))


CASES = [
    ("ti1", LINE, axis_atoms(1), V1, 0.05),
    ("ti2", LINE, gaussian_kernel(1), V1, 0.05),
    ("varying", LINE, varying_atoms(), V1, 0.04),
    ("ti3", SQUARE, axis_atoms(2), V2, 0.1),
    ("g2", SQUARE, gaussian_kernel(2), V2, 0.1),
]


@pytest.fixture(scope="module", params=CASES, ids=[c[0] for c in CASES])
def case(request):
    _, grid, kernel, pot, eps = request.param
    return {mode: assemble(grid, kernel, pot, eps, mode) for mode in ("dirichlet", "neumann")}


def test_symmetric_without_symmetrisation(case):
    for form in case.values():
        assert form.asymmetry == 0.0


def test_matrix_matches_double_sum(case):
    rng = np.random.default_rng(3)
    for form in case.values():
        u, v = rng.standard_normal((2, form.size))
        ref = explicit_form(form.table, form.potential + form.kappa, u, v)
        assert form.quadratic_form(u, v) == pytest.approx(ref, rel=1e-12)


def test_killing_only_in_dirichlet(case):
    d, n = case["dirichlet"], case["neumann"]
    assert np.all(n.kappa == 0)
    assert np.allclose(d.kappa, d.table.killing())
    assert np.all(d.kappa >= 0) and d.kappa.max() > 0
    assert np.allclose(d.H.diagonal() - n.H.diagonal(), d.kappa)


def test_nonnegative(case):
    for form in case.values():
        assert np.linalg.eigvalsh(form.dense())[0] >= -1e-12


def test_neumann_constants_in_kernel():
    form = assemble(LINE, gaussian_kernel(1), None, 0.05, "neumann")
    assert np.allclose(form.H @ np.ones(form.size), 0, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(0, 1), seed=st.integers(0, 2 ** 16))
def test_conjugation_identity_property(a, b, c, seed):
    form = assemble(LINE, varying_atoms(), V1, 0.04, "dirichlet")
    x = LINE.points[:, 0]
    phi = a * x + b * x ** 2 + c * np.abs(x)
    v = np.random.default_rng(seed).standard_normal(form.size)
    assert conjugated_form_identity(form, phi, v).relative_error <= 1e-10


def test_conjugation_identity_zero_weight():
    form = assemble(LINE, axis_atoms(1), V1, 0.05, "neumann")
    v = np.random.default_rng(0).standard_normal(form.size)
    r = conjugated_form_identity(form, np.zeros(form.size), v)
    assert r.lhs == pytest.approx(form.quadratic_form(v), rel=1e-13)
    assert np.all(r.v_phi == 0)


def test_conjugation_identity_log_guard():
    # range(phi)/2eps = 400 > 350 triggers the rescaled path
    form = assemble(LINE, axis_atoms(1), V1, 0.01, "dirichlet")
    phi = 8.0 * np.abs(LINE.points[:, 0])
    v = np.random.default_rng(1).standard_normal(form.size)
    r = conjugated_form_identity(form, phi, v)
    assert r.log_scale > 0
    assert np.isfinite(r.lhs) and r.relative_error <= 1e-10


def test_v_phi_closed_form_ti1():
    eps = 0.05
    form = assemble(LINE, axis_atoms(1), V1, eps, "neumann")
    s = 0.7
    phi = s * LINE.points[:, 0]
    vp = v_phi(form.table, phi)
    interior = np.abs(LINE.points[:, 0]) < 0.94
    # slope-s weight: each interior jump contributes 1/2 (1 - cosh(s))
    assert np.allclose(vp[interior], 1 - np.cosh(s), rtol=1e-12)
    assert lipschitz(form.table, phi) == pytest.approx(s, rel=1e-12)


@pytest.mark.parametrize("scale", [1.0, 4.0])
def test_v_phi_bound(scale):
    form = assemble(LINE, gaussian_kernel(1), V1, 0.05, "neumann")
    phi = scale * np.abs(LINE.points[:, 0]) ** 1.5
    bound, L = v_phi_bound(form.table, phi)
    vp = v_phi(form.table, phi)
    assert np.all(vp <= 0)
    assert np.all(-vp <= bound + 1e-12)


def test_weighted_energy_bound():
    form = assemble(LINE, axis_atoms(1), V1, 0.05, "dirichlet")
    phi = 0.3 * np.sin(2 * LINE.points[:, 0])
    v = np.random.default_rng(2).standard_normal(form.size)
    assert weighted_energy_bound(form, phi, v)["holds"]


def test_dump_coo_is_deterministic(tmp_path):
    form = assemble(LINE, axis_atoms(1), V1, 0.05, "dirichlet")
    a, b = tmp_path / "a.coo", tmp_path / "b.coo"
    dump_coo(form, a)
    dump_coo(assemble(LINE, axis_atoms(1), V1, 0.05, "dirichlet"), b)
    assert a.read_bytes() == b.read_bytes()
    rows = np.loadtxt(a)
    assert len(rows) == form.H.nnz


def test_bad_mode_and_length():
    with pytest.raises(ConfigError, match="boundary mode"):
        assemble(LINE, axis_atoms(1), V1, 0.05, "robin")
    form = assemble(LINE, axis_atoms(1), V1, 0.05)
    with pytest.raises(ConfigError, match="does not match"):
        form.apply(np.ones(3))


def test_r1_correction_shifts_diagonal():
    pot = PotentialSpec.quadratic(dim=1, r1_scale=2.0)
    a = assemble(LINE, axis_atoms(1), pot, 0.05, "neumann")
    b = assemble(LINE, axis_atoms(1), V1, 0.05, "neumann")
    assert np.allclose(a.H.diagonal() - b.H.diagonal(), 0.1)


def test_density_kernel_with_spatial_weight_symmetric():
    k = KernelSpec(1, DensityKernel(GaussianProfile(), 1, spatial_weight=lambda p: 2 + np.tanh(p[:, 0])))
    form = assemble(LINE, k, V1, 0.04, "dirichlet")
    assert form.asymmetry == 0.0
