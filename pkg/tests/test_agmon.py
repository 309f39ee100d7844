import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from jumpagmon.agmon import (CHI_SLOPE_CAP, CutoffChi, ScaledCutoff, admissible_delta, decay_report, eps_alpha,
                             f_pm, fpm_inequality, phi_alpha_field, phi_field, sandwich_constant,
                             sandwich_report, sharpness_probe, smallest_passing_alpha, sweep_point,
                             three_region_check)
from jumpagmon.errors import ConfigError
from jumpagmon.operator import assemble, v_phi
from jumpagmon.spectra import lowest_eigenpairs

CHI = CutoffChi()
# regime where the region check closes on the shipped grids
REGIME = dict(B=4.0, alpha=1.0, D=0.2, eta=0.2, R0=1.5)


# ------------------------------------------------------------------ chi


@settings(max_examples=100, deadline=None)
@given(r=st.floats(-1, 2), s=st.floats(-1, 2))
def test_chi_monotone_and_bounded(r, s):
    lo, hi = min(r, s), max(r, s)
    assert 0 <= CHI(lo) <= CHI(hi) <= 1


@pytest.mark.parametrize("plateau", [2.1, 2.5, CHI_SLOPE_CAP])
def test_chi_integrates_its_derivative(plateau):
    chi = CutoffChi(plateau)
    for r in (0.55, 0.7, 0.95, 1.0):
        ref = integrate.quad(chi.derivative, 0.5, r, points=chi.knots, epsabs=1e-14)[0]
        assert chi(r) == pytest.approx(ref, abs=1e-12)
    assert chi(1.0) == 1.0


def test_chi_derivatives_by_finite_differences():
    r = np.linspace(0.45, 1.05, 301)
    h = 1e-6
    assert np.allclose((CHI(r + h) - CHI(r - h)) / (2 * h), CHI.derivative(r), atol=1e-7)
    # chi''' jumps at the knots, where the central difference is only O(h)
    assert np.allclose((CHI.derivative(r + h) - CHI.derivative(r - h)) / (2 * h), CHI.second_derivative(r),
                       atol=1e-3)


def test_chi_plateau_range():
    with pytest.raises(ConfigError):
        CutoffChi(2.0)
    with pytest.raises(ConfigError):
        CutoffChi(3.0)
    assert CHI.knots == pytest.approx((0.5, 0.6, 0.9, 1.0))


def test_scaled_cutoff_endpoints():
    c = ScaledCutoff(CHI, 0.3, 0.38)
    assert c(0.3) == 0 and c(0.38) == 1
    assert c.derivative(0.34) == pytest.approx(0.5 / 0.08 * CHI.derivative(0.75))
    with pytest.raises(ConfigError):
        ScaledCutoff(CHI, 0.4, 0.4)


# ---------------------------------------------------------------- weights


@pytest.mark.parametrize("B", [4.0, 6.0, 8.0])
@pytest.mark.parametrize("eps", [0.1, 0.025])
def test_phi_limits_and_sandwich(B, eps):
    d = np.linspace(0, 0.7, 1401)
    w = phi_field(d, B, eps)
    s = B * eps
    near = d <= s / 2
    far = d >= s
    assert np.allclose(w.phi[near], d[near] - 0.5 * s * np.log(B / 2))
    assert np.allclose(w.phi[far], d[far] - 0.5 * s * np.log(2 * d[far] / s) - 0.5 * s * np.log(B / 2))
    assert np.all(w.phi <= d + 1e-15)
    # the bracket constant is attained at d = 0
    assert sandwich_constant(w) == pytest.approx((B / 2) ** (B / 2), rel=1e-12)


def test_phi_rejects_bad_input():
    with pytest.raises(ConfigError):
        phi_field(np.zeros(3), 0.0, 0.1)
    with pytest.raises(ConfigError):
        phi_field(None, 6.0, 0.1)


def test_phi_alpha_upper_brackets(ti1):
    w = phi_alpha_field(ti1.distance(), 0.3, 6.0, 0.3, 0.08, 0.05)
    rep = sandwich_report(w)
    assert rep["off_K_upper"] and rep["tilde_bracket"]
    assert w.delta >= 2 * ti1.grid.h
    # outside D + 2 eta both cutoffs are one
    far = w.d >= w.D + 2 * w.eta
    assert np.allclose(w.phi_alpha[far], 0.85 * w.d_delta[far])


@pytest.mark.parametrize("eps, admissible", [(0.05, False), (0.01, False), (1e-3, True)])
def test_phi_alpha_lower_bracket_needs_small_eps(ti1, eps, admissible):
    # the log correction only fits under alpha d / 4 once eps <= eps_alpha
    w = phi_alpha_field(ti1.distance(), 0.3, 6.0, 0.3, 0.08, eps)
    assert w.eps_admissible is admissible
    assert sandwich_report(w)["off_K_lower"] is admissible


@pytest.mark.parametrize("kw, msg", [
    (dict(alpha=0.0), "alpha"), (dict(alpha=1.5), "alpha"), (dict(D=-0.1), "positive"), (dict(D=0.6), "max d"),
])
def test_phi_alpha_config_errors(ti1, kw, msg):
    args = dict(alpha=0.3, B=6.0, D=0.3, eta=0.08, eps=0.05) | kw
    with pytest.raises(ConfigError, match=msg):
        phi_alpha_field(ti1.distance(), **args)


def test_admissible_delta_names_minimal_alpha(ti1):
    with pytest.raises(ConfigError, match="smallest supported alpha"):
        admissible_delta(ti1.distance(), 1e-9, 0.3, 0.05)


def test_admissible_delta_condition(ti1):
    f = ti1.distance()
    delta, m = admissible_delta(f, 0.3, 0.3, 0.05)
    off = f.values > 0.3
    assert np.all(0.85 * np.abs(m.values - f.values)[off] <= 0.15 * f.values[off])


def test_eps_alpha_is_threshold():
    d = np.linspace(0, 0.678, 500)
    e = eps_alpha(d, 0.3, 6.0, 0.3)
    dd = d[d > 0.3]
    cond = lambda x: np.all(3 * x * np.log(dd / x) <= 0.075 * dd)
    assert cond(e) and not cond(1.01 * e)
    # the defaults need eps ~ 1e-3, below the grid-resolvable range
    assert 1e-3 < e < 2e-3


# ------------------------------------------------------------ F+- and regions


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.floats(0.01, 0.2))
def test_fpm_identity(W, eps):
    d = np.array([0.0, 0.05, 0.5, 1.0])
    fp = f_pm(d, np.asarray(W), np.zeros(4), 0.0, 2.0, eps)
    inner = d < 2 * eps
    assert np.allclose(fp.F_plus ** 2 - fp.F_minus ** 2, fp.total)
    assert np.allclose(np.minimum(fp.F_plus, fp.F_minus) ** 2, np.where(inner, eps, 0.0))
    assert np.array_equal(fp.omega_minus, np.asarray(W) < 0)


@pytest.fixture(scope="module")
def ground(ti1):
    form = assemble(ti1.grid, ti1.kernel, ti1.potential, 0.05, "dirichlet")
    return form, lowest_eigenpairs(form, component=ti1.grid.well_index)[0]


def test_fpm_inequality_ground_state(ti1, ground):
    form, u = ground
    w = phi_alpha_field(ti1.distance(), 0.3, 6.0, 0.3, 0.08, 0.05)
    V = form.potential + form.kappa
    for phi in (np.zeros(form.size), w.phi_alpha):
        fp = f_pm(ti1.distance().values, V, v_phi(form.table, phi), u.value, 6.0, 0.05)
        res = fpm_inequality(u, u.value, phi, fp, form)
        assert res.holds and res.slack >= 0
        assert np.isfinite(res.log_lhs)


def test_fpm_inequality_requires_positive_F(ti1, ground):
    form, u = ground
    fp = f_pm(np.full(form.size, 1.0), np.zeros(form.size), np.zeros(form.size), 0.0, 2.0, 0.05)
    with pytest.raises(ConfigError, match="positive"):
        fpm_inequality(u, 0.0, 0.0, fp, form)


def test_sharpness_probe_reports(ti1, ground):
    form, u = ground
    V = form.potential + form.kappa
    fp = f_pm(ti1.distance().values, V, np.zeros(form.size), u.value, 6.0, 0.05)
    a = sharpness_probe(form, 0.0, fp, u.value, trials=20, seed=4, pairs=[u])
    b = sharpness_probe(form, 0.0, fp, u.value, trials=20, seed=4, pairs=[u])
    assert a == b and a["trials"] == 20 and 0 <= a["violations"] <= 20


def test_region_check_passes_in_regime(ti1):
    eps = 0.02
    form = assemble(ti1.grid, ti1.kernel, ti1.potential, eps, "neumann")
    E = lowest_eigenpairs(form, component=ti1.grid.well_index)[0].value
    w = phi_alpha_field(ti1.distance(), REGIME["alpha"], REGIME["B"], REGIME["D"], REGIME["eta"], eps)
    rep = three_region_check(w, form, ti1.symbol, ti1.potential, E=E, R0=REGIME["R0"])
    assert rep.passed and rep.omega_minus_ok
    assert rep.B_required <= REGIME["B"]
    assert rep.C3 == 0 and rep.C1 > 0 and rep.C4 > 0
    assert sum(rep.counts) == ti1.grid.size


def test_region_check_middle_fails_at_defaults(ti1, ground):
    # eps = 0.05 lies far above eps_alpha ~ 1.4e-3, so the middle bound is not expected
    form, u = ground
    w = phi_alpha_field(ti1.distance(), 0.3, 6.0, 0.3, 0.08, 0.05)
    rep = three_region_check(w, form, ti1.symbol, ti1.potential, E=u.value, R0=2.0)
    assert not w.eps_admissible
    assert not rep.middle_ok and not rep.passed


def test_region_check_needs_phi_alpha(ti1, ground):
    form, _ = ground
    with pytest.raises(ConfigError):
        three_region_check(phi_field(ti1.distance(), 6.0, 0.05), form, ti1.symbol, ti1.potential)


def test_smallest_passing_alpha(ti1):
    eps = 0.02
    form = assemble(ti1.grid, ti1.kernel, ti1.potential, eps, "dirichlet")
    E = lowest_eigenpairs(form, component=ti1.grid.well_index)[0].value
    ok, smallest = smallest_passing_alpha(ti1.distance(), form, ti1.symbol, ti1.potential, 4.0, 0.2, 0.2, E, 1.5,
                                          [0.3, 0.6, 1.0])
    assert 1.0 in ok and smallest == min(ok)


# ------------------------------------------------------------------ decay


def test_decay_report_on_exact_exponential(ti1):
    g, d = ti1.grid, ti1.distance().values
    eps, B = 0.05, 6.0
    u = np.exp(-d / eps)
    rep = decay_report(u, d, eps, B, 0.3, g)
    assert rep.slope == pytest.approx(1.0, abs=1e-12)
    assert rep.intercept == pytest.approx(0.0, abs=1e-12)
    ref = np.linalg.norm((1 + d / eps) ** -B) / np.linalg.norm(u)
    assert rep.r1 == pytest.approx(ref, rel=1e-12)
    assert rep.underflow_nodes == 0 and rep.well_value_ratio > 0


def test_decay_report_split_norm(ti1, ground):
    form, u = ground
    w = phi_alpha_field(ti1.distance(), 0.3, 6.0, 0.3, 0.08, 0.05)
    rep = decay_report(u, ti1.distance().values, 0.05, 6.0, 0.3, ti1.grid, w)
    assert rep.split_ok
    assert rep.r3 <= rep.r_phi * (1 + 1e-12)
    assert 0.9 <= rep.slope <= 1.1


def test_sweep_point_row_and_raise(ti1):
    f = ti1.distance()
    row, obj = sweep_point(f, ti1.kernel, ti1.potential, ti1.symbol, 0.02, "neumann", **REGIME)
    for key in ("epsilon", "mode", "E0", "r1", "r2_alpha", "r3", "slope_fit", "lemma23_slack", "region_flags",
                "C0", "C1", "C2", "C3", "C4", "Cprime"):
        assert key in row
    assert row["region_flags"] == "11111" and row["B_region"] == REGIME["B"]
    # a larger window constant forces B up to 1.05 C0 (1 + R0 + C3), which then closes
    row2, obj2 = sweep_point(f, ti1.kernel, ti1.potential, ti1.symbol, 0.02, "neumann", **dict(REGIME, R0=2.5))
    assert row2["B_region"] > REGIME["B"] and row2["region_flags"] == "11111"
    assert row2["B_region"] >= obj2["region"].B_required


def test_sweep_point_raise_gives_up(ti1):
    # past R0 ~ 3 the raised B pushes the middle region negative; Omega_- is left unchecked
    row, obj = sweep_point(ti1.distance(), ti1.kernel, ti1.potential, ti1.symbol, 0.02, "neumann",
                           **dict(REGIME, R0=3.0))
    assert row["region_flags"][-1] == "-"
    assert obj["region"].omega_minus_ok is None and not obj["region"].middle_ok
