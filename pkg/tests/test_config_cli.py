import csv
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jumpagmon import cli
from jumpagmon.config import evaluate, parse_config, spatial_function
from jumpagmon.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
[domain]
dimension = 1
h = 0.01

[sweep]
epsilon = [0.05]
b = 4
alpha = [1.0]
r0 = 1.5
d = 0.2
eta = 0.2
modes = {modes}

[solver]
seed = 3
{solver}

[output]
emit = {emit}
"""


def small(tmp_path, modes="dirichlet, neumann", solver="", emit="symbol, distance, spectrum, agmon"):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL.format(modes=modes, solver=solver, emit=emit))
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ----------------------------------------------------------------- parsing


def test_defaults():
    cfg = parse_config(text="")
    assert cfg.sweep.epsilons == [0.1, 0.05, 0.025]
    assert (cfg.sweep.B, cfg.sweep.alphas, cfg.sweep.R0, cfg.sweep.D, cfg.sweep.eta) == (6.0, [0.3], 2.0, 0.3, 0.08)
    assert cfg.sweep.modes == ["dirichlet", "neumann"]
    assert cfg.grid.h == pytest.approx(1 / 400) and cfg.grid.dim == 1
    assert cfg.solver.tol == 1e-10 and cfg.solver.maxiter is None
    assert "matrix" not in cfg.output.emit


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.cfg")))
def test_shipped_configs_parse(name):
    cfg = parse_config(CONFIGS / name)
    assert cfg.path.endswith(name)


def test_misaligned_epsilon_names_both_values():
    with pytest.raises(ConfigError) as exc:
        parse_config(text="[domain]\nh = 0.03\n\n[sweep]\nepsilon = [0.1]\n")
    msg = str(exc.value)
    assert "epsilon=0.1" in msg and "h=0.03" in msg and "<text>:5" in msg


def test_unknown_variant_lists_alternatives():
    with pytest.raises(ConfigError, match="expected one of atomic, density") as exc:
        parse_config(text="[kernel]\nvariant = levy\n")
    assert "<text>:2: [kernel] variant" in str(exc.value)


@pytest.mark.parametrize("text, match", [
    ("[kernal]\nvariant = atomic\n", "unknown section \\[kernal\\]"),
    ("[sweep]\n\nepsilon = [0.05]\nbeta = 3\n", "<text>:4: \\[sweep\\] beta: unknown key"),
    ("[sweep]\nalpha = [0.0]\n", "alpha=0.0 must lie in"),
    ("[sweep]\nmodes = robin\n", "unknown boundary mode 'robin'"),
    ("[solver]\nmaxiter = 0\n", "at least 1"),
    ("[output]\nemit = csv\n", "unknown emit flag 'csv'"),
    ("[domain]\ndimension = 3\n", "must be 1 or 2"),
    ("[kernel]\nweights = [0.5]\n", "1 weights for 2 offsets"),
    ("[kernel]\nvariant = density\nprofile = exponential\n", "needs a rate"),
    ("[sweep]\nb = 1/0\n", "cannot evaluate"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text=text)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read config"):
        parse_config("/nonexistent/run.cfg")


def test_matrix_emit_flag():
    cfg = parse_config(text="[output]\nemit = spectrum, matrix\n")
    assert cfg.output.emit == ["spectrum", "matrix"]


@settings(max_examples=50, deadline=None)
@given(a=st.integers(-50, 50), b=st.integers(1, 50))
def test_evaluate_arithmetic(a, b):
    assert evaluate(f"{a}/{b} + 2*{a}") == pytest.approx(a / b + 2 * a)


def test_evaluate_rejects_names():
    with pytest.raises(ValueError):
        evaluate("__import__('os')")


def test_spatial_weight_expression():
    f = spatial_function("1 + 0.5*cos(3*x0)", 1)
    x = np.linspace(-1, 1, 5)[:, None]
    assert np.allclose(f(x), 1 + 0.5 * np.cos(3 * x[:, 0]))
    assert f.expression == "1 + 0.5*cos(3*x0)"
    assert spatial_function("1/4", 1) == 0.25


def test_varying_atom_pair_reversible():
    # the same text on +e and -e parses to distinct callables that must still pair up
    cfg = parse_config(text="[kernel]\noffsets = [[1.0], [-1.0]]\nweights = [1 + 0.5*x0**2, 1 + 0.5*x0**2]\n")
    assert cfg.kernel.variant.structurally_reversible()
    bad = parse_config(text="[kernel]\noffsets = [[1.0], [-1.0]]\nweights = [1 + x0**2, 2 + x0**2]\n")
    assert not bad.kernel.variant.structurally_reversible()


# --------------------------------------------------------------------- CLI


@pytest.mark.parametrize("argv, code", [
    (["--config", str(CONFIGS / "ti1.cfg"), "--command", "validate"], 0),
    (["--config", str(CONFIGS / "degenerate_2d.cfg"), "--command", "validate"], 2),
    (["--config", str(CONFIGS / "ti1.cfg"), "--command", "simulate"], 1),
    (["--command", "validate"], 1),
])
def test_exit_codes(tmp_path, argv, code):
    assert cli.main(argv + ["--out", str(tmp_path / "o")]) == code


def test_no_convergence_exit_and_manifest(tmp_path):
    out = tmp_path / "nc"
    code = cli.main(["--config", str(CONFIGS / "no_convergence.cfg"), "--command", "spectrum", "--out", str(out)])
    assert code == 3
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "NumericalFailure" and "best residual" in man["error"]


def test_misaligned_config_exit(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[domain]\nh = 0.03\n\n[sweep]\nepsilon = [0.1]\n")
    assert cli.main(["--config", str(p), "--command", "validate", "--out", str(tmp_path / "o")]) == 1


def test_degenerate_writes_manifest_and_validation(tmp_path):
    out = tmp_path / "nested" / "deg"
    cli.main(["--config", str(CONFIGS / "degenerate_2d.cfg"), "--command", "validate", "--out", str(out)])
    man = json.loads((out / "manifest.json").read_text())
    val = json.loads((out / "validation.json").read_text())
    assert man["status"] == "HypothesisViolation" and man["command"] == "validate"
    assert not val["kernel"]["passed"] and val["kernel"]["flags"]


def test_tables_and_manifest(tmp_path):
    cfgp = small(tmp_path)
    out = tmp_path / "out"
    for cmd in ("symbol", "distance", "spectrum", "agmon-sweep"):
        assert cli.main(["--config", cfgp, "--command", cmd, "--out", str(out)]) == 0
    assert list(read_csv(out / "symbol.csv")[0]) == list(cli.SYMBOL_COLUMNS)
    dist = read_csv(out / "distance.csv")
    assert list(dist[0]) == list(cli.DISTANCE_COLUMNS) and len(dist) == 199
    srows = read_csv(out / "spectrum.csv")
    assert {r["mode"] for r in srows} == {"dirichlet", "neumann"}
    ag = read_csv(out / "agmon.csv")
    assert list(ag[0]) == list(cli.AGMON_COLUMNS) and len(ag) == 2
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and man["status"] == "ok" and "agmon.csv" in man["files"]
    assert set(man["versions"]) >= {"jumpagmon", "numpy", "scipy", "python"}


def test_matrix_dump(tmp_path):
    out = tmp_path / "m"
    cfgp = small(tmp_path, modes="dirichlet", emit="spectrum, matrix")
    assert cli.main(["--config", cfgp, "--command", "spectrum", "--out", str(out)]) == 0
    assert (out / "matrix_dirichlet_0.05.coo").exists()


def test_spectrum_rows_match_solver(tmp_path):
    cfgp = small(tmp_path, modes="neumann", solver="k = 3")
    out = tmp_path / "s"
    cli.main(["--config", cfgp, "--command", "spectrum", "--out", str(out)])
    rows = read_csv(out / "spectrum.csv")
    lam = [float(r["lambda"]) for r in rows]
    assert [int(r["index"]) for r in rows] == [0, 1, 2]
    assert lam == sorted(lam) and all(float(r["residual"]) <= 1e-8 for r in rows)


def test_report_in_passing_regime(tmp_path):
    out = tmp_path / "r"
    assert cli.main(["--config", small(tmp_path), "--command", "report", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and rep["failures"] == {}


def test_serial_rerun_identical(tmp_path):
    cfgp = small(tmp_path)
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert cli.main(["--config", cfgp, "--command", "agmon-sweep", "--out", str(o), "--serial"]) == 0
    assert (outs[0] / "agmon.csv").read_bytes() == (outs[1] / "agmon.csv").read_bytes()
