"""Command-line front end: ``jumpagmon --config FILE --command NAME [--out DIR] [--serial]``.

Exit codes: 0 success, 1 configuration error, 2 hypothesis violation,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import platform
import sys
import time

import numpy as np
import scipy

from .agmon import sweep_point
from .config import COMMANDS, ExperimentConfig, parse_config
from .errors import AgmonLabError, ConfigError, HypothesisViolation
from .finsler import LengthOracle, distance_field, eikonal_residual
from .kernel import AtomicKernel, reversibility_residual, validate_hypotheses
from .operator import assemble, dump_coo
from .spectra import lowest_eigenpairs
from .symbol import SymbolEvaluator

__version__ = "0.1.0"

SYMBOL_COLUMNS = ("x", "xi", "t0", "t_tilde0", "quadratic_part", "remainder")
DISTANCE_COLUMNS = ("node", "coords", "d", "residual_eq", "residual_ineq", "cutlocus_flag")
SPECTRUM_COLUMNS = ("epsilon", "mode", "index", "lambda", "residual")
AGMON_COLUMNS = ("epsilon", "mode", "E0", "r1", "r2_alpha", "r3", "slope_fit", "lemma23_slack",
                 "region_flags", "C0", "C1", "C2", "C3", "C4", "Cprime", "alpha", "B_region", "in_window")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in np.ravel(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


class Run:
    """State of one invocation: config, output directory, timings and results."""

    def __init__(self, cfg: ExperimentConfig, out_dir):
        self.cfg = cfg
        self.out = out_dir
        self.timings = {}
        self.files = []
        self.summary = {}
        self._symbol = None
        self._field = None
        os.makedirs(out_dir, exist_ok=True)

    @property
    def symbol(self):
        if self._symbol is None:
            self._symbol = SymbolEvaluator(self.cfg.kernel)
        return self._symbol

    def emit(self, name, columns, rows):
        path = os.path.join(self.out, name)
        write_csv(path, columns, rows)
        self.files.append(name)

    @contextlib.contextmanager
    def timed(self, key):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.timings[key] = time.perf_counter() - t

    def sample_points(self):
        """The well and the nodes half-way from it towards each bounding-box corner."""
        g = self.cfg.grid
        lo, hi = g.points.min(axis=0), g.points.max(axis=0)
        corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(g.dim, -1).T
        return np.vstack([g.well, 0.5 * (g.well + corners)])

    def distance(self):
        if self._field is None:
            oracle = LengthOracle(self.symbol, self.cfg.potential)
            with self.timed("distance_field"):
                self._field = distance_field(self.cfg.grid, oracle, stencil_radius=self.cfg.stencil_radius)
        return self._field

    # ------------------------------------------------------------- commands

    def validate(self):
        cfg = self.cfg
        k = cfg.kernel
        c_vals = [c for c in (0.5, 1.0, 2.0) if c < k.c_max] or [0.5 * k.c_max]
        with self.timed("validate"):
            rep = validate_hypotheses(k, self.sample_points(), c_vals)
            cfg.potential.validate(cfg.grid.points)
            out = {"kernel": rep.as_dict(), "alignment": {str(e): cfg.grid.check_alignment(e)
                                                          for e in cfg.sweep.epsilons}}
            if not isinstance(k.variant, AtomicKernel):
                out["reversibility_residual"] = max(
                    reversibility_residual(k, e, cfg.grid) for e in cfg.sweep.epsilons)
        with open(os.path.join(self.out, "validation.json"), "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
        self.files.append("validation.json")
        self.summary["validate"] = rep.passed
        if not rep.passed:
            raise HypothesisViolation("; ".join(rep.flags))

    def symbol_table(self):
        cfg, sym = self.cfg, self.symbol
        rows = []
        with self.timed("symbol"):
            for x in self.sample_points():
                Bx = sym.hessian_B(x)
                for s in cfg.symbol_xi:
                    for axis in range(cfg.grid.dim):
                        xi = np.zeros(cfg.grid.dim)
                        xi[axis] = s
                        t0 = float(sym.t0(x, xi))
                        tt = float(sym.t_tilde0(x, xi))
                        q = float(xi @ Bx @ xi)
                        rows.append({"x": x, "xi": xi, "t0": t0, "t_tilde0": tt,
                                     "quadratic_part": q, "remainder": tt - q})
        self.emit("symbol.csv", SYMBOL_COLUMNS, rows)

    def distance_table(self):
        f = self.distance()
        g = self.cfg.grid
        rows = [{"node": i, "coords": g.points[i], "d": f.values[i], "residual_eq": f.residual_eq[i],
                 "residual_ineq": f.residual_ineq[i], "cutlocus_flag": bool(f.cut_mask[i])}
                for i in range(g.size)]
        self.emit("distance.csv", DISTANCE_COLUMNS, rows)
        self.summary["eikonal"] = eikonal_residual(f)

    def spectrum(self):
        cfg = self.cfg
        so = cfg.solver
        rows = []
        with self.timed("spectrum"):
            for eps in cfg.sweep.epsilons:
                for mode in cfg.sweep.modes:
                    form = assemble(cfg.grid, cfg.kernel, cfg.potential, eps, mode)
                    if "matrix" in cfg.output.emit:
                        name = f"matrix_{mode}_{eps:g}.coo"
                        dump_coo(form, os.path.join(self.out, name))
                        self.files.append(name)
                    pairs = lowest_eigenpairs(form, k=so.k, tol=so.tol, maxiter=so.maxiter, seed=so.seed)
                    rows.extend({"epsilon": eps, "mode": mode, "index": j, "lambda": p.value,
                                 "residual": p.residual} for j, p in enumerate(pairs))
        self.emit("spectrum.csv", SPECTRUM_COLUMNS, rows)

    def agmon_sweep(self):
        cfg, sw, so = self.cfg, self.cfg.sweep, self.cfg.solver
        f = self.distance()
        rows, ok = [], True
        with self.timed("agmon_sweep"):
            try:
                for alpha in sw.alphas:
                    for eps in sw.epsilons:
                        for mode in sw.modes:
                            row, obj = sweep_point(f, cfg.kernel, cfg.potential, self.symbol, eps, mode,
                                                   sw.B, alpha, sw.D, sw.eta, sw.R0, k=1, tol=so.tol,
                                                   maxiter=so.maxiter, seed=so.seed)
                            row["alpha"] = alpha
                            rows.append(row)
                            ok &= obj["fpm_check"].holds and obj["region"].passed
            finally:
                self.emit("agmon.csv", AGMON_COLUMNS, rows)
        self.summary["agmon_sweep"] = {"rows": len(rows), "fpm_and_regions_pass": bool(ok)}

    def report(self):
        failures = {}
        for name, fn in (("validate", self.validate), ("symbol", self.symbol_table),
                         ("distance", self.distance_table), ("spectrum", self.spectrum),
                         ("agmon-sweep", self.agmon_sweep)):
            try:
                fn()
            except HypothesisViolation as exc:
                failures[name] = str(exc)
        self.summary["failures"] = failures
        self.summary["passed"] = not failures and self.summary.get("agmon_sweep", {}).get(
            "fpm_and_regions_pass", False)
        with open(os.path.join(self.out, "report.json"), "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True, default=_json_default)
        self.files.append("report.json")
        if failures:
            raise HypothesisViolation("; ".join(f"{k}: {v}" for k, v in failures.items()))


DISPATCH = {"validate": Run.validate, "symbol": Run.symbol_table, "distance": Run.distance_table,
            "spectrum": Run.spectrum, "agmon-sweep": Run.agmon_sweep, "report": Run.report}


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _manifest(run, command, status, error, seed):
    return {
        "command": command, "status": status, "error": error,
        "config": run.cfg.echo if run else None, "config_path": run.cfg.path if run else None,
        "versions": {"jumpagmon": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "seed": seed, "timings": run.timings if run else {}, "files": run.files if run else [],
    }


def run(config, command, out_dir=None):
    """Execute one command and write the manifest.

    Parameters
    ----------
    config : ExperimentConfig or path

    Returns
    -------
    int
        Exit code.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    cfg = config if isinstance(config, ExperimentConfig) else parse_config(config)
    out = out_dir or cfg.output.directory
    r = Run(cfg, out)
    status, error, code = "ok", None, 0
    try:
        DISPATCH[command](r)
    except AgmonLabError as exc:
        status, error, code = type(exc).__name__, str(exc), exc.exit_code
        best = getattr(exc, "best_residual", None)
        if best is not None:
            error += f" (best residual {best:.3e})"
    finally:
        with open(os.path.join(out, "manifest.json"), "w") as fh:
            json.dump(_manifest(r, command, status, error, cfg.solver.seed), fh, indent=2,
                      sort_keys=True, default=_json_default)
    if error:
        print(f"{status}: {error}", file=sys.stderr)
    return code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="jumpagmon", description="Jump-process Agmon decay laboratory.")
    p.add_argument("--config", required=True, metavar="PATH")
    p.add_argument("--command", required=True, choices=COMMANDS)
    p.add_argument("--out", metavar="DIR", help="output directory (overrides [output] directory)")
    p.add_argument("--serial", action="store_true", help="single-threaded BLAS for bit-reproducible output")
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.serial:
            try:
                from threadpoolctl import threadpool_limits
            except ImportError:
                raise ConfigError("--serial needs threadpoolctl (pip install threadpoolctl)") from None
            with threadpool_limits(limits=1):
                return run(args.config, args.command, args.out)
        return run(args.config, args.command, args.out)
    except AgmonLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
