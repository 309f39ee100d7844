"""Sectioned ``key = value`` experiment configuration.

Values are Python-like literals or arithmetic expressions (``1/400``,
``[0.1, 0.05]``). Spatial weights may be expressions in ``x0``, ``x1`` and
``r = |x|`` using ``exp, log, sqrt, sin, cos, cosh, sinh, tanh, abs`` and the
constants ``pi`` and ``e``. Every section is optional; missing keys take the
TI-1 defaults.
"""
from __future__ import annotations

import ast
import configparser
import operator
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .grid import GridDomain
from .kernel import (Atom, AtomicKernel, CompactProfile, DensityKernel, ExponentialProfile,
                     GaussianProfile, KernelSpec)
from .operator import MODES
from .potential import PotentialSpec

SECTIONS = ("kernel", "potential", "domain", "sweep", "solver", "symbol", "output")
KERNEL_VARIANTS = ("atomic", "density")
PROFILES = ("gaussian", "compact", "exponential")
COMMANDS = ("validate", "symbol", "distance", "spectrum", "agmon-sweep", "report")
EMITS = ("symbol", "distance", "spectrum", "agmon", "matrix")

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt, "sin": np.sin, "cos": np.cos,
          "cosh": np.cosh, "sinh": np.sinh, "tanh": np.tanh, "abs": np.abs}
_CONSTS = {"pi": np.pi, "e": np.e, "inf": np.inf}


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, str)):
        return node.value
    if isinstance(node, (ast.List, ast.Tuple)):
        return [_eval(n, env) for n in node.elts]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_eval(node.operand, env))
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        raise ValueError(f"unknown name {node.id!r}")
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
        return _FUNCS[node.func.id](*[_eval(a, env) for a in node.args])
    raise ValueError(f"unsupported expression element {type(node).__name__}")


def evaluate(text, env=None):
    """Evaluate a literal or arithmetic expression without ``eval``."""
    return _eval(ast.parse(text.strip(), mode="eval"), env or {})


def spatial_function(text, dim):
    """Vectorised ``f(points)`` from an expression in ``x0, x1, r``; constants stay floats."""
    tree = ast.parse(text.strip(), mode="eval")
    names = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
    if not names & {"x0", "x1", "r"}:
        return float(_eval(tree, {}))

    def f(points):
        p = np.asarray(points, float).reshape(-1, dim)
        env = {f"x{k}": p[:, k] for k in range(dim)}
        env["r"] = np.linalg.norm(p, axis=1)
        return np.broadcast_to(np.asarray(_eval(tree, env), float), (p.shape[0],)).copy()

    f.expression = text.strip()
    return f


class _Section:
    """Typed access to one section with line numbers in error messages."""

    def __init__(self, cfg, name, lines, path):
        self.name, self.lines, self.path = name, lines, path
        self.items = dict(cfg[name]) if cfg.has_section(name) else {}
        self.used = set()

    def where(self, key):
        line = self.lines.get((self.name, key))
        loc = f"{self.path}:{line}" if line else str(self.path)
        return f"{loc}: [{self.name}] {key}"

    def fail(self, key, msg):
        raise ConfigError(f"{self.where(key)}: {msg}")

    def raw(self, key, default=None):
        self.used.add(key)
        return self.items.get(key, default)

    def value(self, key, default=None, kind=None):
        text = self.raw(key)
        if text is None:
            return default
        try:
            v = evaluate(text)
        except (SyntaxError, ValueError, TypeError, ZeroDivisionError) as exc:
            self.fail(key, f"cannot evaluate {text!r} ({exc})")
        if kind is not None:
            try:
                v = kind(v)
            except (TypeError, ValueError) as exc:
                self.fail(key, f"invalid value {text!r} ({exc})")
        return v

    def choice(self, key, options, default):
        text = self.raw(key, default)
        v = str(text).strip().lower()
        if v not in options:
            self.fail(key, f"unknown value {text!r}; expected one of {', '.join(options)}")
        return v

    def listing(self, key, default, kind=float):
        v = self.value(key, None)
        if v is None:
            return list(default)
        v = v if isinstance(v, list) else [v]
        try:
            return [kind(x) for x in v]
        except (TypeError, ValueError) as exc:
            self.fail(key, f"invalid list entry ({exc})")

    def names(self, key, default):
        text = self.raw(key)
        if text is None:
            return list(default)
        return [t.strip().lower() for t in re.split(r"[,\s]+", text) if t.strip()]

    def check_unused(self):
        extra = sorted(set(self.items) - self.used)
        if extra:
            self.fail(extra[0], "unknown key")


def _line_map(text):
    lines, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), no)
    return lines


@dataclass
class SweepConfig:
    epsilons: list
    B: float
    alphas: list
    R0: float
    D: float
    eta: float
    modes: list


@dataclass
class SolverConfig:
    k: int = 1
    tol: float = 1e-10
    maxiter: int | None = None
    seed: int = 0


@dataclass
class OutputConfig:
    directory: str = "out"
    emit: list = field(default_factory=lambda: list(EMITS[:4]))


@dataclass
class ExperimentConfig:
    """Parsed configuration with constructed domain objects."""

    kernel: KernelSpec
    potential: PotentialSpec
    grid: GridDomain
    sweep: SweepConfig
    solver: SolverConfig
    output: OutputConfig
    symbol_xi: list
    stencil_radius: int | None
    text: str = ""
    path: str = ""
    echo: dict = field(default_factory=dict)


def _atomic(sec, dim, prefix=""):
    offs = sec.value(prefix + "offsets", None)
    if offs is None:
        offs = [[s if k == j else 0.0 for k in range(dim)] for j in range(dim) for s in (1.0, -1.0)]
    wts = sec.raw(prefix + "weights")
    if wts is None:
        wlist = [0.5] * len(offs)
    else:
        wlist = [w.strip() for w in _split_top(wts)]
    if len(wlist) != len(offs):
        sec.fail(prefix + "weights", f"{len(wlist)} weights for {len(offs)} offsets")
    atoms = []
    for o, w in zip(offs, wlist):
        o = np.atleast_1d(np.asarray(o, float))
        if o.size != dim:
            sec.fail(prefix + "offsets", f"offset {o.tolist()} does not have dimension {dim}")
        try:
            atoms.append(Atom(tuple(o), spatial_function(str(w), dim)))
        except (SyntaxError, ValueError) as exc:
            sec.fail(prefix + "weights", f"cannot parse weight {w!r} ({exc})")
    return AtomicKernel(atoms, dim)


def _split_top(text):
    """Split a bracketed comma list at top level: ``[0.5, 1 + x0]`` -> ``['0.5', '1 + x0']``."""
    s = text.strip()
    if s.startswith("[") and s.endswith("]"):
        s = s[1:-1]
    out, depth, cur = [], 0, ""
    for ch in s:
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
            continue
        depth += ch in "(["
        depth -= ch in ")]"
        cur += ch
    if cur.strip():
        out.append(cur)
    return out


def _density(sec, dim, prefix=""):
    prof = sec.choice(prefix + "profile", PROFILES, "gaussian")
    amp = sec.value(prefix + "amplitude", 1.0, float)
    if prof == "gaussian":
        p = GaussianProfile(amp, sec.value(prefix + "scale", 1.0, float))
    elif prof == "compact":
        p = CompactProfile(amp, sec.value(prefix + "radius", 1.0, float))
    else:
        rate = sec.value(prefix + "rate", None, float)
        if rate is None:
            sec.fail(prefix + "rate", "exponential profile needs a rate (its c_max)")
        p = ExponentialProfile(amp, rate)
    sw = sec.raw(prefix + "spatial_weight", "1.0")
    try:
        w = spatial_function(sw, dim)
    except (SyntaxError, ValueError) as exc:
        sec.fail(prefix + "spatial_weight", f"cannot parse {sw!r} ({exc})")
    s0 = sec.value(prefix + "singular_exponent", None, float)
    return DensityKernel(p, dim, w, s0)


def _kernel(sec, dim):
    variant = sec.choice("variant", KERNEL_VARIANTS, "atomic")
    base = _atomic(sec, dim) if variant == "atomic" else _density(sec, dim)
    pv = sec.raw("perturbation", "none").strip().lower()
    pert = None
    if pv not in ("none",) + KERNEL_VARIANTS:
        sec.fail("perturbation", f"unknown value {pv!r}; expected one of none, {', '.join(KERNEL_VARIANTS)}")
    if pv == "atomic":
        pert = _atomic(sec, dim, "perturbation_")
    elif pv == "density":
        pert = _density(sec, dim, "perturbation_")
    cm = sec.value("c_max", None, float)
    kspec = KernelSpec(dim, base, pert)
    if cm is not None and cm > kspec.c_max:
        sec.fail("c_max", f"declared c_max={cm} exceeds the profile's exponential-moment radius {kspec.c_max}")
    return kspec


def _potential(sec, dim):
    fam = sec.choice("family", PotentialSpec.FAMILIES, "quadratic")
    params = {}
    keys = {"matrix": "A", "center": "center", "a": "a", "b": "b",
            "centers": "centers", "depths": "depths", "width": "width"}
    for key, name in keys.items():
        v = sec.value(key, None)
        if v is not None:
            params[name] = v
    if fam == "quadratic" and "A" in params and np.ndim(params["A"]) == 0:
        params["A"] = float(params["A"]) * np.eye(dim)
    try:
        return PotentialSpec(fam, params, dim, sec.value("r1_scale", 0.0, float))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{sec.where('family')}: invalid parameters for {fam} ({exc})") from None


def _domain(sec):
    dim = sec.value("dimension", 1, int)
    if dim not in (1, 2):
        sec.fail("dimension", f"dimension must be 1 or 2, got {dim}")
    shape = sec.choice("shape", ("box", "ball"), "box")
    h = sec.value("h", 1 / 400 if dim == 1 else 0.01, float)
    well = sec.value("well", [0.0] * dim)
    if shape == "box":
        lo = sec.value("lower", [-1.0] * dim)
        hi = sec.value("upper", [1.0] * dim)
        grid = GridDomain.box(lo, hi, h, well)
    else:
        c = sec.value("center", [0.0] * dim)
        grid = GridDomain.ball(c, sec.value("radius", 1.0, float), h, well)
    if grid.dim != dim:
        sec.fail("dimension", f"domain coordinates have dimension {grid.dim}, declared {dim}")
    sr = sec.value("stencil_radius", None)
    return grid, dim, None if sr is None else int(sr)


def parse_config(path=None, text=None):
    """Parse a configuration file (or text) into an :class:`ExperimentConfig`.

    Raises
    ------
    ConfigError
        Naming the offending key and line.
    """
    if text is None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str.lower
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path or '<text>'}: {exc}") from None
    for s in cp.sections():
        if s not in SECTIONS:
            raise ConfigError(f"{path or '<text>'}: unknown section [{s}]; expected one of {', '.join(SECTIONS)}")
    lines = _line_map(text)
    src = path or "<text>"
    secs = {n: _Section(cp, n, lines, src) for n in SECTIONS}

    grid, dim, sr = _domain(secs["domain"])
    kernel = _kernel(secs["kernel"], dim)
    potential = _potential(secs["potential"], dim)

    sw = secs["sweep"]
    eps = sw.listing("epsilon", [0.1, 0.05, 0.025])
    for e in eps:
        if e <= 0:
            sw.fail("epsilon", f"epsilon must be positive, got {e}")
        try:
            grid.check_alignment(e)
        except ConfigError as exc:
            sw.fail("epsilon", str(exc))
    alphas = sw.listing("alpha", [0.3])
    for a in alphas:
        if not 0 < a <= 1:
            sw.fail("alpha", f"alpha={a} must lie in (0, 1]")
    modes = sw.names("modes", MODES)
    for m in modes:
        if m not in MODES:
            sw.fail("modes", f"unknown boundary mode {m!r}; expected one of {', '.join(MODES)}")
    sweep = SweepConfig(eps, sw.value("b", 6.0, float), alphas, sw.value("r0", 2.0, float),
                        sw.value("d", 0.3, float), sw.value("eta", 0.08, float), modes)
    if sweep.D <= 0 or sweep.eta <= 0:
        sw.fail("d" if sweep.D <= 0 else "eta", "D and eta must be positive")
    if sweep.B < 2:
        sw.fail("b", f"B={sweep.B} must be at least 2")

    so = secs["solver"]
    mi = so.value("maxiter", None)
    solver = SolverConfig(so.value("k", 1, int), so.value("tol", 1e-10, float),
                          None if mi is None else int(mi), so.value("seed", 0, int))
    if solver.k < 1:
        so.fail("k", "k must be at least 1")
    if mi is not None and int(mi) < 1:
        so.fail("maxiter", "iteration budget must be at least 1")

    sy = secs["symbol"]
    xi = sy.listing("xi", [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0])

    out = secs["output"]
    emit = out.names("emit", EMITS[:4])
    for e in emit:
        if e not in EMITS:
            out.fail("emit", f"unknown emit flag {e!r}; expected one of {', '.join(EMITS)}")
    output = OutputConfig(str(out.raw("directory", "out")).strip(), emit)

    for s in secs.values():
        s.check_unused()
    echo = {s: dict(cp[s]) for s in cp.sections()}
    return ExperimentConfig(kernel, potential, grid, sweep, solver, output, xi, sr, text, str(src), echo)
