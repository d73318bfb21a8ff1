"""JSON run configuration.

Schema (every block and key optional unless noted)::

    {
      "material": {"lambda": 1, "mu": 1, "kappa": 1, "gamma": 1, "p": 2, "q": 2, "dim": 2},
      "grid":     {"lx": 1, "ly": 1, "nx": 12, "ny": 12, "quad_order": 4},
      "load":     {"body": ["0.05", "0.02*x1"],
                   "traction": {"left": ["-0.05", "0"], "right": ["0.05", "0"]},
                   "equilibrate": false},
      "problem":  {"family": "G", "kind": "dirichlet", "dirichlet_edges": ["left"],
                   "eps": [0.25, 0.125]  or  {"j_min": 2, "j_max": 8}},
      "solver":   {"max_iter": 2000, "tol_grad": 1e-9, "tol_step": 1e-12, "memory": 10,
                   "armijo_c": 1e-4, "backtrack": 0.5},
      "assembly": {"threads": 1},
      "output":   {"directory": "out", "formats": ["csv", "json"]},
      "check":    {"tolerances": {"gradient_fd": 1e-6}}
    }

Load components are affine expressions ``c0 + c1*x1 + c2*x2``: a sum of
signed terms, each a number, ``x1``/``x2``, or ``number*x1``/``number*x2``.
``dirichlet_edges`` defaults to ``["left"]`` for the Dirichlet problem and to
no edges for the traction problem.
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, fields

from .functional import LoadConfig
from .gamma import DEFAULT_EPS, SweepConfig, SweepError
from .grid import EDGES, GridConfig, GridError
from .material import MaterialSpec, ParameterError
from .solve import SolveOptions


class ConfigError(ValueError):
    pass


_MATERIAL_KEYS = {"lambda": "lam", "mu": "mu", "kappa": "kappa", "gamma": "gamma",
                  "p": "p", "q": "q", "dim": "dim"}
_GRID_KEYS = ("lx", "ly", "nx", "ny", "quad_order")
_SOLVER_KEYS = tuple(f.name for f in fields(SolveOptions))
_BLOCKS = ("material", "grid", "load", "problem", "solver", "assembly", "output", "check")
_FORMATS = ("csv", "json")

_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TERM = re.compile(rf"([+-])?(?:({_NUM})(?:\*(x1|x2))?|(x1|x2))")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple = _FORMATS


@dataclass(frozen=True)
class RunConfig:
    sweep: SweepConfig = SweepConfig()
    output: OutputConfig = OutputConfig()
    check_tolerances: tuple = ()

    def to_dict(self) -> dict:
        s = self.sweep
        m = s.material
        return {
            "material": {k: getattr(m, a) for k, a in _MATERIAL_KEYS.items()},
            "grid": {k: getattr(s.grid, k) for k in _GRID_KEYS},
            "load": {
                "body": [render_affine(c) for c in s.load.body],
                "traction": {e: [render_affine(c) for c in comps] for e, comps in s.load.traction},
                "equilibrate": s.load.equilibrate,
            },
            "problem": {"family": s.family, "kind": s.problem,
                        "dirichlet_edges": list(s.grid.dirichlet_edges), "eps": list(s.eps)},
            "solver": asdict(s.solver),
            "assembly": {"threads": s.threads},
            "output": {"directory": self.output.directory, "formats": list(self.output.formats)},
            "check": {"tolerances": dict(self.check_tolerances)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def parse_affine(expr, where: str = "expression") -> tuple:
    """``"c0 + c1*x1 + c2*x2"`` (terms in any order, repeats summed) -> (c0, c1, c2)."""
    if isinstance(expr, bool):
        raise ConfigError(f"{where}: expected a number or affine expression")
    if isinstance(expr, (int, float)):
        return (float(expr), 0.0, 0.0)
    if not isinstance(expr, str):
        raise ConfigError(f"{where}: expected a number or affine expression")
    gap = re.search(r"[\w.]\s+[\w.]", expr)
    if gap:
        raise ConfigError(f"{where}: cannot parse {expr!r} at column {gap.start() + 2}")
    s = expr.replace(" ", "")
    if not s:
        raise ConfigError(f"{where}: empty expression")
    out = [0.0, 0.0, 0.0]
    pos = 0
    while pos < len(s):
        m = _TERM.match(s, pos)
        if not m or m.end() == pos or (pos > 0 and not m.group(1)):
            raise ConfigError(f"{where}: cannot parse {expr!r} at column {pos + 1}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        if m.group(2) is not None:
            val, var = float(m.group(2)), m.group(3)
        else:
            val, var = 1.0, m.group(4)
        out[{None: 0, "x1": 1, "x2": 2}[var]] += sign * val
        pos = m.end()
    return tuple(out)


def render_affine(c) -> str:
    def term(v, suffix):
        return f"{'-' if v < 0 else '+'} {abs(v)!r}{suffix}"

    head = repr(float(c[0]))
    return f"{head} {term(c[1], '*x1')} {term(c[2], '*x2')}"


def _check_keys(block: dict, allowed, name: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{name}: expected an object")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"{name}: unknown field(s) {', '.join(unknown)}")


def _pair(comps, where):
    if not isinstance(comps, list) or len(comps) != 2:
        raise ConfigError(f"{where}: expected a list of two component expressions")
    return tuple(parse_affine(c, f"{where}[{i}]") for i, c in enumerate(comps))


def _eps_schedule(spec):
    if spec is None:
        return DEFAULT_EPS
    if isinstance(spec, dict):
        _check_keys(spec, ("j_min", "j_max"), "problem.eps")
        lo, hi = spec.get("j_min", 2), spec.get("j_max", 8)
        return tuple(2.0**-j for j in range(int(lo), int(hi) + 1))
    if isinstance(spec, list):
        return tuple(float(e) for e in spec)
    raise ConfigError("problem.eps: expected a list or {j_min, j_max}")


def config_from_dict(raw: dict) -> RunConfig:
    _check_keys(raw, _BLOCKS, "config")
    mat = raw.get("material", {})
    _check_keys(mat, _MATERIAL_KEYS, "material")
    grid = raw.get("grid", {})
    _check_keys(grid, _GRID_KEYS, "grid")
    load = raw.get("load", {})
    _check_keys(load, ("body", "traction", "equilibrate"), "load")
    prob = raw.get("problem", {})
    _check_keys(prob, ("family", "kind", "dirichlet_edges", "eps"), "problem")
    solver = raw.get("solver", {})
    _check_keys(solver, _SOLVER_KEYS, "solver")
    assembly = raw.get("assembly", {})
    _check_keys(assembly, ("threads",), "assembly")
    out = raw.get("output", {})
    _check_keys(out, ("directory", "formats"), "output")
    check = raw.get("check", {})
    _check_keys(check, ("tolerances",), "check")

    try:
        material = MaterialSpec(**{_MATERIAL_KEYS[k]: v for k, v in mat.items()})
    except ParameterError as exc:
        raise ConfigError(f"material: {exc}") from exc
    if material.dim != 2:
        raise ConfigError("material.dim: the field solver is two-dimensional")

    kind = prob.get("kind", "dirichlet")
    edges = prob.get("dirichlet_edges", ["left"] if kind == "dirichlet" else [])
    if not isinstance(edges, list) or any(e not in EDGES for e in edges):
        raise ConfigError(f"problem.dirichlet_edges: expected a list drawn from {list(EDGES)}")
    try:
        grid_cfg = GridConfig(**grid, dirichlet_edges=tuple(edges))
    except (GridError, TypeError) as exc:
        raise ConfigError(f"grid: {exc}") from exc

    body = load.get("body", [0, 0])
    trac = load.get("traction", {})
    _check_keys(trac, EDGES, "load.traction")
    try:
        load_cfg = LoadConfig(
            body=_pair(body, "load.body"),
            traction={e: _pair(c, f"load.traction.{e}") for e, c in trac.items()},
            equilibrate=bool(load.get("equilibrate", False)),
        )
        solve_opts = SolveOptions(**solver)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"load/solver: {exc}") from exc

    threads = assembly.get("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        raise ConfigError("assembly.threads: expected a positive integer")
    try:
        sweep = SweepConfig(
            family=prob.get("family", "G"), problem=kind, eps=_eps_schedule(prob.get("eps")),
            grid=grid_cfg, material=material, load=load_cfg, solver=solve_opts, threads=threads,
        )
    except (SweepError, ValueError) as exc:
        raise ConfigError(f"problem: {exc}") from exc

    formats = tuple(out.get("formats", _FORMATS))
    if not formats or any(f not in _FORMATS for f in formats):
        raise ConfigError(f"output.formats: expected a non-empty subset of {list(_FORMATS)}")
    tols = check.get("tolerances", {})
    if not isinstance(tols, dict):
        raise ConfigError("check.tolerances: expected an object")
    return RunConfig(
        sweep=sweep,
        output=OutputConfig(str(out.get("directory", "out")), formats),
        check_tolerances=tuple(sorted((str(k), v) for k, v in tols.items())),
    )


def parse_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return config_from_dict(raw)
