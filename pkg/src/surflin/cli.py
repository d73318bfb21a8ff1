"""Command-line entry point: ``surflin check | solve | sweep | report``.

Exit codes: 0 success, 1 validation failure, 2 solver failure, 3 incompatible load.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checks import run_battery
from .config import ConfigError, RunConfig, parse_config
from .functional import Assembler, IncompatibleLoadError, VariantTag, compatibility_scan, is_equilibrated
from .gamma import SweepError, _preconditioner, run_sweep
from .grid import build_space, project_rigid
from .solve import extract_rotation, minimize
from .tensor import rotation_angle

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_INCOMPATIBLE = 0, 1, 2, 3
OK_REASONS = ("grad", "step")

log = logging.getLogger("surflin")


def _override(cfg: RunConfig, args) -> RunConfig:
    sweep, output = cfg.sweep, cfg.output
    if getattr(args, "threads", None):
        sweep = replace(sweep, threads=args.threads)
    if getattr(args, "out", None):
        output = replace(output, directory=args.out)
    if getattr(args, "format", None):
        fmts = tuple(f.strip() for f in args.format.split(",") if f.strip())
        if not fmts or any(f not in ("csv", "json") for f in fmts):
            raise ConfigError(f"--format: expected a subset of csv,json, got {args.format!r}")
        output = replace(output, formats=fmts)
    return replace(cfg, sweep=sweep, output=output)


def cmd_check(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    results = run_battery(cfg.sweep.material, dict(cfg.check_tolerances))
    for r in results:
        print(r.line(), file=out)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} propert{'y' if len(failed) == 1 else 'ies'} failed: {', '.join(failed)}", file=out)
        return EXIT_INVALID
    print(f"all {len(results)} properties passed", file=out)
    return EXIT_OK


def write_coeffs(path: Path, coeffs: np.ndarray):
    with open(path, "w") as fh:
        fh.write(f"# shape {' '.join(str(n) for n in coeffs.shape)}\n")
        for v in coeffs.ravel():
            fh.write(f"{v:.17g}\n")


def read_coeffs(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != ["#", "shape"]:
            raise ValueError(f"{path}: missing shape header")
        shape = tuple(int(n) for n in header[2:])
        return np.array([float(line) for line in fh]).reshape(shape)


def cmd_solve(cfg: RunConfig, eps: float | None, out=None) -> int:
    out = out or sys.stdout
    s = cfg.sweep
    space = build_space(s.grid)
    L = s.load.build(space)
    traction = s.problem == "traction"
    if traction:
        if not is_equilibrated(L, space):
            raise SweepError("traction problem needs an equilibrated load (null resultant and moment)")
        scan = compatibility_scan(L, space)
        if not scan.is_compatible:
            raise IncompatibleLoadError(scan)
    regime = "limit" if traction and s.family != "I" else "linearized"
    P = _preconditioner(space, s)
    lim = Assembler(space, s.material, L, VariantTag(s.family, regime), threads=s.threads)
    ref, lim_rep = minimize(space.zeros(), lim.fun_and_grad, opts=s.solver, precond=P)
    if traction:
        ref = project_rigid(ref, "translation" if s.family == "I" else "rigid")
    result = {"family": s.family, "problem": s.problem, "eps": eps,
              "limit_regime": regime, "limit_energy": lim.energy(ref.coeffs).as_dict(),
              "limit_solve": lim_rep.as_dict()}
    lim.close()
    field, rep = ref, lim_rep
    if eps is not None:
        A = Assembler(space, s.material, L, VariantTag(s.family, "nonlinear"), eps, s.threads)
        field, rep = minimize(ref, A.fun_and_grad, opts=s.solver, precond=P)
        result["energy"] = A.energy(field.coeffs).as_dict()
        A.close()
        if traction:
            result["rotation_angle"] = rotation_angle(extract_rotation(field, eps))
    else:
        result["energy"] = result["limit_energy"]
    result["solve"] = rep.as_dict()
    d = Path(cfg.output.directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "solve.json").write_text(json.dumps(result, indent=2))
    write_coeffs(d / "coeffs.txt", field.coeffs)
    print(f"energy {result['energy']['total']:.16e}  reason {rep.reason}  -> {d}", file=out)
    return EXIT_OK if rep.reason in OK_REASONS and lim_rep.reason in OK_REASONS else EXIT_SOLVER


def cmd_sweep(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    report = run_sweep(cfg.sweep)
    d = Path(cfg.output.directory)
    d.mkdir(parents=True, exist_ok=True)
    if "csv" in cfg.output.formats:
        (d / "sweep.csv").write_text(report.to_csv())
    if "json" in cfg.output.formats:
        doc = report.to_dict()
        doc["config"] = cfg.to_dict()
        (d / "sweep.json").write_text(json.dumps(doc, indent=2))
    print(render_table(report.to_dict()["rows"]), file=out)
    print(f"order(gap) = {report.order_gap}  order(dist) = {report.order_dist}  -> {d}", file=out)
    return EXIT_SOLVER if report.failed else EXIT_OK


def _load_rows(path: Path):
    if path.suffix == ".csv":
        with open(path) as fh:
            return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
    doc = json.loads(path.read_text())
    rows = []
    for r in doc["rows"]:
        flat = {"eps": r["eps"], "dist": r["dist"], "gap": r["gap"]}
        flat.update(r["energy"] or {})
        if r.get("theta") is not None:
            flat["theta"] = r["theta"]
        rows.append(flat)
    return rows


def render_table(rows) -> str:
    cols = ["eps", "total", "dist", "gap"] + (["theta"] if any(r.get("theta") is not None for r in rows) else [])
    flat = [{**(r.get("energy") or {}), **r} for r in rows]
    lines = ["  ".join(f"{c:>14}" for c in cols)]
    for r in flat:
        lines.append("  ".join(f"{_num(r.get(c)):>14}" for c in cols))
    gaps = [r.get("gap") for r in flat]
    tail = [g for g in gaps if g is not None and math.isfinite(g)][-4:]
    mono = all(b <= a for a, b in zip(tail, tail[1:]))
    lines.append(f"gap nonincreasing over final {len(tail)} rows: {'yes' if mono else 'no'}")
    return "\n".join(lines)


def _num(v):
    return "nan" if v is None else f"{v:.6e}"


def cmd_report(result_path, out_dir=None, out=None) -> int:
    out = out or sys.stdout
    path = Path(result_path)
    if path.is_dir():
        path = path / "sweep.json" if (path / "sweep.json").exists() else path / "sweep.csv"
    rows = _load_rows(path)
    print(render_table(rows), file=out)
    d = Path(out_dir) if out_dir else path.parent
    d.mkdir(parents=True, exist_ok=True)
    gap_file = d / f"{path.stem}_gap.dat"
    with open(gap_file, "w") as fh:
        fh.write("# eps gap\n")
        for r in rows:
            fh.write(f"{r['eps']:.16e} {r['gap']:.16e}\n")
    print(f"gap data -> {gap_file}", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="surflin", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("check", "solve", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--format")
        p.add_argument("--threads", type=int)
        if name == "solve":
            p.add_argument("--eps", type=float)
    p = sub.add_parser("report")
    p.add_argument("result")
    p.add_argument("--out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.result, args.out)
        cfg = _override(parse_config(args.config), args)
        if args.command == "check":
            return cmd_check(cfg)
        if args.command == "solve":
            if args.eps is not None and not 0 < args.eps < 1:
                raise ConfigError("--eps must lie in (0, 1)")
            return cmd_solve(cfg, args.eps)
        return cmd_sweep(cfg)
    except IncompatibleLoadError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        print(exc.scan.describe(), file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except (ConfigError, SweepError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
