"""Epsilon sweeps comparing nonlinear minimizers with the minimizers of the limit functionals."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .functional import (
    Assembler, EnergyBreakdown, IncompatibleLoadError, LoadConfig, VariantTag,
    compatibility_scan, is_equilibrated, quadratic_hessian,
)
from .grid import GridConfig, build_space, norms, project_rigid, quotient_distance
from .material import MaterialSpec
from .solve import SolveOptions, corrected_displacement, extract_rotation, make_preconditioner, minimize
from .tensor import rotation_angle

log = logging.getLogger(__name__)

DEFAULT_EPS = tuple(2.0**-j for j in range(2, 9))
CSV_COLUMNS = ("eps", "bulk", "hyper", "surface", "load", "total", "dist", "gap")
FIT_ROWS = 4
GAP_FLOOR = 1e-13
MASS_SHIFT = 1e-3

NOTES = (
    "one warm-started branch of local minimizers is followed; no subsequence extraction",
    "distances are strong W^{2,p} surrogate norms, which dominate the weak convergence claim",
)


class SweepError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    family: str = "G"
    problem: str = "dirichlet"
    eps: tuple = DEFAULT_EPS
    grid: GridConfig = GridConfig(dirichlet_edges=("left",))
    material: MaterialSpec = MaterialSpec()
    load: LoadConfig = LoadConfig()
    solver: SolveOptions = SolveOptions()
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        if self.problem not in ("dirichlet", "traction"):
            raise SweepError(f"unknown problem kind {self.problem!r}")
        VariantTag(self.family, "nonlinear")
        if not self.eps:
            raise SweepError("empty eps schedule")
        if any(not 0 < e < 1 for e in self.eps):
            raise SweepError("eps values must lie in (0, 1)")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise SweepError("eps schedule must be strictly decreasing")
        if self.problem == "dirichlet" and not self.grid.dirichlet_edges:
            raise SweepError("dirichlet problem needs at least one clamped edge")
        if self.problem == "traction" and self.grid.dirichlet_edges:
            raise SweepError("traction problem must not clamp any edge")


@dataclass
class SweepRow:
    eps: float
    energy: EnergyBreakdown | None
    dist: float
    gap: float
    theta: float | None = None
    iterations: int = 0
    reason: str = ""
    error: str | None = None


@dataclass
class SweepReport:
    family: str
    problem: str
    rows: list
    limit_energy: EnergyBreakdown
    limit_regime: str
    order_gap: float | None
    order_dist: float | None
    scan: dict | None = None
    notes: tuple = NOTES
    limit_solve: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return any(r.error is not None or r.reason not in ("grad", "step") for r in self.rows)

    def to_dict(self):
        return {
            "family": self.family,
            "problem": self.problem,
            "limit_regime": self.limit_regime,
            "limit_energy": self.limit_energy.as_dict(),
            "limit_solve": self.limit_solve,
            "order_gap": self.order_gap,
            "order_dist": self.order_dist,
            "scan": self.scan,
            "notes": list(self.notes),
            "rows": [
                {
                    "eps": r.eps,
                    "energy": None if r.energy is None else r.energy.as_dict(),
                    "dist": r.dist, "gap": r.gap, "theta": r.theta,
                    "iterations": r.iterations, "reason": r.reason, "error": r.error,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True)

    def to_csv(self) -> str:
        cols = CSV_COLUMNS + (("theta",) if self.problem == "traction" else ())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            e = r.energy
            vals = [r.eps] + ([e.bulk, e.hyper, e.surface, e.load, e.total] if e else [math.nan] * 5)
            vals += [r.dist, r.gap]
            if self.problem == "traction":
                vals.append(math.nan if r.theta is None else r.theta)
            w.writerow(f"{v:.16e}" for v in vals)
        return buf.getvalue()


def estimate_order(rows) -> float | None:
    """Least-squares slope of log(gap) against log(eps); None with fewer than 3 usable rows."""
    pts = [(e, g) for e, g in rows if g is not None and np.isfinite(g) and g > GAP_FLOOR]
    if len(pts) < 3:
        return None
    x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def _preconditioner(space, cfg: SweepConfig):
    shift = 0.0 if cfg.problem == "dirichlet" else MASS_SHIFT
    return make_preconditioner(quadratic_hessian(space, cfg.material, shift), space.free_mask)


def _orders(rows):
    ok = [r for r in rows if r.error is None][-FIT_ROWS:]
    return (estimate_order([(r.eps, r.gap) for r in ok]),
            estimate_order([(r.eps, r.dist) for r in ok]))


def _sweep(cfg: SweepConfig, limit_tag: VariantTag, distance):
    space = build_space(cfg.grid)
    scan = None
    L = cfg.load.build(space)
    if cfg.problem == "traction":
        if not is_equilibrated(L, space):
            raise SweepError("traction problem needs an equilibrated load (null resultant and moment)")
        scan = compatibility_scan(L, space)
        if not scan.is_compatible:
            raise IncompatibleLoadError(scan)
    P = _preconditioner(space, cfg)
    lim = Assembler(space, cfg.material, L, limit_tag, threads=cfg.threads)
    try:
        ref, lim_rep = minimize(space.zeros(), lim.fun_and_grad, opts=cfg.solver, precond=P)
        if cfg.problem == "traction":
            ref = project_rigid(ref, "translation" if cfg.family == "I" else "rigid")
        E_ref = lim.energy(ref.coeffs)
    finally:
        lim.close()
    rows = []
    prev = ref
    for eps in cfg.eps:
        A = Assembler(space, cfg.material, L, VariantTag(cfg.family, "nonlinear"), eps, cfg.threads)
        try:
            v, rep = minimize(prev, A.fun_and_grad, opts=cfg.solver, precond=P)
            e = A.energy(v.coeffs)
            dist, theta = distance(v, ref, eps)
            rows.append(SweepRow(eps, e, dist, abs(e.total - E_ref.total), theta,
                                 rep.iterations, rep.reason))
            prev = v
        except Exception as exc:  # noqa: BLE001  a failed row must not abort the sweep
            log.warning("eps = %g failed: %s", eps, exc)
            rows.append(SweepRow(eps, None, math.nan, math.nan, None, 0, "error", str(exc)))
        finally:
            A.close()
    og, od = _orders(rows)
    return SweepReport(
        cfg.family, cfg.problem, rows, E_ref, limit_tag.regime, og, od,
        None if scan is None else {**asdict(scan), "description": scan.describe()},
        limit_solve=lim_rep.as_dict(),
    )


def run_dirichlet_sweep(cfg: SweepConfig) -> SweepReport:
    if cfg.problem != "dirichlet":
        raise SweepError("run_dirichlet_sweep needs problem = 'dirichlet'")
    p = cfg.material.p

    def distance(v, ref, eps):
        return norms(v - ref, p).W2p_full, None

    return _sweep(cfg, VariantTag(cfg.family, "linearized"), distance)


def run_traction_sweep(cfg: SweepConfig) -> SweepReport:
    if cfg.problem != "traction":
        raise SweepError("run_traction_sweep needs problem = 'traction'")
    p = cfg.material.p
    if cfg.family == "I":
        # the surface live load pins rotations: compare v_j directly, modulo translations
        def distance(v, ref, eps):
            return quotient_distance(v, ref, p, "translation"), rotation_angle(extract_rotation(v, eps))

        return _sweep(cfg, VariantTag("I", "linearized"), distance)

    def distance(v, ref, eps):
        R = extract_rotation(v, eps)
        u = corrected_displacement(v, R, eps)
        return quotient_distance(u, ref, p), rotation_angle(R)

    return _sweep(cfg, VariantTag(cfg.family, "limit"), distance)


def run_sweep(cfg: SweepConfig) -> SweepReport:
    return run_dirichlet_sweep(cfg) if cfg.problem == "dirichlet" else run_traction_sweep(cfg)
