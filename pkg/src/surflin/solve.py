"""Limited-memory BFGS with Armijo backtracking, gradient checks and rotation extraction."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import DisplacementField, evaluate
from .tensor import SingularMatrixError, det, polar_rotation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveOptions:
    max_iter: int = 2000
    tol_grad: float = 1e-9
    tol_step: float = 1e-12
    memory: int = 10
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    stall_iters: int = 5

    def __post_init__(self):
        if min(self.max_iter, self.memory, self.max_backtracks, self.stall_iters) < 1:
            raise ValueError("iteration counts must be positive")
        if not (self.tol_grad > 0 and self.tol_step > 0 and self.armijo_c > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")


@dataclass
class SolveReport:
    iterations: int
    grad_norm: float
    history: list = field(repr=False)
    reason: str

    def as_dict(self):
        return {"iterations": self.iterations, "grad_norm": self.grad_norm,
                "reason": self.reason, "final_energy": self.history[-1]}


def lbfgs(x0, fun_and_grad, opts: SolveOptions = SolveOptions(), free=None, precond=None):
    """Minimize over the entries of ``x0`` selected by the boolean mask ``free``.

    ``fun_and_grad(x)`` receives and returns arrays shaped like ``x0``.
    ``precond``, if given, applies a fixed initial inverse-Hessian to a reduced
    gradient vector and replaces the usual scalar scaling.
    Returns ``(x, SolveReport)``.
    """
    x = np.array(x0, dtype=float)
    shape = x.shape
    free = np.ones(shape, dtype=bool) if free is None else np.asarray(free, dtype=bool)

    def fg(z):
        full = x.copy()
        full[free] = z
        f, g = fun_and_grad(full)
        return float(f), np.asarray(g, dtype=float).reshape(shape)[free]

    z = x[free].copy()
    f, g = fg(z)
    history = [f]
    S, Y = deque(maxlen=opts.memory), deque(maxlen=opts.memory)
    reason, it, stall = "max_iter", 0, 0
    while it < opts.max_iter:
        gmax = np.max(np.abs(g)) if g.size else 0.0
        if gmax <= opts.tol_grad:
            reason = "grad"
            break
        d = _two_loop(g, S, Y, precond)
        slope = float(d @ g)
        if not slope < 0:
            S.clear(), Y.clear()
            d = -g if precond is None else -precond(g)
            slope = float(d @ g)
        t = 1.0 if (S or precond is not None) else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
        accepted = False
        for _ in range(opts.max_backtracks):
            zn = z + t * d
            fn, gn = fg(zn)
            if np.isfinite(fn) and fn <= f + opts.armijo_c * t * slope:
                accepted = True
                break
            t *= opts.backtrack
        if not accepted:
            if S:
                S.clear(), Y.clear()
                continue
            reason = "linesearch"
            log.warning("line search failed after %d backtracks", opts.max_backtracks)
            break
        it += 1
        s, y = zn - z, gn - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s), Y.append(y)
        decrease = f - fn
        z, f, g = zn, fn, gn
        history.append(f)
        stall = stall + 1 if decrease <= opts.tol_step * max(abs(f), 1e-300) else 0
        if stall >= opts.stall_iters:
            reason = "step"
            break
    x[free] = z
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    return x, SolveReport(it, gnorm, history, reason)


def _two_loop(g, S, Y, precond=None):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if precond is not None:
        q = precond(q)
    elif S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def make_preconditioner(K, free):
    """Sparse LU solve with ``K`` restricted to the free coefficients."""
    idx = np.flatnonzero(np.asarray(free).ravel())
    Kf = sp.csc_matrix(K)[idx][:, idx]
    return spla.factorized(sp.csc_matrix(Kf))


def minimize(f0, objective, gradient=None, opts: SolveOptions = SolveOptions(), precond=None):
    """Minimize a field energy; clamped (Dirichlet) coefficients stay fixed.

    ``objective`` maps coefficients to a scalar. If ``gradient`` is None,
    ``objective`` must return ``(value, gradient)`` itself. ``f0`` may be a
    :class:`DisplacementField` or a plain array.
    """
    if gradient is None:
        fg = objective
    else:
        def fg(c):
            return objective(c), gradient(c)
    if isinstance(f0, DisplacementField):
        x, rep = lbfgs(f0.coeffs, fg, opts, f0.space.free_mask, precond)
        return DisplacementField(f0.space, x), rep
    return lbfgs(f0, fg, opts, precond=precond)


def fd_check(f, objective, gradient, n: int = 20, seed: int = 0) -> float:
    """Largest relative mismatch between analytic and central-difference gradient entries."""
    c = f.coeffs if isinstance(f, DisplacementField) else np.asarray(f, dtype=float)
    free = f.space.free_mask if isinstance(f, DisplacementField) else np.ones(c.shape, bool)
    idx = np.flatnonzero(free)
    rng = np.random.default_rng(seed)
    pick = rng.choice(idx, size=min(n, idx.size), replace=False)
    g = np.asarray(gradient(c), dtype=float).ravel()
    worst = 0.0
    for k in pick:
        h = 1e-6 * (1 + abs(c.flat[k]))
        cp, cm = c.copy(), c.copy()
        cp.flat[k] += h
        cm.flat[k] -= h
        fd = (objective(cp) - objective(cm)) / (2 * h)
        den = max(abs(fd), abs(g[k]))
        if den > 0:
            worst = max(worst, abs(fd - g[k]) / den)
    return worst


def mean_gradient(f: DisplacementField) -> np.ndarray:
    tab = f.space.table.interior
    _, G, _ = evaluate(f)
    return np.einsum("k,kij->ij", tab.w, G) / f.space.area


def extract_rotation(f: DisplacementField, eps: float) -> np.ndarray:
    """Polar factor of the mean deformation gradient ``I + eps * mean(grad v)``."""
    M = np.eye(2) + eps * mean_gradient(f)
    if not det(M) > 0:
        raise SingularMatrixError(f"mean deformation gradient has det {det(M):.3e} <= 0")
    return polar_rotation(M)


def corrected_displacement(v: DisplacementField, R, eps: float) -> DisplacementField:
    """Field ``R^T v(x) + (R^T x - x)/eps``, built on coefficients."""
    R = np.asarray(R, dtype=float)
    X = v.space.greville
    c = np.einsum("ji,j...->i...", R, v.coeffs) + (np.einsum("ji,j...->i...", R, X) - X) / eps
    return DisplacementField(v.space, c)
