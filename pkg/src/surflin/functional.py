"""Energy functionals G, F, I in the rescaled nonlinear, linearized and limit-traction regimes.

Assembly is split into fixed-size chunks of quadrature points. Partial results
are combined by a pairwise reduction in chunk order, so the value and gradient
are bitwise identical whatever the number of worker threads.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .grid import EDGES, DisplacementField, SplineSpace
from .material import MaterialSpec, dh_energy, quad_form_grad, w_bulk_scaled

log = logging.getLogger(__name__)

FAMILIES = ("G", "F", "I")
REGIMES = ("nonlinear", "linearized", "limit")
KINK_TOL = 1e-14
CHUNK = 256
THETA_GRID = 720

# L(J v) with J the quarter turn; J^T b = (b2, -b1)
_JT = np.array([[0.0, 1.0], [-1.0, 0.0]])


class IncompatibleLoadError(ValueError):
    def __init__(self, scan: "CompatibilityScan"):
        self.scan = scan
        super().__init__(
            f"incompatible load: max over rotations of L(Rx - x) = {scan.max_g:.6e} > 0 "
            f"(L(x) = {scan.a:.6e}, L(x_perp) = {scan.b_perp:.6e}); "
            "the loads compress the body and the nonlinear energies are unbounded below as eps -> 0"
        )


@dataclass(frozen=True)
class VariantTag:
    family: str = "G"
    regime: str = "nonlinear"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.family == "I" and self.regime == "limit":
            raise ValueError("family I has no limit-traction functional; its limit is the linearized one")


@dataclass(frozen=True)
class EnergyBreakdown:
    bulk: float
    hyper: float
    load: float
    surface: float
    total: float

    def as_dict(self):
        return {k: getattr(self, k) for k in ("bulk", "hyper", "surface", "load", "total")}


# --------------------------------------------------------------------------- loads


@dataclass(frozen=True)
class LoadSpec:
    """Body force samples at interior points and traction samples at boundary points."""

    body: np.ndarray
    traction: np.ndarray
    equilibrated: bool = False

    @classmethod
    def zero(cls, space: SplineSpace) -> "LoadSpec":
        t = space.table
        return cls(np.zeros((len(t.interior.w), 2)), np.zeros((len(t.boundary.w), 2)), True)

    @classmethod
    def from_affine(cls, space: SplineSpace, body=None, traction=None) -> "LoadSpec":
        """``body`` is a pair of (c0, c1, c2) triples; ``traction`` maps edge names to such pairs."""
        t = space.table
        b = _affine(body, t.interior.x)
        tr = np.zeros((len(t.boundary.w), 2))
        for edge, comps in (traction or {}).items():
            sel = t.boundary.edge == EDGES.index(edge)
            tr[sel] = _affine(comps, t.boundary.x[sel])
        return cls(b, tr, False)


def _affine(comps, x):
    out = np.zeros((len(x), 2))
    if comps is None:
        return out
    for c, (c0, c1, c2) in enumerate(comps):
        out[:, c] = c0 + c1 * x[:, 0] + c2 * x[:, 1]
    return out


def load_vectors(L: LoadSpec, space: SplineSpace):
    """Coefficient-space representers of v -> L(v) and v -> L(J v)."""
    ti, tb = space.table.interior, space.table.boundary

    def rep(b, t):
        g = ti.N0.T @ (ti.w[:, None] * b) + tb.N0.T @ (tb.w[:, None] * t)
        return g.T.reshape(space.shape)

    return rep(L.body, L.traction), rep(L.body @ _JT.T, L.traction @ _JT.T)


def load_value(L: LoadSpec, f: DisplacementField) -> float:
    g1, _ = load_vectors(L, f.space)
    return float(np.sum(g1 * f.coeffs))


def _mode_samples(x):
    ones, zeros = np.ones(len(x)), np.zeros(len(x))
    return np.stack([
        np.stack([ones, zeros], 1),
        np.stack([zeros, ones], 1),
        np.stack([-x[:, 1], x[:, 0]], 1),
    ])


def rigid_load_values(L: LoadSpec, space: SplineSpace) -> np.ndarray:
    """L(e1), L(e2), L(x_perp)."""
    ti, tb = space.table.interior, space.table.boundary
    return (np.einsum("mki,ki,k->m", _mode_samples(ti.x), L.body, ti.w)
            + np.einsum("mki,ki,k->m", _mode_samples(tb.x), L.traction, tb.w))


def equilibrate(L: LoadSpec, space: SplineSpace) -> LoadSpec:
    """Subtract the L2 projection of ``L`` onto rigid modes from the body force."""
    ti = space.table.interior
    phi = _mode_samples(ti.x)
    gram = np.einsum("aki,bki,k->ab", phi, phi, ti.w)
    alpha = np.linalg.solve(gram, rigid_load_values(L, space))
    body = L.body - np.tensordot(alpha, phi, axes=1)
    return replace(L, body=body, equilibrated=True)


@dataclass(frozen=True)
class CompatibilityScan:
    is_compatible: bool
    a: float
    b_perp: float
    max_g: float
    s0_angles: tuple
    full_circle: bool

    def describe(self) -> str:
        s0 = "full-circle" if self.full_circle else ", ".join(f"{t:.6g}" for t in self.s0_angles)
        state = "compatible" if self.is_compatible else "INCOMPATIBLE"
        return (f"{state}: L(x) = {self.a:.6e}, L(x_perp) = {self.b_perp:.6e}, "
                f"max g = {self.max_g:.6e}, S0 = {{{s0}}}")


def compatibility_scan(L: LoadSpec, space: SplineSpace) -> CompatibilityScan:
    """Classify ``g(theta) = L(R_theta x - x) = (cos theta - 1) a + sin theta b_perp``."""
    ti, tb = space.table.interior, space.table.boundary
    a = float(np.einsum("ki,ki,k->", ti.x, L.body, ti.w) + np.einsum("ki,ki,k->", tb.x, L.traction, tb.w))
    b = float(rigid_load_values(L, space)[2])
    max_g = float(np.hypot(a, b) - a)
    tol = 1e-12 * max(abs(a), abs(b), 1.0)
    ok = max_g <= tol
    full = ok and abs(a) <= tol and abs(b) <= tol
    angles = [0.0]
    if ok and not full and a != 0.0:
        root = 2 * np.arctan(b / a)
        if abs(root) > 1e-10 and (np.cos(root) - 1) * a + np.sin(root) * b <= tol:
            angles.append(float(root))
    return CompatibilityScan(ok, a, b, max_g, tuple(angles) if not full else (), full)


def _max_rotated_load(l1: float, l2: float, scan: CompatibilityScan):
    """max over S0 of L(R_theta v) = cos theta l1 + sin theta l2; returns (value, theta, ties)."""
    if scan.full_circle:
        th = np.linspace(-np.pi, np.pi, THETA_GRID, endpoint=False) + 2 * np.pi / THETA_GRID
        vals = np.cos(th) * l1 + np.sin(th) * l2
        t = float(th[np.argmax(vals)])
        h2 = -np.cos(t) * l1 - np.sin(t) * l2
        if h2 < 0:
            t -= (-np.sin(t) * l1 + np.cos(t) * l2) / h2
        return float(np.cos(t) * l1 + np.sin(t) * l2), t, (t,)
    vals = [np.cos(t) * l1 + np.sin(t) * l2 for t in scan.s0_angles]
    best = max(vals)
    ties = tuple(t for t, v in zip(scan.s0_angles, vals) if v >= best - 1e-10)
    return float(best), ties[0], ties


# --------------------------------------------------------------------------- assembly


def _tree_sum(items):
    items = list(items)
    while len(items) > 1:
        nxt = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def _abs_pow(x, q):
    """|x|^q and its derivative, with derivative 0 at x = 0."""
    ax = np.abs(x)
    return ax**q, q * ax ** (q - 1) * np.sign(x) if q != 1 else np.sign(x)


class _Chunk:
    """Row block of a quadrature part with its sample matrices and their transposes."""

    def __init__(self, part, rows: slice):
        self.w = part.w[rows]
        self.normal = None if part.normal is None else part.normal[rows]
        self.N1 = [N[rows] for N in part.N1]
        self.N1T = [N.T.tocsr() for N in self.N1]
        self.N2 = None if part.N2 is None else [N[rows] for N in part.N2]
        self.N2T = None if part.N2 is None else [N.T.tocsr() for N in self.N2]


class Assembler:
    """Discrete energy for one (family, regime, eps) on a fixed spline space.

    ``value_and_grad`` takes a coefficient array of shape ``space.shape`` and
    returns the :class:`EnergyBreakdown` and the gradient (zero on clamped
    coefficients).
    """

    def __init__(self, space: SplineSpace, material: MaterialSpec, load: LoadSpec,
                 tag: VariantTag, eps: float | None = None, threads: int = 1):
        if material.dim != 2:
            raise ValueError("energy assembly is two-dimensional")
        if tag.regime == "nonlinear" and not (eps and eps > 0):
            raise ValueError("nonlinear regime needs eps > 0")
        self.space, self.m, self.load, self.tag = space, material, load, tag
        self.eps = float(eps) if tag.regime == "nonlinear" else None
        self.threads = max(1, int(threads))
        self.g1, self.g2 = load_vectors(load, space)
        self.scan = None
        if tag.regime == "limit":
            self.scan = compatibility_scan(load, space)
            if not self.scan.is_compatible:
                raise IncompatibleLoadError(self.scan)
        ni, nb = len(space.table.interior.w), len(space.table.boundary.w)
        ti, tb = space.table.interior, space.table.boundary
        self._ichunks = [_Chunk(ti, slice(i, min(i + CHUNK, ni))) for i in range(0, ni, CHUNK)]
        self._bchunks = [_Chunk(tb, slice(i, min(i + CHUNK, nb))) for i in range(0, nb, CHUNK)]
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        self.last_kinks = 0
        self.last_theta = 0.0
        self.last_ties = ()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def _map(self, fn, chunks):
        if self._pool is None:
            return [fn(c) for c in chunks]
        return list(self._pool.map(fn, chunks))

    # interior: bulk + second gradient
    def _interior_chunk(self, C, ch):
        w, N1, N2, N1T, N2T = ch.w, ch.N1, ch.N2, ch.N1T, ch.N2T
        G = np.stack([N1[0] @ C.T, N1[1] @ C.T], axis=2)
        h11, h12, h22 = (N @ C.T for N in N2)
        B = np.stack([np.stack([h11, h12], 2), np.stack([h12, h22], 2)], 2)
        if self.eps is not None:
            wd, dG = w_bulk_scaled(G, self.eps, self.m)
        else:
            wd, dG = quad_form_grad(G, self.m)
        nB = np.sqrt(np.einsum("kijl,kijl->k", B, B))
        hd = self.m.kappa * nB**self.m.p
        dB = dh_energy(B, self.m)
        wG, wB = w[:, None, None] * dG, w[:, None, None, None] * dB
        grad = (N1T[0] @ wG[:, :, 0] + N1T[1] @ wG[:, :, 1]
                + N2T[0] @ wB[:, :, 0, 0] + N2T[1] @ (wB[:, :, 0, 1] + wB[:, :, 1, 0])
                + N2T[2] @ wB[:, :, 1, 1]).T
        return np.array([np.dot(w, wd), np.dot(w, hd)]), grad

    # boundary: per-point surface quantity and its G-derivative
    def _surface_local(self, G, n):
        fam, eps = self.tag.family, self.eps
        trG = G[:, 0, 0] + G[:, 1, 1]
        a = trG[:, None] * n - np.einsum("kji,kj->ki", G, n)  # lin_cof(G) n
        an = np.einsum("ki,ki->k", a, n)
        eye = np.eye(2)
        if fam == "I":
            # 2-D: cof(I + eps G) - I = eps lin_cof(G) exactly, so both regimes share |a|^q
            na = np.sqrt(np.einsum("ki,ki->k", a, a))
            q = self.m.q
            val = na**q
            with np.errstate(divide="ignore", invalid="ignore"):
                coef = np.where(na > 0, q * na ** (q - 2), 0.0) if q < 2 else q * na ** (q - 2)
            dvec = an[:, None, None] * eye - np.einsum("ki,kj->kij", n, a)
            return val, coef[:, None, None] * dvec, na
        if eps is None:
            sigma = an
            dsig = eye - np.einsum("ki,kj->kij", n, n)
        else:
            m = n + eps * a
            nm = np.sqrt(np.einsum("ki,ki->k", m, m))
            sigma = (2 * an + eps * np.einsum("ki,ki->k", a, a)) / (nm + 1)
            mh = m / nm[:, None]
            dsig = np.einsum("ki,ki->k", mh, n)[:, None, None] * eye - np.einsum("ki,kj->kij", n, mh)
        return sigma, dsig, sigma

    def _boundary_chunk(self, C, ch):
        w, N1, N1T = ch.w, ch.N1, ch.N1T
        G = np.stack([N1[0] @ C.T, N1[1] @ C.T], axis=2)
        s, ds, arg = self._surface_local(G, ch.normal)
        kinks = int(np.sum(np.abs(arg) < KINK_TOL)) if self.m.q < 2 else 0
        if self.tag.family == "G":
            val, dval = _abs_pow(s, self.m.q)
            s, ds = val, dval[:, None, None] * ds
        wds = w[:, None, None] * ds
        grad = (N1T[0] @ wds[:, :, 0] + N1T[1] @ wds[:, :, 1]).T
        return np.dot(w, s), grad, kinks

    def value_and_grad(self, coeffs):
        C = np.asarray(coeffs, dtype=float).reshape(2, -1)
        shape = self.space.shape
        ires = self._map(lambda r: self._interior_chunk(C, r), self._ichunks)
        bulk, hyper = _tree_sum(r[0] for r in ires)
        grad = _tree_sum(r[1] for r in ires)
        bres = self._map(lambda r: self._boundary_chunk(C, r), self._bchunks)
        ssum = _tree_sum(r[0] for r in bres)
        sgrad = _tree_sum(r[1] for r in bres)
        self.last_kinks = sum(r[2] for r in bres)
        gamma, q = self.m.gamma, self.m.q
        if self.tag.family == "F":
            if q < 2 and abs(ssum) < KINK_TOL:
                self.last_kinks += 1
            val, dval = _abs_pow(ssum, q)
            surface, sgrad = gamma * float(val), gamma * float(dval) * sgrad
        else:
            surface, sgrad = gamma * float(ssum), gamma * sgrad
        if self.last_kinks:
            log.debug("%d nondifferentiable surface points; subgradient 0 selected", self.last_kinks)
        cf = np.asarray(coeffs, dtype=float).reshape(shape)
        l1 = float(np.sum(self.g1 * cf))
        if self.scan is None:
            load, lgrad = l1, self.g1
        else:
            l2 = float(np.sum(self.g2 * cf))
            load, th, ties = _max_rotated_load(l1, l2, self.scan)
            self.last_theta, self.last_ties = th, ties
            lgrad = np.cos(th) * self.g1 + np.sin(th) * self.g2
        bulk, hyper = float(bulk), float(hyper)
        total = bulk + hyper - load + surface
        g = (grad + sgrad).reshape(shape) - lgrad
        g = np.where(self.space.free_mask, g, 0.0)
        return EnergyBreakdown(bulk, hyper, load, surface, total), g

    def energy(self, coeffs) -> EnergyBreakdown:
        return self.value_and_grad(coeffs)[0]

    def objective(self, coeffs) -> float:
        return self.value_and_grad(coeffs)[0].total

    def gradient(self, coeffs) -> np.ndarray:
        return self.value_and_grad(coeffs)[1]

    def fun_and_grad(self, coeffs):
        e, g = self.value_and_grad(coeffs)
        return e.total, g


def energy(f: DisplacementField, L: LoadSpec, m: MaterialSpec, tag: VariantTag,
           eps: float | None = None, threads: int = 1) -> EnergyBreakdown:
    return Assembler(f.space, m, L, tag, eps, threads).energy(f.coeffs)


def energy_gradient(f: DisplacementField, L: LoadSpec, m: MaterialSpec, tag: VariantTag,
                    eps: float | None = None, threads: int = 1) -> np.ndarray:
    return Assembler(f.space, m, L, tag, eps, threads).gradient(f.coeffs)


def quadratic_hessian(space: SplineSpace, m: MaterialSpec, mass_shift: float = 0.0):
    """Sparse Hessian of the linearized G energy with p = q = 2, over all coefficients.

    Rows/columns follow ``coeffs.ravel()`` (component-major). ``mass_shift``
    adds that multiple of the L2 mass matrix, which removes the rigid-mode
    kernel when no edge is clamped.
    """
    ti, tb = space.table.interior, space.table.boundary
    Wi, Wb = sp.diags(ti.w), sp.diags(tb.w)
    Dx, Dy = ti.N1
    Z = sp.csr_matrix(Dx.shape)
    tr = sp.hstack([Dx, Dy])
    e11, e22 = sp.hstack([Dx, Z]), sp.hstack([Z, Dy])
    e12 = sp.hstack([Dy, Dx])
    K = (m.lam * tr.T @ Wi @ tr + 2 * m.mu * (e11.T @ Wi @ e11 + e22.T @ Wi @ e22)
         + m.mu * e12.T @ Wi @ e12)
    H11, H12, H22 = ti.N2
    Hs = 2 * m.kappa * (H11.T @ Wi @ H11 + 2 * H12.T @ Wi @ H12 + H22.T @ Wi @ H22)
    K = K + sp.block_diag([Hs, Hs])
    n = tb.normal
    P = np.eye(2)[None] - np.einsum("ki,kj->kij", n, n)
    Bx, By = tb.N1
    rows = [sp.diags(P[:, i, 0]) @ Bx + sp.diags(P[:, i, 1]) @ By for i in range(2)]
    S = sp.hstack(rows)
    K = K + 2 * m.gamma * S.T @ Wb @ S
    if mass_shift:
        M = ti.N0.T @ Wi @ ti.N0
        K = K + mass_shift * sp.block_diag([M, M])
    return sp.csr_matrix(K)


@dataclass(frozen=True)
class LoadConfig:
    """Affine load coefficients: each component is ``c0 + c1*x1 + c2*x2``.

    ``body`` is a pair of (c0, c1, c2) triples; ``traction`` maps edge names
    to such pairs. With ``equilibrate`` set, the rigid-mode part of the body
    force is removed after sampling.
    """

    body: tuple = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    traction: tuple = ()  # ((edge, ((c0, c1, c2), (c0, c1, c2))), ...)
    equilibrate: bool = False

    def __post_init__(self):
        body = tuple(tuple(float(c) for c in comp) for comp in self.body)
        trac = tuple(sorted(
            (edge, tuple(tuple(float(c) for c in comp) for comp in comps))
            for edge, comps in (self.traction.items() if isinstance(self.traction, dict) else self.traction)
        ))
        if len(body) != 2 or any(len(c) != 3 for c in body):
            raise ValueError("body load needs two (c0, c1, c2) components")
        for edge, comps in trac:
            if edge not in EDGES:
                raise ValueError(f"unknown traction edge {edge!r}")
            if len(comps) != 2 or any(len(c) != 3 for c in comps):
                raise ValueError(f"traction on {edge} needs two (c0, c1, c2) components")
        object.__setattr__(self, "body", body)
        object.__setattr__(self, "traction", trac)

    def build(self, space: SplineSpace) -> LoadSpec:
        L = LoadSpec.from_affine(space, self.body, dict(self.traction))
        return equilibrate(L, space) if self.equilibrate else L


def is_equilibrated(L: LoadSpec, space: SplineSpace) -> bool:
    vals = rigid_load_values(L, space)
    scale = max(1.0, float(np.abs(L.body).max(initial=0.0)), float(np.abs(L.traction).max(initial=0.0)))
    return bool(np.all(np.abs(vals) <= 1e-12 * scale))
