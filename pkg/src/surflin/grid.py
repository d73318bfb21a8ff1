"""Tensor-product cubic B-spline displacement fields on a rectangle.

Coefficients of a vector field are stored as an array of shape ``(2, nbx, nby)``;
basis function ``(a, b)`` is ``N_a(x1) * M_b(x2)`` with open uniform knot vectors,
so each axis carries ``n + 3`` functions and fields are C^2 across cells.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import BSpline

DEGREE = 3
EDGES = ("left", "right", "bottom", "top")
_NORMALS = {
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "bottom": (0.0, -1.0),
    "top": (0.0, 1.0),
}


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 12
    ny: int = 12
    quad_order: int = 4
    dirichlet_edges: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "dirichlet_edges", tuple(self.dirichlet_edges))
        if not (self.lx > 0 and self.ly > 0):
            raise GridError("rectangle side lengths must be positive")
        if self.nx < 4 or self.ny < 4:
            raise GridError("need at least 4 cells per axis")
        if self.quad_order < 4:
            raise GridError("quad_order must be >= 4")
        bad = set(self.dirichlet_edges) - set(EDGES)
        if bad:
            raise GridError(f"unknown Dirichlet edges {sorted(bad)}")


@dataclass(frozen=True)
class QuadPart:
    """Quadrature points with basis samples.

    Sparse CSR sample matrices: ``N0[k, j]`` is basis ``j`` at point ``k``;
    ``N1[a]`` holds d/dx_a; ``N2`` holds the second derivatives in the
    order (11, 12, 22).
    """

    x: np.ndarray
    w: np.ndarray
    N0: np.ndarray
    N1: tuple
    N2: tuple | None = None
    normal: np.ndarray | None = None
    edge: np.ndarray | None = None


@dataclass(frozen=True)
class QuadTable:
    interior: QuadPart
    boundary: QuadPart


class _Axis:
    def __init__(self, length: float, n: int):
        self.length = length
        self.n = n
        inner = np.linspace(0.0, length, n + 1)
        self.knots = np.concatenate([[0.0] * DEGREE, inner, [length] * DEGREE])
        self.nb = n + DEGREE
        self.breaks = inner
        self._spl = BSpline(self.knots, np.eye(self.nb), DEGREE, extrapolate=True)
        self._d1 = self._spl.derivative(1)
        self._d2 = self._spl.derivative(2)
        self.greville = np.array(
            [self.knots[i + 1 : i + 1 + DEGREE].mean() for i in range(self.nb)]
        )

    def basis(self, x):
        x = np.asarray(x, dtype=float)
        return self._spl(x), self._d1(x), self._d2(x)

    def gauss(self, order: int):
        g, gw = np.polynomial.legendre.leggauss(order)
        a, b = self.breaks[:-1, None], self.breaks[1:, None]
        pts = 0.5 * (a + b) + 0.5 * (b - a) * g
        wts = 0.5 * (b - a) * gw
        return pts.ravel(), wts.ravel()


class SplineSpace:
    """Immutable spline space with precomputed interior and boundary quadrature tables."""

    def __init__(self, config: GridConfig):
        self.config = config
        self.ax = _Axis(config.lx, config.nx)
        self.ay = _Axis(config.ly, config.ny)
        self.nbx, self.nby = self.ax.nb, self.ay.nb
        self.nbasis = self.nbx * self.nby
        self.shape = (2, self.nbx, self.nby)
        self.area = config.lx * config.ly
        self.perimeter = 2 * (config.lx + config.ly)
        self.table = QuadTable(self._interior(), self._boundary())
        self.free_mask = self._free_mask()
        gx, gy = np.meshgrid(self.ax.greville, self.ay.greville, indexing="ij")
        self.greville = np.stack([gx, gy])  # coefficients of the identity map x -> x
        self._colloc = (self.ax.basis(self.ax.greville)[0], self.ay.basis(self.ay.greville)[0])

    @property
    def dirichlet_edges(self):
        return self.config.dirichlet_edges

    def _interior(self) -> QuadPart:
        qo = self.config.quad_order
        px, wx = self.ax.gauss(qo)
        py, wy = self.ay.gauss(qo)
        bx, dbx, ddbx = self.ax.basis(px)
        by, dby, ddby = self.ay.basis(py)
        X, Y = np.meshgrid(px, py, indexing="ij")
        x = np.stack([X.ravel(), Y.ravel()], axis=1)
        w = np.outer(wx, wy).ravel()

        def kron(u, v):
            # point (i, j) -> row i*len(py)+j ; basis (a, b) -> col a*nby+b
            return sp.kron(sp.csr_matrix(u), sp.csr_matrix(v), format="csr")

        N0 = kron(bx, by)
        N1 = (kron(dbx, by), kron(bx, dby))
        N2 = (kron(ddbx, by), kron(dbx, dby), kron(bx, ddby))
        return QuadPart(x=x, w=w, N0=N0, N1=N1, N2=N2)

    def _boundary(self) -> QuadPart:
        qo = self.config.quad_order
        lx, ly = self.config.lx, self.config.ly
        px, wx = self.ax.gauss(qo)
        py, wy = self.ay.gauss(qo)
        xs, ws, ns, es = [], [], [], []
        for k, edge in enumerate(EDGES):
            if edge in ("left", "right"):
                x1 = np.full_like(py, 0.0 if edge == "left" else lx)
                pts = np.stack([x1, py], axis=1)
                wts = wy
            else:
                x2 = np.full_like(px, 0.0 if edge == "bottom" else ly)
                pts = np.stack([px, x2], axis=1)
                wts = wx
            xs.append(pts)
            ws.append(wts)
            ns.append(np.tile(_NORMALS[edge], (len(wts), 1)))
            es.append(np.full(len(wts), k))
        x = np.concatenate(xs)
        bx, dbx, _ = self.ax.basis(x[:, 0])
        by, dby, _ = self.ay.basis(x[:, 1])

        def rowkron(u, v):
            return sp.csr_matrix(np.einsum("ka,kb->kab", u, v).reshape(len(u), -1))

        N0 = rowkron(bx, by)
        N1 = (rowkron(dbx, by), rowkron(bx, dby))
        return QuadPart(
            x=x, w=np.concatenate(ws), N0=N0, N1=N1,
            normal=np.concatenate(ns), edge=np.concatenate(es),
        )

    def _free_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        for edge in self.dirichlet_edges:
            if edge == "left":
                mask[:, :2, :] = False
            elif edge == "right":
                mask[:, -2:, :] = False
            elif edge == "bottom":
                mask[:, :, :2] = False
            else:
                mask[:, :, -2:] = False
        return mask

    def zeros(self) -> "DisplacementField":
        return DisplacementField(self, np.zeros(self.shape))

    def interpolate(self, func) -> "DisplacementField":
        """Field whose values match ``func`` at the tensor Greville points.

        Exact for anything already in the spline space (all polynomials of
        degree <= 3 per axis). ``func`` maps an ``(N, 2)`` point array to ``(N, 2)``.
        """
        gx, gy = self.greville
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        vals = np.asarray(func(pts), dtype=float).reshape(self.nbx, self.nby, 2)
        Ax, Ay = self._colloc
        coeffs = np.empty(self.shape)
        for c in range(2):
            tmp = np.linalg.solve(Ax, vals[:, :, c])
            coeffs[c] = np.linalg.solve(Ay, tmp.T).T
        return DisplacementField(self, coeffs)

    def rigid_modes(self) -> np.ndarray:
        """Coefficients of e1, e2 and x_perp = (-x2, x1); shape (3, 2, nbx, nby)."""
        modes = np.zeros((3,) + self.shape)
        modes[0, 0] = 1.0
        modes[1, 1] = 1.0
        modes[2, 0] = -self.greville[1]
        modes[2, 1] = self.greville[0]
        return modes


def build_space(config: GridConfig) -> SplineSpace:
    return SplineSpace(config)


@dataclass
class DisplacementField:
    space: SplineSpace
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(self.space.shape)

    def copy(self) -> "DisplacementField":
        return DisplacementField(self.space, self.coeffs.copy())

    def __add__(self, other):
        return DisplacementField(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return DisplacementField(self.space, self.coeffs - other.coeffs)

    def __rmul__(self, alpha):
        return DisplacementField(self.space, alpha * self.coeffs)


def evaluate(f: DisplacementField, part: str = "interior", rows=slice(None)):
    """Value ``(N, 2)``, gradient ``(N, 2, 2)`` and, for the interior, Hessian ``(N, 2, 2, 2)``.

    ``G[k, i, j] = d v_i / d x_j`` and ``B[k, i, j, l] = d^2 v_i / d x_j d x_l``.
    """
    tab = getattr(f.space.table, part)
    C = f.coeffs.reshape(2, -1)
    v = tab.N0[rows] @ C.T
    G = np.stack([tab.N1[0][rows] @ C.T, tab.N1[1][rows] @ C.T], axis=2)
    if tab.N2 is None:
        return v, G, None
    h11, h12, h22 = (tab.N2[i][rows] @ C.T for i in range(3))
    B = np.stack([np.stack([h11, h12], axis=2), np.stack([h12, h22], axis=2)], axis=2)
    return v, G, B


def eval_field(f: DisplacementField, k: int, part: str = "interior"):
    """Single-point evaluation at quadrature entry ``k`` of ``part``."""
    v, G, B = evaluate(f, part, rows=slice(k, k + 1))
    return v[0], G[0], (None if B is None else B[0])


def apply_dirichlet(f: DisplacementField) -> DisplacementField:
    """Zero the two outermost coefficient layers on each Dirichlet edge (v = grad v = 0 there)."""
    return DisplacementField(f.space, np.where(f.space.free_mask, f.coeffs, 0.0))


@dataclass(frozen=True)
class Norms:
    L2: float
    H1semi: float
    W2p_semi: float
    W2p_full: float


def norms(f: DisplacementField, p: float = 2.0) -> Norms:
    tab = f.space.table.interior
    v, G, B = evaluate(f)
    av = np.sqrt(np.einsum("ki,ki->k", v, v))
    aG = np.sqrt(np.einsum("kij,kij->k", G, G))
    aB = np.sqrt(np.einsum("kijl,kijl->k", B, B))

    def lp(a, r):
        return float(np.sum(tab.w * a**r) ** (1 / r))

    return Norms(
        L2=lp(av, 2), H1semi=lp(aG, 2), W2p_semi=lp(aB, p),
        W2p_full=lp(av, p) + lp(aG, p) + lp(aB, p),
    )


def project_rigid(f: DisplacementField, modes: str = "rigid") -> DisplacementField:
    """Remove the L2-closest infinitesimal rigid motion (or only the translation)."""
    space = f.space
    basis = space.rigid_modes()
    if modes == "translation":
        basis = basis[:2]
    tab = space.table.interior
    phi = np.stack([tab.N0 @ m.reshape(2, -1).T for m in basis])  # (k, N, 2)
    gram = np.einsum("aki,bki,k->ab", phi, phi, tab.w)
    v = tab.N0 @ f.coeffs.reshape(2, -1).T
    rhs = np.einsum("aki,ki,k->a", phi, v, tab.w)
    alpha = np.linalg.solve(gram, rhs)
    return DisplacementField(space, f.coeffs - np.tensordot(alpha, basis, axes=1))


def quotient_distance(f: DisplacementField, g: DisplacementField, p: float = 2.0,
                      modes: str = "rigid") -> float:
    """W^{2,p} surrogate distance of ``f - g`` modulo infinitesimal rigid motions."""
    return norms(project_rigid(f - g, modes), p).W2p_full
