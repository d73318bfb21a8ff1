"""Small dense tensor kernels for d in {2, 3}.

Every function broadcasts over leading axes: a ``(..., d, d)`` stack of
matrices is handled the same way as a single ``(d, d)`` matrix.
"""
from __future__ import annotations

import numpy as np


class SingularMatrixError(ValueError):
    """Raised when a polar factor is requested for det <= 0."""


def _dim(F: np.ndarray) -> int:
    d = F.shape[-1]
    if d not in (2, 3) or F.shape[-2] != d:
        raise ValueError(f"expected (..., d, d) with d in {{2, 3}}, got {F.shape}")
    return d


def det(F):
    F = np.asarray(F, dtype=float)
    d = _dim(F)
    if d == 2:
        return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return np.einsum("...i,...i->...", F[..., 0, :], np.cross(F[..., 1, :], F[..., 2, :]))


def cofactor(F):
    """Matrix of signed minors, so that ``F @ cofactor(F).T == det(F) * I``.

    Works for singular ``F``; no inverse is formed.
    """
    F = np.asarray(F, dtype=float)
    d = _dim(F)
    out = np.empty_like(F)
    if d == 2:
        out[..., 0, 0] = F[..., 1, 1]
        out[..., 0, 1] = -F[..., 1, 0]
        out[..., 1, 0] = -F[..., 0, 1]
        out[..., 1, 1] = F[..., 0, 0]
        return out
    r0, r1, r2 = F[..., 0, :], F[..., 1, :], F[..., 2, :]
    out[..., 0, :] = np.cross(r1, r2)
    out[..., 1, :] = np.cross(r2, r0)
    out[..., 2, :] = np.cross(r0, r1)
    return out


def lin_cof(G):
    """First-order term of ``cofactor(I + eps*G)``: ``tr(G) I - G^T``.

    In two dimensions the expansion terminates, ``cofactor(I + G) == I + lin_cof(G)``.
    """
    G = np.asarray(G, dtype=float)
    d = _dim(G)
    tr = np.trace(G, axis1=-2, axis2=-1)
    return tr[..., None, None] * np.eye(d) - np.swapaxes(G, -1, -2)


def normal_density(F, n):
    """Area density ``|cof(F) n|`` of a deformed surface element with unit normal ``n``."""
    m = np.einsum("...ij,...j->...i", cofactor(F), np.asarray(n, dtype=float))
    return np.linalg.norm(m, axis=-1)


def sym(G):
    G = np.asarray(G, dtype=float)
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def skew(G):
    G = np.asarray(G, dtype=float)
    return 0.5 * (G - np.swapaxes(G, -1, -2))


def rotation2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotation_angle(R) -> float:
    """Angle of a 2x2 rotation."""
    R = np.asarray(R, dtype=float)
    return float(np.arctan2(R[1, 0] - R[0, 1], R[0, 0] + R[1, 1]))


def polar_rotation(M) -> np.ndarray:
    """Rotation ``R`` in SO(d) maximizing ``tr(R^T M)``, i.e. the polar factor of ``M``."""
    M = np.asarray(M, dtype=float)
    d = _dim(M)
    if M.ndim != 2:
        raise ValueError("polar_rotation expects a single matrix")
    if not det(M) > 0:
        raise SingularMatrixError(f"polar rotation needs det M > 0, got {det(M):.3e}")
    if d == 2:
        return rotation2(np.arctan2(M[1, 0] - M[0, 1], M[0, 0] + M[1, 1]))
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(det(U @ Vt))])
    return U @ D @ Vt


def dist_so(F) -> float:
    """Distance from ``F`` (det F > 0) to SO(d): ``|sqrt(F^T F) - I|``."""
    F = np.asarray(F, dtype=float)
    return float(np.linalg.norm(F - polar_rotation(F)))
