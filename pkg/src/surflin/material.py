"""Stored-energy densities: Saint-Venant--Kirchhoff bulk W and second-gradient H = kappa |B|^p."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialSpec:
    lam: float = 1.0
    mu: float = 1.0
    kappa: float = 1.0
    gamma: float = 1.0
    p: float = 2.0
    q: float = 2.0
    dim: int = 2

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ParameterError(f"dim must be 2 or 3, got {self.dim}")
        if self.lam < 0:
            raise ParameterError("lambda must be >= 0")
        if not self.mu > 0:
            raise ParameterError("mu must be > 0")
        if not self.kappa > 0:
            raise ParameterError("kappa must be > 0")
        if self.gamma < 0:
            raise ParameterError("gamma must be >= 0")
        if not self.p > 1:
            raise ParameterError(f"p must be > 1, got {self.p}")
        if not self.q >= 1:
            raise ParameterError(f"q must be >= 1, got {self.q}")
        bound = self.dim * self.q / (self.q + 1)
        if self.p < bound - 1e-14:
            raise ParameterError(
                f"p = {self.p} violates p >= d*q/(q+1) = {bound:.6g} "
                f"(d = {self.dim}, q = {self.q}); the linearization limit needs it"
            )


def _tr(A):
    return np.trace(A, axis1=-2, axis2=-1)


def _frob2(A):
    return np.einsum("...ij,...ij->...", A, A)


def w_bulk(F, m: MaterialSpec):
    """W(F) = lam/8 (tr(F^T F - I))^2 + mu/4 |F^T F - I|^2."""
    F = np.asarray(F, dtype=float)
    C = np.swapaxes(F, -1, -2) @ F - np.eye(F.shape[-1])
    return m.lam / 8 * _tr(C) ** 2 + m.mu / 4 * _frob2(C)


def dw_bulk(F, m: MaterialSpec):
    """dW/dF = F (lam tr(E) I + 2 mu E), E = (F^T F - I)/2."""
    F = np.asarray(F, dtype=float)
    d = F.shape[-1]
    E = 0.5 * (np.swapaxes(F, -1, -2) @ F - np.eye(d))
    S = m.lam * _tr(E)[..., None, None] * np.eye(d) + 2 * m.mu * E
    return F @ S


def w_bulk_scaled(G, eps: float, m: MaterialSpec):
    """W(I + eps G)/eps^2 and its derivative in G, without cancellation for small eps.

    Uses (F^T F - I)/(2 eps) = sym(G) + eps G^T G / 2 exactly.
    """
    G = np.asarray(G, dtype=float)
    d = G.shape[-1]
    Gt = np.swapaxes(G, -1, -2)
    S = 0.5 * (G + Gt) + 0.5 * eps * (Gt @ G)
    trS = _tr(S)
    val = m.lam / 2 * trS**2 + m.mu * _frob2(S)
    stress = m.lam * trS[..., None, None] * np.eye(d) + 2 * m.mu * S
    grad = (np.eye(d) + eps * G) @ stress
    return val, grad


def quad_form(E, m: MaterialSpec):
    """Half the elastic tensor at the identity applied twice: lam/2 (tr E)^2 + mu |E|^2."""
    E = np.asarray(E, dtype=float)
    if not np.allclose(E, np.swapaxes(E, -1, -2), rtol=0, atol=1e-12 * (1 + np.abs(E).max())):
        raise ValueError("quad_form expects a symmetric strain")
    return m.lam / 2 * _tr(E) ** 2 + m.mu * _frob2(E)


def quad_form_grad(G, m: MaterialSpec):
    """Value and G-derivative of quad_form(sym G) for arbitrary G."""
    G = np.asarray(G, dtype=float)
    d = G.shape[-1]
    E = 0.5 * (G + np.swapaxes(G, -1, -2))
    trE = _tr(E)
    val = m.lam / 2 * trE**2 + m.mu * _frob2(E)
    grad = m.lam * trE[..., None, None] * np.eye(d) + 2 * m.mu * E
    return val, grad


def _norm3(B):
    return np.sqrt(np.einsum("...ijk,...ijk->...", B, B))


def h_energy(B, m: MaterialSpec):
    """H(B) = kappa |B|^p."""
    return m.kappa * _norm3(np.asarray(B, dtype=float)) ** m.p


def dh_energy(B, m: MaterialSpec):
    """kappa p |B|^(p-2) B, taken as 0 at B = 0."""
    B = np.asarray(B, dtype=float)
    nb = _norm3(B)
    if m.p == 2:
        return 2 * m.kappa * B
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(nb > 0, m.kappa * m.p * nb ** (m.p - 2), 0.0)
    return coef[..., None, None, None] * B
