"""Compressible Mooney-Rivlin solid under plane strain.

Strain energy per unit reference volume, with F the in-plane 2x2
deformation gradient, I1 = tr(F^T F) + 1 (the +1 is the unit out-of-plane
stretch) and J = det F:

    W(F) = c1 (I1 - 3) + c2 (I1 - 3)^2 - 2 c1 log J + k/2 (J - 1)^2

The reference state F = I is stress free by construction. All functions
broadcast over leading axes, so F may be shaped (..., 2, 2); stresses and
tangents come back shaped (..., 2, 2) and (..., 2, 2, 2, 2) with
A[..., i, j, k, l] = dP_ij / dF_kl.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Material", "energy", "stress", "stress_tangent"]


@dataclass(frozen=True)
class Material:
    """Parameter set (units MPa)."""

    c1: float = 0.55
    c2: float = 0.30
    k: float = 55.0

    def __post_init__(self):
        if self.c1 <= 0.0 or self.k <= 0.0 or self.c2 < 0.0:
            raise ValueError(f"non-physical parameters {self!r}")


class NonPositiveJacobianError(ValueError):
    """det F <= 0 somewhere; the state is outside the material's domain."""


def _invariants(f):
    f = np.asarray(f, dtype=float)
    if f.shape[-2:] != (2, 2):
        raise ValueError(f"F must be (..., 2, 2), got {f.shape}")
    i1 = np.einsum("...ij,...ij->...", f, f) + 1.0
    j = f[..., 0, 0] * f[..., 1, 1] - f[..., 0, 1] * f[..., 1, 0]
    return f, i1, j


def _inv_transpose(f, j):
    # closed-form 2x2 inverse transpose, (F^-T)_ij = (F^-1)_ji
    finv_t = np.empty_like(f)
    finv_t[..., 0, 0] = f[..., 1, 1]
    finv_t[..., 0, 1] = -f[..., 1, 0]
    finv_t[..., 1, 0] = -f[..., 0, 1]
    finv_t[..., 1, 1] = f[..., 0, 0]
    finv_t /= j[..., None, None]
    return finv_t


def energy(mat: Material, f):
    """Strain energy density W(F)."""
    f, i1, j = _invariants(f)
    if np.any(j <= 0.0):
        raise NonPositiveJacobianError("det F <= 0")
    e = i1 - 3.0
    return mat.c1 * e + mat.c2 * e * e - 2.0 * mat.c1 * np.log(j) + 0.5 * mat.k * (j - 1.0) ** 2


def stress(mat: Material, f):
    """First Piola-Kirchhoff stress P(F), shape (..., 2, 2)."""
    f, i1, j = _invariants(f)
    if np.any(j <= 0.0):
        raise NonPositiveJacobianError("det F <= 0")
    finv_t = _inv_transpose(f, j)
    coef_f = 2.0 * mat.c1 + 4.0 * mat.c2 * (i1 - 3.0)
    coef_it = -2.0 * mat.c1 + mat.k * (j - 1.0) * j
    return coef_f[..., None, None] * f + coef_it[..., None, None] * finv_t


def stress_tangent(mat: Material, f):
    """Stress and its tangent A[..., i, j, k, l] = dP_ij/dF_kl.

    A has major symmetry (it is the Hessian of W). Returns (P, A).
    """
    f, i1, j = _invariants(f)
    if np.any(j <= 0.0):
        raise NonPositiveJacobianError("det F <= 0")
    finv_t = _inv_transpose(f, j)
    finv = np.swapaxes(finv_t, -1, -2)

    coef_f = 2.0 * mat.c1 + 4.0 * mat.c2 * (i1 - 3.0)
    coef_it = -2.0 * mat.c1 + mat.k * (j - 1.0) * j
    p = coef_f[..., None, None] * f + coef_it[..., None, None] * finv_t

    eye = np.eye(2)
    a = np.einsum("...,ik,jl->...ijkl", coef_f, eye, eye)
    a += 8.0 * mat.c2 * np.einsum("...ij,...kl->...ijkl", f, f)
    # d(F^-T)_ij/dF_kl = -Finv_jk Finv_li enters with weight coef_it,
    # dJ/dF_kl = J Finv_lk scales F^-T with weight k(2J-1)J
    a -= np.einsum("...,...jk,...li->...ijkl", coef_it, finv, finv)
    a += np.einsum("...,...lk,...ji->...ijkl", mat.k * (2.0 * j - 1.0) * j, finv, finv)
    return p, a
