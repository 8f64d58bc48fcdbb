"""Proper orthogonal decomposition of snapshot collections.

Snapshots enter as rows; the basis comes from a thin SVD of the column
arrangement with plain Euclidean inner products and no centering. The
truncation keeps the smallest mode count whose discarded squared singular
values fall below the requested energy fraction. Reported singular values
are normalized so the first equals one, and every mode is sign-fixed by
making its largest-magnitude entry positive, so bases are reproducible
across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PodBasis", "pod_basis", "truncation_rank"]


@dataclass
class PodBasis:
    """Orthonormal mode matrix (dim, m) with normalized singular values.

    sigma_all keeps the full normalized spectrum (useful for choosing other
    truncations later without redoing the SVD).
    """

    modes: np.ndarray
    sigma: np.ndarray
    sigma_all: np.ndarray
    energy_tol: float

    @property
    def n_modes(self):
        return self.modes.shape[1]

    def project(self, fields):
        """Coefficients of rows of ``fields`` (or one vector) in the basis."""
        return np.asarray(fields) @ self.modes

    def reconstruct(self, coeffs):
        return np.asarray(coeffs) @ self.modes.T


def truncation_rank(sigma, energy_tol):
    """Smallest m with discarded energy fraction below the tolerance.

    The discarded fraction after m modes is 1 - sum(s_i^2, i<=m)/sum(s_i^2).
    """
    s2 = np.asarray(sigma, dtype=float) ** 2
    total = s2.sum()
    if total == 0.0:
        raise ValueError("all-zero snapshot matrix")
    discarded = 1.0 - np.cumsum(s2) / total
    # first index whose discarded fraction drops strictly below the tolerance
    m = int(np.searchsorted(-discarded, -energy_tol, side="right")) + 1
    return min(m, len(s2))


def pod_basis(snapshots, energy_tol, rank=None) -> PodBasis:
    """Thin-SVD basis of row-wise snapshots, truncated by energy fraction.

    An explicit ``rank`` overrides the energy criterion (clipped to the
    available spectrum).
    """
    x = np.asarray(snapshots, dtype=float)
    if x.ndim != 2:
        x = x.reshape(x.shape[0], -1)
    u, s, _ = np.linalg.svd(x.T, full_matrices=False)
    if s[0] == 0.0:
        raise ValueError("all-zero snapshot matrix")
    if rank is not None:
        if rank < 1:
            raise ValueError("rank must be at least 1")
        m = min(int(rank), len(s))
    else:
        m = truncation_rank(s, energy_tol)
    modes = u[:, :m].copy()
    # deterministic orientation: largest-magnitude entry of each mode > 0
    lead = np.argmax(np.abs(modes), axis=0)
    flip = modes[lead, np.arange(m)] < 0.0
    modes[:, flip] *= -1.0
    sigma_all = s / s[0]
    return PodBasis(modes=modes, sigma=sigma_all[:m].copy(), sigma_all=sigma_all,
                    energy_tol=float(energy_tol))
