"""Sparse quadrature by greedy point selection with non-negative weights.

The full Gauss rule integrates three families exactly: reduced internal
forces (parent gradients of fluctuation modes contracted with weighted
stress modes), the weighted stress modes themselves, and the higher-order
modes, plus the parent cell volume. Those integrands evaluated at every
Gauss point form a block matrix; each block except the volume row is
recentered so its exact integral is zero. Points are then selected one by
one (largest weighted correlation with the current residual, smallest index
on ties) and weights refitted by non-negative least squares in the
singular-value weighted norm until the four standardized block residuals
drop below their tolerances.

Row scaling with the square root of the weighting matrix reduces the
weighted problem to an ordinary NNLS, solved by an active-set iteration
that warm-starts from the previous greedy step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .geometry import Mesh
from .pod import PodBasis

__all__ = [
    "CubatureSystem",
    "CubatureScheme",
    "build_system",
    "select_points",
    "nnls_solve",
    "mode_point_gradients",
    "UnconvergedCubatureWarning",
]

DEFAULT_C = (10.0, 1.6, 1.1)
DEFAULT_EPS = (1e-4, 1e-4, 1e-4, 1e-4)


class UnconvergedCubatureWarning(UserWarning):
    pass


@dataclass
class CubatureSystem:
    """Recentered block system with its weighting and the full Gauss rule.

    a_hat:       (n_rows, Qhat) pointwise integrand values, blocks 1-3
                 recentered, last row all ones
    b_hat:       exact integrals, zero except the final volume entry
    sigma:       diagonal weighting including the block emphasis factors
    sigma_plain: the same diagonal without the emphasis factors (used by
                 the standardized stopping residuals)
    h_full:      full Gauss weights (parent measure), canonical
                 element-major point-minor order
    """

    a_hat: np.ndarray
    b_hat: np.ndarray
    sigma: np.ndarray
    sigma_plain: np.ndarray
    blocks: dict
    h_full: np.ndarray
    volume: float
    counts: tuple  # (N, M, L)
    c: tuple

    @property
    def n_points(self):
        return self.a_hat.shape[1]

    def block_traces(self):
        return {k: float(self.sigma_plain[s].sum()) for k, s in self.blocks.items()}


@dataclass
class CubatureScheme:
    """Selected Gauss points (canonical ascending ids) and their weights."""

    indices: np.ndarray
    weights: np.ndarray
    history: np.ndarray  # columns: k, Q, r1, r2, r3, r4
    converged: bool
    config: dict

    @property
    def n_points(self):
        return self.indices.size


def mode_point_gradients(mesh: Mesh, modes):
    """Parent gradients of nodal vector modes at every Gauss point.

    modes: (n_dofs, N). Returns (n_points, 2, 2, N) with entry [q, i, j, n]
    holding d(mode n, component i)/d(parent x_j) at point q, canonical
    element-major point order.
    """
    ed = mesh.data()
    vm = modes.reshape(mesh.n_nodes, 2, -1)[mesh.elements]  # (E,6,2,N)
    return np.einsum("enis,eqnj->eqijs", vm, ed.g0).reshape(
        ed.n_points, 2, 2, modes.shape[1])


def build_system(mesh: Mesh, w_basis: PodBasis, y_basis: PodBasis,
                 yh_basis: PodBasis, c=DEFAULT_C) -> CubatureSystem:
    """Assemble the block system from the three mode families.

    Mode layouts: fluctuation modes over dofs; stress / higher-order modes
    over quadrature points with 4 and 8 trailing components (canonical
    element-major point order, row-major component flattening).
    """
    ed = mesh.data()
    nq = ed.n_points
    h_full = ed.w.ravel().copy()
    volume = float(h_full.sum())

    n = w_basis.n_modes
    m = y_basis.n_modes
    l_ = yh_basis.n_modes
    if y_basis.modes.shape[0] != 4 * nq or yh_basis.modes.shape[0] != 8 * nq:
        raise ValueError("stress mode length does not match the mesh quadrature")
    if w_basis.modes.shape[0] != mesh.n_dofs:
        raise ValueError("fluctuation mode length does not match the mesh dofs")

    grad_v = mode_point_gradients(mesh, w_basis.modes)
    bm = y_basis.modes.reshape(nq, 2, 2, m)
    hl = yh_basis.modes.reshape(nq, 2, 2, 2, l_)

    a1 = np.einsum("qabi,qabm->imq", grad_v, bm).reshape(n * m, nq)
    a2 = bm.reshape(nq, 4, m).transpose(2, 1, 0).reshape(4 * m, nq)
    a3 = hl.reshape(nq, 8, l_).transpose(2, 1, 0).reshape(8 * l_, nq)

    rows = [a1, a2, a3]
    for i, a in enumerate(rows):
        b = a @ h_full
        rows[i] = a - np.outer(b, np.ones(nq)) / volume
    rows.append(np.ones((1, nq)))
    a_hat = np.vstack(rows)
    b_hat = np.zeros(a_hat.shape[0])
    b_hat[-1] = volume

    blocks = {
        "force": slice(0, n * m),
        "stress": slice(n * m, n * m + 4 * m),
        "higher": slice(n * m + 4 * m, n * m + 4 * m + 8 * l_),
        "volume": slice(n * m + 4 * m + 8 * l_, n * m + 4 * m + 8 * l_ + 1),
    }
    sigma_plain = np.concatenate([
        np.outer(w_basis.sigma, y_basis.sigma).ravel(),
        np.repeat(y_basis.sigma, 4),
        np.repeat(yh_basis.sigma, 8),
        [1.0],
    ])
    scale = np.concatenate([
        np.full(n * m, c[0]), np.full(4 * m, c[1]), np.full(8 * l_, c[2]), [1.0]
    ])
    return CubatureSystem(
        a_hat=a_hat,
        b_hat=b_hat,
        sigma=sigma_plain * scale,
        sigma_plain=sigma_plain,
        blocks=blocks,
        h_full=h_full,
        volume=volume,
        counts=(n, m, l_),
        c=tuple(float(x) for x in c),
    )


def nnls_solve(a, b, x0=None, kkt_tol=1e-12, max_iter=None):
    """Non-negative least squares min over x >= 0 of the residual 2-norm.

    Active-set iteration; ``x0`` warm-starts the passive set. The KKT
    conditions at exit: gradient of the squared-residual objective is
    >= -kkt_tol on zero entries and of magnitude <= kkt_tol on positive
    entries (up to the final least-squares roundoff).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    nq = a.shape[1]
    max_iter = 3 * nq if max_iter is None else max_iter
    x = np.zeros(nq)
    passive = np.zeros(nq, dtype=bool)

    def restricted_fit():
        """Least squares on the passive set, shrinking it until feasible."""
        nonlocal x, passive
        while True:
            idx = np.flatnonzero(passive)
            if idx.size == 0:
                x[:] = 0.0
                return
            z = scipy.linalg.lstsq(a[:, idx], b, lapack_driver="gelsy")[0]
            if np.all(z > 0.0):
                x[:] = 0.0
                x[idx] = z
                return
            # step toward z until the first variable hits zero, drop it
            xi = x[idx]
            bad = z <= 0.0
            alpha = np.min(xi[bad] / (xi[bad] - z[bad]))
            xi = xi + alpha * (z - xi)
            x[:] = 0.0
            x[idx] = np.maximum(xi, 0.0)
            passive[idx[xi <= 1e-15]] = False

    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (nq,):
            raise ValueError("warm start has wrong length")
        passive = x0 > 0.0
        x = np.where(passive, x0, 0.0)
        if passive.any():
            restricted_fit()

    for _ in range(max_iter):
        grad = a.T @ (a @ x - b)
        candidates = ~passive
        if not candidates.any() or grad[candidates].min() >= -kkt_tol:
            return x
        j = np.flatnonzero(candidates)[np.argmin(grad[candidates])]
        passive[j] = True
        restricted_fit()
    warnings.warn("non-negative least squares hit its iteration cap",
                  UnconvergedCubatureWarning)
    return x


def _standardized_residuals(system: CubatureSystem, r_hat):
    """Eq.-style block residual norms in the plain (unemphasized) weighting."""
    out = []
    for name in ("force", "stress", "higher"):
        s = system.blocks[name]
        sig = system.sigma_plain[s]
        out.append(float(np.sqrt(r_hat[s] @ (sig * r_hat[s])) / sig.sum()))
    out.append(float(np.abs(r_hat[system.blocks["volume"]][0]) / system.volume))
    return out


def select_points(system: CubatureSystem, eps=DEFAULT_EPS, k_max=None) -> CubatureScheme:
    """Greedy point selection with NNLS refit (warm-started) per iteration.

    Stops once all four standardized residuals are below their tolerances,
    or at k_max (default: half the Gauss points) with a warning and the
    converged flag unset.
    """
    nq = system.n_points
    k_max = nq // 2 if k_max is None else int(k_max)
    sqrt_s = np.sqrt(system.sigma)
    a_s = system.a_hat * sqrt_s[:, None]
    b_s = system.b_hat * sqrt_s
    col_norm = np.linalg.norm(a_s, axis=0)  # > 0: the volume row is all ones

    selected = []
    weights = np.zeros(0)
    r_hat = system.b_hat.copy()
    r_s = b_s.copy()
    history = []
    converged = False
    candidate = np.ones(nq, dtype=bool)

    k = 0
    while k < k_max:
        k += 1
        scores = np.where(candidate, (a_s.T @ r_s) / col_norm, -np.inf)
        j = int(np.argmax(scores))  # argmax takes the first max: smallest index
        candidate[j] = False
        selected.append(j)
        x0 = np.concatenate([weights, [0.0]])
        weights = nnls_solve(a_s[:, selected], b_s, x0=x0)
        r_hat = system.b_hat - system.a_hat[:, selected] @ weights
        r_s = b_s - a_s[:, selected] @ weights
        r = _standardized_residuals(system, r_hat)
        history.append([k, len(selected), *r])
        if all(ri < ei for ri, ei in zip(r, eps)):
            converged = True
            break

    if not converged:
        warnings.warn(
            f"cubature selection stopped at k_max={k_max} with residuals "
            + ", ".join(f"{v:.3e}" for v in history[-1][2:]),
            UnconvergedCubatureWarning,
        )
    order = np.argsort(selected)
    return CubatureScheme(
        indices=np.asarray(selected, dtype=np.int64)[order],
        weights=weights[order],
        history=np.asarray(history),
        converged=converged,
        config={"c": system.c, "eps": tuple(float(e) for e in eps), "k_max": k_max},
    )
