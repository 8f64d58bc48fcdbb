"""Cell boundary-value problem and effective quantities.

The fluctuation field w on the fixed parent mesh solves

    min  integral of W(F^p(w)) jdet  over the parent cell
    s.t. periodicity pair rows, corner ties, zero top/right edge-integral
         rows, and jdet-weighted rigid-translation rows,

with the pointwise deformation gradient pulled back through the geometry
map:  F^p = Fbar + x_mu . Gbar + (Grad w) Fmu^{-1}.  Newton iterations solve
the bordered (KKT) system; the convergence measure is the least-squares
norm min_m ||f + C^T m||, which at the solution coincides with the true
multiplier residual.

Higher-order gradient input is stored in the six canonical components
(xxx, xxy, xyx, xyy, yxy, yyy) of the symmetrized tensor G_ijk = G_kji.
Effective tangents with respect to those components are expanded to
full-slot tensors with the 1/2-split, so contracting them with a raw
(unsymmetrized) gradient increment reproduces the derivative through the
symmetrization exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .geometry import Mesh, TransformationMap
from .material import Material, NonPositiveJacobianError, stress, stress_tangent

__all__ = [
    "G6_TRIPLES",
    "MacroInput",
    "expand_g6",
    "compress_g",
    "ConstraintSet",
    "build_constraints",
    "solve_micro",
    "MicroSolution",
    "point_fields",
    "effective_stress",
    "effective_tangents",
    "EffectiveResponse",
    "NewtonError",
]

# canonical index triples of the symmetric third-order tensor (G_ijk = G_kji)
G6_TRIPLES = ((0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1), (1, 0, 1), (1, 1, 1))
_SELF_SYM = tuple(t == t[::-1] for t in G6_TRIPLES)


def expand_g6(g6):
    """Six canonical components -> full (2, 2, 2) symmetric tensor."""
    g6 = np.asarray(g6, dtype=float)
    full = np.zeros(g6.shape[:-1] + (2, 2, 2))
    for c, (i, j, k) in enumerate(G6_TRIPLES):
        full[..., i, j, k] = g6[..., c]
        full[..., k, j, i] = g6[..., c]
    return full

def compress_g(g_full, symmetrize=False):
    """Full (2, 2, 2) tensor -> six canonical components.

    With symmetrize=True the symmetric part (g_ijk + g_kji)/2 is taken
    first; otherwise the tensor must already be symmetric.
    """
    g = np.asarray(g_full, dtype=float)
    if symmetrize:
        g = 0.5 * (g + np.swapaxes(g, -1, -3))
    elif not np.allclose(g, np.swapaxes(g, -1, -3), atol=1e-12):
        raise ValueError("tensor lacks the g_ijk = g_kji symmetry")
    return np.stack([g[..., i, j, k] for (i, j, k) in G6_TRIPLES], axis=-1)


def _g6_selectors(xmu):
    """S_c(x)[i, j] = d(x . G)_ij / d g6_c at the quadrature points.

    (x . G)_ij = x_k G_kij; the derivative w.r.t. a canonical component
    collects both members of its index pair. Returns (E, Q, 6, 2, 2).
    """
    e, q = xmu.shape[:2]
    s = np.zeros((e, q, 6, 2, 2))
    for c, (m, n, o) in enumerate(G6_TRIPLES):
        s[:, :, c, n, o] += xmu[..., m]
        if (m, n, o) != (o, n, m):
            s[:, :, c, n, m] += xmu[..., o]
    return s


@dataclass(frozen=True)
class MacroInput:
    """Macroscopic loading of the cell: deformation gradient, six canonical
    higher-order components, and the shape parameter."""

    fbar: np.ndarray
    g6: np.ndarray
    zeta: float

    def __post_init__(self):
        object.__setattr__(self, "fbar", np.asarray(self.fbar, dtype=float).reshape(2, 2))
        object.__setattr__(self, "g6", np.asarray(self.g6, dtype=float).reshape(6))

    @classmethod
    def identity(cls, zeta):
        return cls(np.eye(2), np.zeros(6), zeta)

    def blend(self, other: "MacroInput", s: float) -> "MacroInput":
        """Affine interpolation from self (s=0) to other (s=1); same zeta."""
        return MacroInput(
            self.fbar + s * (other.fbar - self.fbar),
            self.g6 + s * (other.g6 - self.g6),
            other.zeta,
        )


# ---------------------------------------------------------------------------
# constraints
# ---------------------------------------------------------------------------


@dataclass
class ConstraintSet:
    """Sparse constraint rows C w = 0 with labeled row blocks."""

    matrix: sp.csr_matrix
    blocks: dict  # label -> slice into the row index
    gram: fem.GramFactor = field(repr=False, default=None)

    @property
    def n_rows(self):
        return self.matrix.shape[0]

    def multiplier_block(self, m, label):
        return m[self.blocks[label]]


class MeshTopologyError(ValueError):
    pass


def build_constraints(mesh: Mesh, tmap: TransformationMap) -> ConstraintSet:
    """Periodicity, corner ties, edge-integral and rigid-translation rows.

    Corner tying keeps three independent relations (the fourth implied one
    is never built, so no dedup pass is needed). Row rank is verified;
    a deficiency points at broken mesh pairing and raises.
    """
    nd = mesh.n_dofs
    rows, cols, vals = [], [], []
    blocks = {}
    r = 0

    def add_row(c, v):
        nonlocal r
        rows.extend([r] * len(c))
        cols.extend(c)
        vals.extend(v)
        r += 1

    corner_ids = set(int(i) for i in mesh.tags["corners"])
    start = r
    for pairs in (mesh.pairs_lr, mesh.pairs_bt):
        for a, b in pairs:
            if int(a) in corner_ids or int(b) in corner_ids:
                continue
            for c in range(2):
                add_row([2 * b + c, 2 * a + c], [1.0, -1.0])
    blocks["pairs"] = slice(start, r)

    # corners in fixed order BL, BR, TR, TL
    corners = mesh.tags["corners"]
    order = np.lexsort((mesh.nodes[corners, 0], mesh.nodes[corners, 1]))
    bl, br = corners[order[0]], corners[order[1]]
    tl, tr = corners[order[2]], corners[order[3]]
    if not (mesh.nodes[bl, 0] < mesh.nodes[br, 0] and mesh.nodes[tl, 0] < mesh.nodes[tr, 0]):
        raise MeshTopologyError("corner ordering failed")
    start = r
    for other in (br, tr, tl):
        for c in range(2):
            add_row([2 * other + c, 2 * bl + c], [1.0, -1.0])
    blocks["corners"] = slice(start, r)

    edges = fem.boundary_edges(mesh.elements)
    for label, axis in (("top", 1), ("right", 0)):
        on = [e for e in edges if np.all(np.abs(mesh.nodes[list(e), axis] - 1.0) < 1e-9)]
        if not on:
            raise MeshTopologyError(f"no boundary edges found on the {label} face")
        w = fem.edge_integral_weights(mesh.nodes, on)
        start = r
        for c in range(2):
            add_row([2 * n + c for n in sorted(w)], [w[n] for n in sorted(w)])
        blocks[label] = slice(start, r)

    vol_w = tmap.nodal_volume_weights(mesh)
    nz = np.nonzero(vol_w)[0]
    start = r
    for c in range(2):
        add_row(list(2 * nz + c), list(vol_w[nz]))
    blocks["rigid"] = slice(start, r)

    c = sp.csr_matrix(
        (np.array(vals), (np.array(rows), np.array(cols))), shape=(r, nd)
    )
    rank = fem.constraint_rank(c)
    if rank != r:
        raise MeshTopologyError(f"constraint rows are rank deficient ({rank} of {r})")
    return ConstraintSet(matrix=c, blocks=blocks, gram=fem.GramFactor(c))


# ---------------------------------------------------------------------------
# assembly and Newton solve
# ---------------------------------------------------------------------------


class NewtonError(RuntimeError):
    pass


def _fp_at_points(mesh, tmap, inp: MacroInput, w):
    """Pointwise F^p = Fbar + x_mu . G + (Grad w) Fmu^{-1} at the qps."""
    ed = mesh.data()
    gfull = expand_g6(inp.g6)
    fp = np.einsum("eqk,kij->eqij", tmap.xmu, gfull)
    fp += inp.fbar
    grad_w = np.einsum("eni,eqnj->eqij", w.reshape(-1, 2)[mesh.elements], ed.g0)
    fp += np.einsum("eqik,eqkj->eqij", grad_w, tmap.fmu_inv)
    return fp


def _assemble(mesh, tmap, mat, inp, w, need_matrix):
    ed = mesh.data()
    fp = _fp_at_points(mesh, tmap, inp, w)
    if need_matrix:
        p, a = stress_tangent(mat, fp)
    else:
        p, a = stress(mat, fp), None
    gmu = np.einsum("eqba,eqnb->eqna", tmap.fmu_inv, ed.g0)
    wj = ed.w * tmap.jdet
    f_loc = np.einsum("eq,eqba,eqna->enb", wj, p, gmu)
    f = fem.assemble_vector(f_loc.reshape(-1, 12), mesh.edofs(), mesh.n_dofs)
    if not need_matrix:
        return f, None
    t = np.einsum("eqbacd,eqna->eqnbcd", a, gmu)
    k_loc = np.einsum("eq,eqnbcd,eqmd->enbmc", wj, t, gmu)
    k = fem.assemble_matrix(k_loc.reshape(-1, 12, 12), mesh.edofs(), mesh.n_dofs)
    return f, k


@dataclass
class MicroSolution:
    """Converged cell state: fluctuation, multipliers, and solve metadata."""

    w: np.ndarray
    multipliers: np.ndarray
    residual: float
    iterations: int
    step_cuts: int
    inp: MacroInput
    residual_history: list = field(default_factory=list)
    saddle: fem.SaddleFactor = field(repr=False, default=None)


def newton_tolerance(mat: Material):
    """Absolute residual tolerance, 1e-8 * c1 * (1 mm length scale)."""
    return 1e-8 * mat.c1


def solve_micro(
    mesh: Mesh,
    tmap: TransformationMap,
    mat: Material,
    constraints: ConstraintSet,
    target: MacroInput,
    w0=None,
    from_input: MacroInput | None = None,
    tol=None,
    max_iter=30,
    max_cuts=6,
    keep_saddle=True,
) -> MicroSolution:
    """Newton solve of the cell problem with adaptive load stepping.

    ``w0`` warm-starts the iteration and ``from_input`` names the load it
    was converged at; on Newton failure the load increment from there to
    ``target`` is halved (at most ``max_cuts`` times). The converged
    fluctuation is projected onto the constraint kernel, and the reported
    multipliers are the least-squares ones at the converged state.
    """
    tol = newton_tolerance(mat) if tol is None else float(tol)
    cmat, gram = constraints.matrix, constraints.gram
    w_good = np.zeros(mesh.n_dofs) if w0 is None else np.asarray(w0, dtype=float).copy()
    base = MacroInput.identity(target.zeta) if from_input is None else from_input

    s_good, ds, cuts, total_it = 0.0, 1.0, 0, 0
    history = []
    while s_good < 1.0:
        s_try = 1.0 if ds >= 1.0 - s_good else s_good + ds
        inp = base.blend(target, s_try)
        try:
            w, it, hist = _newton(
                mesh, tmap, mat, inp, cmat, gram, w_good.copy(), tol, max_iter
            )
        except (NonPositiveJacobianError, NewtonError):
            cuts += 1
            ds *= 0.5
            if cuts > max_cuts:
                raise NewtonError(
                    f"no convergence to s={s_try:.4f} after {max_cuts} load cuts"
                ) from None
            continue
        total_it += it
        history.extend(hist)
        w_good, s_good = w, s_try
        ds *= 2.0

    w_good = gram.project_kernel(w_good)
    f, _ = _assemble(mesh, tmap, mat, target, w_good, need_matrix=False)
    m, res = gram.multiplier(f)
    saddle = None
    if keep_saddle:
        # re-factor at the converged state so tangent solves see the exact
        # linearization there, not the one of the last Newton iterate
        _, k = _assemble(mesh, tmap, mat, target, w_good, need_matrix=True)
        saddle = fem.SaddleFactor(k, cmat)
    return MicroSolution(
        w=w_good,
        multipliers=m,
        residual=float(np.linalg.norm(res)),
        iterations=total_it,
        step_cuts=cuts,
        inp=target,
        residual_history=history,
        saddle=saddle,
    )


def _residual_norm(mesh, tmap, mat, inp, gram, w):
    f, _ = _assemble(mesh, tmap, mat, inp, w, need_matrix=False)
    _, res = gram.multiplier(f)
    return f, float(np.linalg.norm(res))


def _newton(mesh, tmap, mat, inp, cmat, gram, w, tol, max_iter):
    """Damped Newton loop at fixed load; raises NewtonError on failure.

    The cell is very soft in its ligament-rotation mode, so full steps from
    a cold start routinely overshoot into inverted elements. Steps are
    backtracked until the multiplier residual decreases; if no step length
    helps (indefinite tangent), the caller cuts the load increment.
    """
    f, r = _residual_norm(mesh, tmap, mat, inp, gram, w)
    hist = [r]
    for it in range(max_iter):
        if r <= tol:
            return w, it, hist
        _, k = _assemble(mesh, tmap, mat, inp, w, need_matrix=True)
        dw, _ = fem.SaddleFactor(k, cmat).solve(-f, -(cmat @ w))
        alpha = 1.0
        while True:
            try:
                f_new, r_new = _residual_norm(mesh, tmap, mat, inp, gram, w + alpha * dw)
            except NonPositiveJacobianError:
                r_new = np.inf
            if r_new <= tol or r_new <= (1.0 - 0.2 * alpha) * r:
                break
            alpha *= 0.5
            if alpha < 2.0 ** -12:
                raise NewtonError(f"line search stalled (residual {r:.3e})")
        w = w + alpha * dw
        f, r = f_new, r_new
        hist.append(r)
    if r <= tol:
        return w, max_iter, hist
    raise NewtonError(f"no convergence in {max_iter} iterations (residual {r:.3e})")


# ---------------------------------------------------------------------------
# effective quantities
# ---------------------------------------------------------------------------


def point_fields(mesh, tmap, mat, inp: MacroInput, w):
    """Pointwise snapshot fields at the quadrature points.

    Returns (Y, Yh): the weighted-stress field Y = P Fmu^{-T} jdet with
    Y[b, c] = P_ba Fmuinv[c, a] jdet (the internal force is
    f_(n,b) = sum_q w_q Y[b, c] G0[n, c] with parent weights), and the
    higher-order integrand Yh_ijk = (P_ji x_k + x_i P_jk)/2 jdet.
    """
    fp = _fp_at_points(mesh, tmap, inp, w)
    p = stress(mat, fp)
    y = np.einsum("eqba,eqca,eq->eqbc", p, tmap.fmu_inv, tmap.jdet)
    x = tmap.xmu
    yh = 0.5 * (
        np.einsum("eqji,eqk->eqijk", p, x) + np.einsum("eqi,eqjk->eqijk", x, p)
    ) * tmap.jdet[..., None, None, None]
    return y, yh


def effective_stress(mesh, tmap, mat, inp: MacroInput, w, form="plain"):
    """Volume-averaged stress and higher-order stress.

    form="plain" averages P jdet directly; form="pullback" integrates the
    boundary-equivalent field Y = P Fmu^{-T} jdet with parent weights. The
    two agree at equilibrium (traction-free holes).
    """
    ed = mesh.data()
    v = tmap.volume
    fp = _fp_at_points(mesh, tmap, inp, w)
    p = stress(mat, fp)
    x = tmap.xmu
    if form == "plain":
        pbar = np.einsum("eq,eqij->ij", ed.w * tmap.jdet, p) / v
    elif form == "pullback":
        y = np.einsum("eqba,eqca,eq->eqbc", p, tmap.fmu_inv, tmap.jdet)
        pbar = np.einsum("eq,eqij->ij", ed.w, y) / v
    else:
        raise ValueError(f"unknown form {form!r}")
    wj = ed.w * tmap.jdet
    qbar = 0.5 * (
        np.einsum("eq,eqji,eqk->ijk", wj, p, x) + np.einsum("eq,eqi,eqjk->ijk", wj, x, p)
    ) / v
    return pbar, qbar


@dataclass
class EffectiveResponse:
    """Effective stresses and the four consistent tangent blocks.

    dp_dg and dq_dg carry full index slots on the gradient direction
    (1/2-split over symmetric pairs), so contraction with a raw gradient
    increment implements the derivative through the symmetrization.
    """

    pbar: np.ndarray  # (2, 2)
    qbar: np.ndarray  # (2, 2, 2)
    dp_df: np.ndarray  # (2, 2, 2, 2)
    dp_dg: np.ndarray  # (2, 2, 2, 2, 2)
    dq_df: np.ndarray  # (2, 2, 2, 2, 2)
    dq_dg: np.ndarray  # (2, 2, 2, 2, 2, 2)
    volume: float


def _expand_last_g6(arr):
    """(..., 6) canonical derivative -> (..., 2, 2, 2) full-slot (1/2-split)."""
    out = np.zeros(arr.shape[:-1] + (2, 2, 2))
    for c, (i, j, k) in enumerate(G6_TRIPLES):
        if _SELF_SYM[c]:
            out[..., i, j, k] = arr[..., c]
        else:
            out[..., i, j, k] = 0.5 * arr[..., c]
            out[..., k, j, i] = 0.5 * arr[..., c]
    return out


def effective_tangents(mesh, tmap, mat, sol: MicroSolution):
    """Effective stresses plus the four tangents at a converged state.

    Ten linear tangent problems (four deformation-gradient directions, six
    canonical higher-order directions) reuse the factorized Newton matrix;
    the sensitivity fields are inserted into the volume averages.
    """
    if sol.saddle is None:
        raise ValueError("solution carries no factorized system (keep_saddle=False)")
    ed = mesh.data()
    inp, w = sol.inp, sol.w
    fp = _fp_at_points(mesh, tmap, inp, w)
    p, a = stress_tangent(mat, fp)
    gmu = np.einsum("eqba,eqnb->eqna", tmap.fmu_inv, ed.g0)
    wj = ed.w * tmap.jdet
    x = tmap.xmu
    v = tmap.volume
    edofs = mesh.edofs()
    nd = mesh.n_dofs

    # right-hand sides: -d f / d (load direction)
    sel = _g6_selectors(x)  # (E,Q,6,2,2)
    rhs = np.empty((nd, 10))
    rf_loc = -np.einsum("eq,eqbakl,eqna->enbkl", wj, a, gmu).reshape(-1, 12, 4)
    for c in range(4):
        rhs[:, c] = fem.assemble_vector(rf_loc[..., c], edofs, nd)
    rg_loc = -np.einsum("eq,eqbaij,eqcij,eqna->enbc", wj, a, sel, gmu).reshape(-1, 12, 6)
    for c in range(6):
        rhs[:, 4 + c] = fem.assemble_vector(rg_loc[..., c], edofs, nd)

    q_fields, _ = sol.saddle.solve(rhs)  # (nd, 10)

    # sensitivity insertion at the quadrature points
    qe = q_fields.reshape(-1, 2, 10)[mesh.elements]  # (E,6,2,10)
    grad_q = np.einsum("enis,eqnj->eqijs", qe, ed.g0)
    gamma = np.einsum("eqiks,eqkj->eqijs", grad_q, tmap.fmu_inv)  # (E,Q,2,2,10)

    dp_star = np.einsum("eqijab,eqabs->eqijs", a, gamma)
    dp_star[..., :4] += a.reshape(a.shape[:2] + (2, 2, 4))
    dp_star[..., 4:] += np.einsum("eqijab,eqcab->eqijc", a, sel)

    dp = np.einsum("eq,eqijs->ijs", wj, dp_star) / v
    dq = 0.5 * (
        np.einsum("eq,eqjis,eqk->ijks", wj, dp_star, x)
        + np.einsum("eq,eqi,eqjks->ijks", wj, x, dp_star)
    ) / v

    pbar = np.einsum("eq,eqij->ij", wj, p) / v
    qbar = 0.5 * (
        np.einsum("eq,eqji,eqk->ijk", wj, p, x) + np.einsum("eq,eqi,eqjk->ijk", wj, x, p)
    ) / v
    return EffectiveResponse(
        pbar=pbar,
        qbar=qbar,
        dp_df=dp[..., :4].reshape(2, 2, 2, 2),
        dp_dg=_expand_last_g6(dp[..., 4:]),
        dq_df=dq[..., :4].reshape(2, 2, 2, 2, 2),
        dq_dg=_expand_last_g6(dq[..., 4:]),
        volume=v,
    )
