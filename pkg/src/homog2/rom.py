"""Hyperreduced cell model: Newton in the mode coefficients at selected points.

The trained artifact carries the fluctuation basis, the sparse quadrature
rule, and parent-gradient slices of every mode at the selected Gauss points.
Online, a load state is solved unconstrained in the N coefficients (the
basis inherits periodicity and the integral constraints from the training
snapshots), and effective stresses plus the four consistent tangents are
accumulated from the selected points alone. The geometry map for a shape
parameter not seen during training is produced on demand by the auxiliary
morph solve and cached per value.

Weighted stresses use the boundary-equivalent form Y = P Fmu^{-T} jdet,
the same field the quadrature rule was trained on, so the sparse averages
match the tolerances certified during point selection.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .cubature import CubatureScheme, build_system, mode_point_gradients, select_points
from .geometry import Mesh, mesh_from_arrays, solve_auxiliary_transform
from .material import Material, NonPositiveJacobianError, stress, stress_tangent
from .micro import (
    EffectiveResponse,
    MacroInput,
    NewtonError,
    _expand_last_g6,
    _g6_selectors,
    expand_g6,
    newton_tolerance,
)
from .pod import pod_basis
from .snapshots import SnapshotSet, collect_samples, draw_samples

__all__ = [
    "RomArtifact",
    "RomState",
    "rom_assemble",
    "rom_solve",
    "rom_effective",
    "train_artifact",
    "save_artifact",
    "load_artifact",
]

_FORMAT = "homog2-rom-1"


@dataclass
class PointGeometry:
    """Geometry-map slices at the selected points for one shape parameter."""

    zeta: float
    fmu_inv: np.ndarray  # (S, 2, 2)
    jdet: np.ndarray  # (S,)
    xmu: np.ndarray  # (S, 2)
    sel: np.ndarray  # (S, 6, 2, 2) selector fields of the canonical g6 slots
    v_norm: float  # morphed cell volume at full quadrature


@dataclass
class RomArtifact:
    """Self-contained reduced model: basis, sparse rule, cached gradients."""

    mesh: Mesh
    material: Material
    v_w: np.ndarray  # (n_dofs, N)
    gradv: np.ndarray  # (S, 2, 2, N) parent mode gradients at selected points
    scheme: CubatureScheme
    sigma: dict  # normalized singular values of the three trained families
    meta: dict
    _maps: dict = field(default_factory=dict, repr=False)

    @property
    def n_modes(self):
        return self.v_w.shape[1]

    @property
    def n_selected(self):
        return self.scheme.indices.size

    def map_for(self, zeta) -> PointGeometry:
        key = float(zeta)
        got = self._maps.get(key)
        if got is None:
            tmap = solve_auxiliary_transform(self.mesh, key)
            idx = self.scheme.indices
            got = PointGeometry(
                zeta=key,
                fmu_inv=tmap.fmu_inv.reshape(-1, 2, 2)[idx],
                jdet=tmap.jdet.reshape(-1)[idx],
                xmu=tmap.xmu.reshape(-1, 2)[idx],
                sel=_g6_selectors(tmap.xmu).reshape(-1, 6, 2, 2)[idx],
                v_norm=tmap.volume,
            )
            self._maps[key] = got
        return got

    def with_full_quadrature(self) -> "RomArtifact":
        """Variant whose rule is the complete Gauss rule (reference answers)."""
        ed = self.mesh.data()
        nq = ed.n_points
        scheme = CubatureScheme(
            indices=np.arange(nq, dtype=np.int64),
            weights=ed.w.ravel().copy(),
            history=np.zeros((0, 6)),
            converged=True,
            config={"full_quadrature": True},
        )
        return replace(
            self,
            gradv=mode_point_gradients(self.mesh, self.v_w),
            scheme=scheme,
            meta={**self.meta, "full_quadrature": True},
            _maps={},
        )


@dataclass
class RomState:
    """Converged coefficients and the point data the tangents reuse."""

    a: np.ndarray
    inp: MacroInput
    residual: float
    iterations: int
    step_cuts: int
    converged: bool
    fp: np.ndarray  # (S, 2, 2)
    p: np.ndarray  # (S, 2, 2)
    a_tan: np.ndarray  # (S, 2, 2, 2, 2) material tangent at the points
    kn: np.ndarray  # (N, N) reduced stiffness at the solution
    residual_history: list


def _point_state(artifact, geo, inp: MacroInput, a, need_tangent):
    gfull = expand_g6(inp.g6)
    grad_w = np.einsum("qijn,n->qij", artifact.gradv, a)
    fp = (
        inp.fbar
        + np.einsum("qk,kij->qij", geo.xmu, gfull)
        + np.einsum("qik,qkj->qij", grad_w, geo.fmu_inv)
    )
    if need_tangent:
        p, a_tan = stress_tangent(artifact.material, fp)
    else:
        p, a_tan = stress(artifact.material, fp), None
    return fp, p, a_tan


def rom_assemble(a, inp: MacroInput, artifact: RomArtifact, need_matrix=True):
    """Reduced internal force and (optionally) reduced stiffness.

    f_i = sum over selected q of  h_q (Grad v_i : Y)(q),
    K_ij = sum of  h_q jdet_q  Gamma_i : A : Gamma_j  with the pulled-back
    mode gradients Gamma_i = Grad v_i . Fmu^{-1}.
    """
    geo = artifact.map_for(inp.zeta)
    fp, p, a_tan = _point_state(artifact, geo, inp, a, need_matrix)
    h = artifact.scheme.weights
    y = np.einsum("qba,qca,q->qbc", p, geo.fmu_inv, geo.jdet)
    f = np.einsum("q,qban,qba->n", h, artifact.gradv, y)
    if not need_matrix:
        return f, None
    gamma = np.einsum("qbcn,qca->qban", artifact.gradv, geo.fmu_inv)
    kn = np.einsum("q,qban,qbacd,qcdm->nm", h * geo.jdet, gamma, a_tan, gamma)
    return f, kn


def rom_solve(artifact: RomArtifact, target: MacroInput, a0=None, from_input=None,
              tol=None, max_iter=30, max_cuts=6, n_steps=1) -> RomState:
    """Damped Newton on the coefficients with adaptive load stepping.

    Mirrors the full cell solver: blend from the warm-start input (or the
    unloaded state) toward the target, halving the step on failure. In a
    multi-stable (post-buckling) regime the converged branch depends on the
    path taken; n_steps > 1 seeds smaller increments so the solve tracks
    the branch the equivalent incremental loading would select.
    """
    tol = newton_tolerance(artifact.material) if tol is None else tol
    n = artifact.n_modes
    a = np.zeros(n) if a0 is None else np.asarray(a0, dtype=float).copy()
    base = MacroInput.identity(target.zeta) if from_input is None else from_input

    s_good = 0.0
    ds_max = 1.0 / max(int(n_steps), 1)
    ds = ds_max
    cuts = 0
    total_iters = 0
    history = []
    state = None
    while s_good < 1.0:
        s_try = 1.0 if ds >= 1.0 - s_good else s_good + ds
        inp = base.blend(target, s_try)
        try:
            state = _rom_newton(artifact, inp, a, tol, max_iter)
        except (NewtonError, NonPositiveJacobianError):
            cuts += 1
            ds *= 0.5
            if cuts > max_cuts:
                raise
            continue
        a = state.a
        total_iters += state.iterations
        history.extend(state.residual_history)
        s_good = s_try
        ds = min(ds * 2.0, ds_max)
    return replace(state, iterations=total_iters, step_cuts=cuts,
                   residual_history=history)


_WATCHDOG_WINDOW = 4


def _rom_newton(artifact, inp, a0, tol, max_iter):
    # Acceptance is nonmonotone (watchdog over the last few residuals).
    # Near a pattern-transformation point the reduced stiffness passes
    # through indefiniteness, where the Newton direction is not a descent
    # direction for the residual norm and monotone backtracking stalls;
    # allowing a bounded transient lets the iteration walk through and
    # settle in the adjacent stable well.
    a = a0.copy()
    f, kn = rom_assemble(a, inp, artifact)
    r = np.linalg.norm(f)
    history = [r]
    iterations = 0
    while r > tol:
        if iterations >= max_iter:
            raise NewtonError(f"no convergence in {max_iter} iterations")
        iterations += 1
        try:
            da = -scipy.linalg.solve(kn, f, assume_a="sym")
        except scipy.linalg.LinAlgError as exc:
            raise NewtonError(f"singular reduced stiffness: {exc}") from exc
        r_ref = max(history[-_WATCHDOG_WINDOW:])
        alpha = 1.0
        while True:
            try:
                f_new, kn_new = rom_assemble(a + alpha * da, inp, artifact)
                r_new = np.linalg.norm(f_new)
            except NonPositiveJacobianError:
                r_new = np.inf
            if r_new <= tol or r_new <= (1.0 - 1e-4 * alpha) * r_ref:
                break
            alpha *= 0.5
            if alpha < 2.0 ** -12:
                raise NewtonError("line search stalled")
        a += alpha * da
        f, kn, r = f_new, kn_new, r_new
        history.append(r)
    geo = artifact.map_for(inp.zeta)
    fp, p, a_tan = _point_state(artifact, geo, inp, a, True)
    return RomState(
        a=a,
        inp=inp,
        residual=r,
        iterations=iterations,
        step_cuts=0,
        converged=True,
        fp=fp,
        p=p,
        a_tan=a_tan,
        kn=kn,
        residual_history=history,
    )


def rom_effective(artifact: RomArtifact, state: RomState) -> EffectiveResponse:
    """Effective stresses and tangents from the selected points.

    Average of the boundary-equivalent stress for P, the x-weighted
    symmetrized moment for Q; tangents solve the reduced stiffness for the
    ten sensitivity directions and accumulate the same averages.
    """
    geo = artifact.map_for(state.inp.zeta)
    h = artifact.scheme.weights
    v = geo.v_norm
    hj = h * geo.jdet
    p, a_tan = state.p, state.a_tan
    x = geo.xmu

    y = np.einsum("qba,qca,q->qbc", p, geo.fmu_inv, geo.jdet)
    pbar = np.einsum("q,qij->ij", h, y) / v
    qbar = 0.5 * (
        np.einsum("q,qji,qk->ijk", hj, p, x) + np.einsum("q,qi,qjk->ijk", hj, x, p)
    ) / v

    gamma = np.einsum("qbcn,qca->qban", artifact.gradv, geo.fmu_inv)
    rhs = np.empty((artifact.n_modes, 10))
    rhs[:, :4] = -np.einsum("q,qban,qbakl->nkl", hj, gamma, a_tan).reshape(-1, 4)
    rhs[:, 4:] = -np.einsum("q,qban,qbaij,qcij->nc", hj, gamma, a_tan, geo.sel)
    try:
        cf = scipy.linalg.cho_factor(state.kn)
        q_coef = scipy.linalg.cho_solve(cf, rhs)  # (N, 10)
    except scipy.linalg.LinAlgError:
        q_coef = scipy.linalg.solve(state.kn, rhs, assume_a="sym")

    d_direct = np.empty((h.size, 2, 2, 10))
    d_direct[..., :4] = np.eye(4).reshape(2, 2, 4)
    d_direct[..., 4:] = geo.sel.transpose(0, 2, 3, 1)
    d_total = d_direct + np.einsum("qkln,ns->qkls", gamma, q_coef)
    dp_pt = np.einsum("qbakl,qkls->qbas", a_tan, d_total)  # dP per direction

    dy_pt = np.einsum("qbas,qca,q->qbcs", dp_pt, geo.fmu_inv, geo.jdet)
    dp = np.einsum("q,qijs->ijs", h, dy_pt) / v
    dq = 0.5 * (
        np.einsum("q,qjis,qk->ijks", hj, dp_pt, x)
        + np.einsum("q,qi,qjks->ijks", hj, x, dp_pt)
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


def _plan_fingerprint(specs, pod_tols, cubature_cfg):
    blob = {
        "samples": [
            {
                "sample": s.sample,
                "fbar": np.asarray(s.fbar).ravel().tolist(),
                "g6": np.asarray(s.g6).tolist(),
                "zeta": s.zeta,
                "n_steps": s.n_steps,
            }
            for s in specs
        ],
        "pod": pod_tols,
        "cubature": cubature_cfg,
    }
    return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()


def train_artifact(mesh, mat, specs=None, store: SnapshotSet = None, *,
                   mesh_name="", pod_tol_w=1e-5, pod_tol_y=5e-3, pod_tol_yh=5e-3,
                   ranks=(None, None, None),
                   c=(10.0, 1.6, 1.1), eps=(1e-4,) * 4, k_max=None,
                   progress=None) -> RomArtifact:
    """Run the offline pipeline: snapshots, bases, point selection, packaging.

    A prebuilt snapshot store skips collection (the specs then only feed
    the provenance fingerprint). Entries of ``ranks`` (w, y, yh order)
    override the corresponding energy tolerance with an explicit mode count.
    """
    if specs is None:
        specs = draw_samples()
    if store is None:
        store = collect_samples(mesh, mat, specs, mesh_name=mesh_name,
                                progress=progress)
    w_basis = pod_basis(store.w, pod_tol_w, rank=ranks[0])
    y_basis = pod_basis(store.y.reshape(store.n_records, -1), pod_tol_y,
                        rank=ranks[1])
    yh_basis = pod_basis(store.yh.reshape(store.n_records, -1), pod_tol_yh,
                         rank=ranks[2])
    system = build_system(mesh, w_basis, y_basis, yh_basis, c=c)
    scheme = select_points(system, eps=eps, k_max=k_max)
    gradv = mode_point_gradients(mesh, w_basis.modes)[scheme.indices]
    meta = {
        "mesh_name": mesh_name or store.mesh_name,
        "n_snapshots": store.n_records,
        "pod_tols": {"w": pod_tol_w, "y": pod_tol_y, "yh": pod_tol_yh},
        "mode_counts": {"w": w_basis.n_modes, "y": y_basis.n_modes,
                        "yh": yh_basis.n_modes},
        "plan": _plan_fingerprint(
            specs,
            {"w": pod_tol_w, "y": pod_tol_y, "yh": pod_tol_yh,
             "ranks": [None if r is None else int(r) for r in ranks]},
            {"c": list(c), "eps": list(eps), "k_max": k_max},
        ),
        "cubature_converged": bool(scheme.converged),
    }
    return RomArtifact(
        mesh=mesh,
        material=mat,
        v_w=w_basis.modes,
        gradv=gradv,
        scheme=scheme,
        sigma={"w": w_basis.sigma_all, "y": y_basis.sigma_all,
               "yh": yh_basis.sigma_all},
        meta=meta,
    )


def save_artifact(path, artifact: RomArtifact):
    """Write a single file: one JSON header line, then raw float64 blocks.

    The header carries everything JSON-friendly (mesh, scheme, metadata) plus
    the shape and sha256 of each binary block; the blocks follow in header
    order as little-endian float64.  Keys are sorted so the same artifact
    always produces the same bytes.
    """
    blocks = [
        (name, np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for name, arr in (("v_w", artifact.v_w), ("gradv", artifact.gradv))
    ]
    shapes = {"v_w": list(artifact.v_w.shape), "gradv": list(artifact.gradv.shape)}
    header = {
        "format": _FORMAT,
        "material": {"c1": artifact.material.c1, "c2": artifact.material.c2,
                     "k": artifact.material.k},
        "mesh": {
            "nodes": artifact.mesh.nodes.tolist(),
            "elements": artifact.mesh.elements.tolist(),
            "tags": {k: np.asarray(v).tolist() for k, v in artifact.mesh.tags.items()},
            "zeta_parent": artifact.mesh.zeta_parent,
        },
        "scheme": {
            "indices": artifact.scheme.indices.tolist(),
            "weights": artifact.scheme.weights.tolist(),
            "history": artifact.scheme.history.tolist(),
            "converged": bool(artifact.scheme.converged),
            "config": artifact.scheme.config,
        },
        "sigma": {k: np.asarray(v).tolist() for k, v in artifact.sigma.items()},
        "meta": artifact.meta,
        "blocks": [
            {"name": name, "shape": shapes[name], "bytes": len(raw),
             "sha256": hashlib.sha256(raw).hexdigest()}
            for name, raw in blocks
        ],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for _, raw in blocks:
            fh.write(raw)


def load_artifact(path) -> RomArtifact:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            manifest = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ValueError(f"not a reduced-model artifact: {path}")
        if not isinstance(manifest, dict) or manifest.get("format") != _FORMAT:
            raise ValueError(f"not a reduced-model artifact: {path}")
        arrays = {}
        for entry in manifest["blocks"]:
            raw = fh.read(entry["bytes"])
            if (len(raw) != entry["bytes"]
                    or hashlib.sha256(raw).hexdigest() != entry["sha256"]):
                raise ValueError(f"corrupted artifact block {entry['name']!r}: {path}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"])
    mesh = mesh_from_arrays(
        manifest["mesh"]["nodes"], manifest["mesh"]["elements"],
        manifest["mesh"]["tags"], manifest["mesh"]["zeta_parent"],
    )
    sch = manifest["scheme"]
    config = dict(sch["config"])
    for key in ("c", "eps"):
        if key in config and isinstance(config[key], list):
            config[key] = tuple(config[key])
    scheme = CubatureScheme(
        indices=np.asarray(sch["indices"], dtype=np.int64),
        weights=np.asarray(sch["weights"], dtype=float),
        history=np.asarray(sch["history"], dtype=float).reshape(-1, 6),
        converged=bool(sch["converged"]),
        config=config,
    )
    m = manifest["material"]
    return RomArtifact(
        mesh=mesh,
        material=Material(c1=m["c1"], c2=m["c2"], k=m["k"]),
        v_w=arrays["v_w"],
        gradv=arrays["gradv"],
        scheme=scheme,
        sigma={k: np.asarray(v) for k, v in manifest["sigma"].items()},
        meta=manifest["meta"],
    )
