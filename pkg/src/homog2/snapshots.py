"""Training-data generation: load paths, cell solves, snapshot storage.

A sample is a terminal macroscopic loading (Fbar, six gradient components,
zeta) reached through equidistant load steps from the unloaded state; the
unloaded step itself carries no information and is not recorded. At every
converged step three fields are kept:

- the fluctuation vector w (kernel-projected),
- the pulled-back stress integrand Y at the quadrature points,
- the higher-order integrand at the quadrature points.

Stores are a directory holding ``manifest.json`` plus raw little-endian
float64 arrays, written in sample-major step-minor order.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .geometry import Mesh, fixture_path, load_mesh, solve_auxiliary_transform
from .material import Material
from .micro import MacroInput, NewtonError, build_constraints, point_fields, solve_micro

__all__ = [
    "TRAIN_ZETAS",
    "LoadBounds",
    "SampleSpec",
    "draw_samples",
    "sample_path",
    "SnapshotSet",
    "collect_paths",
    "collect_samples",
    "save_store",
    "load_store",
]

TRAIN_ZETAS = (-0.05, -0.025, 0.0, 0.025, 0.05)

_FORMAT = "homog2-snapshots-1"


@dataclass(frozen=True)
class LoadBounds:
    """Uniform sampling box for terminal loadings.

    Diagonal deformation-gradient entries are drawn as 1 + u with
    u in [stretch_lo, stretch_hi]; off-diagonal entries in [-shear, shear];
    each canonical gradient component in [-gradient, gradient] (1/mm).
    """

    stretch_lo: float = -0.10
    stretch_hi: float = 0.02
    shear: float = 0.10
    gradient: float = 0.05

    def draw(self, rng):
        fbar = np.eye(2)
        fbar[0, 0] += rng.uniform(self.stretch_lo, self.stretch_hi)
        fbar[1, 1] += rng.uniform(self.stretch_lo, self.stretch_hi)
        fbar[0, 1] = rng.uniform(-self.shear, self.shear)
        fbar[1, 0] = rng.uniform(-self.shear, self.shear)
        g6 = rng.uniform(-self.gradient, self.gradient, size=6)
        return fbar, g6


@dataclass(frozen=True)
class SampleSpec:
    """Terminal loading of one training trajectory."""

    sample: int
    fbar: np.ndarray
    g6: np.ndarray
    zeta: float
    n_steps: int = 20


def draw_samples(n_per_zeta=20, zetas=TRAIN_ZETAS, seed=7, bounds=None, n_steps=20):
    """Uniformly sampled terminal loadings, n_per_zeta for each shape value."""
    bounds = LoadBounds() if bounds is None else bounds
    rng = np.random.default_rng(seed)
    specs = []
    k = 0
    for zeta in zetas:
        for _ in range(n_per_zeta):
            fbar, g6 = bounds.draw(rng)
            specs.append(SampleSpec(k, fbar, g6, float(zeta), n_steps))
            k += 1
    return specs


def sample_path(spec: SampleSpec):
    """The equidistant load path of a sample, unloaded state excluded."""
    terminal = MacroInput(spec.fbar, spec.g6, spec.zeta)
    start = MacroInput.identity(spec.zeta)
    return [start.blend(terminal, t) for t in np.linspace(0.0, 1.0, spec.n_steps + 1)[1:]]


@dataclass
class SnapshotSet:
    """In-memory snapshot collection over one mesh.

    w:  (R, n_dofs)         fluctuation vectors
    y:  (R, Qhat, 2, 2)     pulled-back stress integrand
    yh: (R, Qhat, 2, 2, 2)  higher-order integrand
    """

    mesh_name: str
    material: Material
    w: np.ndarray
    y: np.ndarray
    yh: np.ndarray
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_records(self):
        return self.w.shape[0]

    def zetas(self):
        return sorted({rec["zeta"] for rec in self.records})


def collect_paths(mesh: Mesh, mat: Material, paths, path_meta=None, mesh_name="",
                  tol=None, max_cuts=6, progress=None):
    """Solve the cell problem along warm-started load paths, keeping fields.

    ``paths`` is a sequence of MacroInput lists; within a path every state
    shares one shape parameter and the previous fluctuation seeds the next
    solve. Returns a SnapshotSet in path-major, step-minor order.
    """
    ed = mesh.data()
    nq = ed.n_points
    tmaps, conss = {}, {}
    ws, ys, yhs, records = [], [], [], []
    for ip, path in enumerate(paths):
        zeta = path[0].zeta
        if any(p.zeta != zeta for p in path):
            raise ValueError(f"path {ip} mixes shape parameters")
        if zeta not in tmaps:
            tmaps[zeta] = solve_auxiliary_transform(mesh, zeta)
            conss[zeta] = build_constraints(mesh, tmaps[zeta])
        tmap, cons = tmaps[zeta], conss[zeta]
        w_prev, inp_prev = None, None
        for istep, inp in enumerate(path):
            try:
                sol = solve_micro(
                    mesh, tmap, mat, cons, inp,
                    w0=w_prev, from_input=inp_prev,
                    tol=tol, max_cuts=max_cuts, keep_saddle=False,
                )
            except NewtonError:
                if w_prev is None:
                    raise
                # warm continuation can hit a limit point of its branch
                # (snap-back); a cold restart reaches the target directly
                sol = solve_micro(
                    mesh, tmap, mat, cons, inp,
                    tol=tol, max_cuts=max_cuts + 2, keep_saddle=False,
                )
            y, yh = point_fields(mesh, tmap, mat, inp, sol.w)
            ws.append(sol.w)
            ys.append(y.reshape(nq, 2, 2))
            yhs.append(yh.reshape(nq, 2, 2, 2))
            rec = {
                "path": ip,
                "step": istep + 1,
                "zeta": float(zeta),
                "fbar": inp.fbar.tolist(),
                "g6": inp.g6.tolist(),
                "iterations": sol.iterations,
                "step_cuts": sol.step_cuts,
                "residual": sol.residual,
            }
            if path_meta is not None:
                rec.update(path_meta[ip])
            records.append(rec)
            w_prev, inp_prev = sol.w, inp
        if progress is not None:
            progress(ip + 1, len(paths))
    return SnapshotSet(
        mesh_name=mesh_name,
        material=mat,
        w=np.array(ws),
        y=np.array(ys),
        yh=np.array(yhs),
        records=records,
    )


def collect_samples(mesh, mat, specs, mesh_name="", tol=None, progress=None):
    """Snapshot generation for drawn samples (sample-major record order)."""
    paths = [sample_path(s) for s in specs]
    meta = [{"sample": s.sample, "n_steps": s.n_steps} for s in specs]
    out = collect_paths(
        mesh, mat, paths, path_meta=meta, mesh_name=mesh_name, tol=tol, progress=progress
    )
    return out


def save_store(path, snaps: SnapshotSet):
    """Write manifest.json plus raw little-endian float64 arrays."""
    os.makedirs(path, exist_ok=True)
    arrays = {}
    for name, arr in (("w", snaps.w), ("y", snaps.y), ("yh", snaps.yh)):
        fname = f"{name}.f64"
        arr.astype("<f8").tofile(os.path.join(path, fname))
        arrays[name] = {"file": fname, "shape": list(arr.shape)}
    manifest = {
        "format": _FORMAT,
        "mesh": snaps.mesh_name,
        "material": {"c1": snaps.material.c1, "c2": snaps.material.c2,
                     "k": snaps.material.k},
        "arrays": arrays,
        "records": snaps.records,
        "meta": snaps.meta,
    }
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)


def load_store(path):
    """Read a snapshot store written by save_store."""
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != _FORMAT:
        raise ValueError(f"not a snapshot store: {path}")
    out = {}
    for name, spec in manifest["arrays"].items():
        arr = np.fromfile(os.path.join(path, spec["file"]), dtype="<f8")
        out[name] = arr.reshape(spec["shape"])
    m = manifest["material"]
    return SnapshotSet(
        mesh_name=manifest["mesh"],
        material=Material(c1=m["c1"], c2=m["c2"], k=m["k"]),
        w=out["w"],
        y=out["y"],
        yh=out["yh"],
        records=manifest["records"],
        meta=manifest.get("meta", {}),
    )
