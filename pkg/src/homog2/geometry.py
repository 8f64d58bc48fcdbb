"""RVE geometry: parameterized hole splines, meshes, transformation maps.

The cell occupies [-1, 1]^2 (mm) and contains four holes centered at
(+-0.5, +-0.5). Each hole boundary is a closed uniform cubic B-spline with
eight control points; a single shape parameter ``zeta`` morphs all four
holes identically. Hole index 0 is the top-right hole; holes 1, 2, 3 are
its copies shifted to top-left, bottom-left, bottom-right.

Meshes are generated once for the parent value of ``zeta`` (see
tools/make_meshes.py) and morphed to other values through an auxiliary
linear-elastic boundary-value problem on the parent mesh: hole-boundary
nodes are displaced onto the target spline at their stored curve parameter,
outer-boundary nodes stay put, and the interior follows elastically. The
resulting displacement field defines the geometry map (F_mu, det F_mu)
evaluated at the volume quadrature points; all downstream integrals are
pulled back onto the fixed parent mesh with it.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import scipy.sparse.linalg as spla

from . import fem

__all__ = [
    "HOLE_TAGS",
    "ZETA_PARENT",
    "control_points",
    "HoleSpline",
    "Mesh",
    "load_mesh",
    "mesh_from_arrays",
    "fixture_path",
    "TransformationMap",
    "solve_auxiliary_transform",
    "morph_mesh",
    "DegenerateTransformError",
]

ZETA_PARENT = 0.025
HOLE_TAGS = ("hole_0", "hole_1", "hole_2", "hole_3")
_HOLE_SHIFTS = {"hole_0": (0.0, 0.0), "hole_1": (-1.0, 0.0), "hole_2": (-1.0, -1.0), "hole_3": (0.0, -1.0)}
OUTER_TAGS = ("bottom", "right", "top", "left", "corners")

# auxiliary morphing solid: linear isotropic plane strain, E = 1, nu = 0.25
_AUX_LAMBDA = 0.4
_AUX_MU = 0.4

MIN_JACOBIAN = 0.05  # validity floor for det F_mu over all quadrature points


class DegenerateTransformError(ValueError):
    """The requested shape parameter collapses the geometry map."""


def control_points(zeta, hole=0):
    """Control polygon of one hole boundary, shape (8, 2).

    The polygon is symmetric under point reflection through the hole
    center, which the morphing and constraint machinery rely on.
    """
    z = float(zeta)
    pts = np.array(
        [
            [0.05 + z, 0.5],
            [0.125 - z, 0.125 - z],
            [0.5, 0.05 + z],
            [0.875 + z, 0.125 - z],
            [0.95 - z, 0.5],
            [0.875 + z, 0.875 + z],
            [0.5, 0.95 - z],
            [0.125 - z, 0.875 + z],
        ]
    )
    tag = HOLE_TAGS[hole] if isinstance(hole, int) else hole
    return pts + np.asarray(_HOLE_SHIFTS[tag])


class HoleSpline:
    """Closed uniform cubic B-spline on eight control points, period t in [0, 1)."""

    def __init__(self, points):
        self.points = np.asarray(points, dtype=float)
        if self.points.shape != (8, 2):
            raise ValueError("expected (8, 2) control points")

    def _segments(self, t):
        u = (np.asarray(t, dtype=float) % 1.0) * 8.0
        s = np.floor(u).astype(int) % 8
        tau = u - np.floor(u)
        idx = np.stack([(s - 1) % 8, s, (s + 1) % 8, (s + 2) % 8], axis=-1)
        return self.points[idx], tau  # (..., 4, 2), (...)

    def eval(self, t):
        p, tau = self._segments(t)
        tau = tau[..., None]
        b = np.concatenate(
            [
                (1.0 - tau) ** 3 / 6.0,
                (3.0 * tau**3 - 6.0 * tau**2 + 4.0) / 6.0,
                (-3.0 * tau**3 + 3.0 * tau**2 + 3.0 * tau + 1.0) / 6.0,
                tau**3 / 6.0,
            ],
            axis=-1,
        )
        return np.einsum("...k,...kx->...x", b, p)

    def deriv(self, t):
        """First and second derivatives with respect to t (not arc length)."""
        p, tau = self._segments(t)
        tau = tau[..., None]
        db = np.concatenate(
            [
                -0.5 * (1.0 - tau) ** 2,
                (3.0 * tau**2 - 4.0 * tau) / 2.0,
                (-3.0 * tau**2 + 2.0 * tau + 1.0) / 2.0,
                0.5 * tau**2,
            ],
            axis=-1,
        )
        d2b = np.concatenate([1.0 - tau, 3.0 * tau - 2.0, 1.0 - 3.0 * tau, tau], axis=-1)
        d1 = 8.0 * np.einsum("...k,...kx->...x", db, p)
        d2 = 64.0 * np.einsum("...k,...kx->...x", d2b, p)
        return d1, d2

    def project(self, x, n_seed=2048):
        """Curve parameters of the closest points to x (shape (..., 2)).

        Dense seeding followed by a few Newton steps on the stationarity
        condition (C(t) - x) . C'(t) = 0.
        """
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        ts = np.arange(n_seed) / n_seed
        samples = self.eval(ts)
        d2 = ((flat[:, None, :] - samples[None, :, :]) ** 2).sum(axis=2)
        t = ts[np.argmin(d2, axis=1)]
        for _ in range(12):
            c = self.eval(t)
            c1, c2 = self.deriv(t)
            g = np.einsum("nx,nx->n", c - flat, c1)
            h = np.einsum("nx,nx->n", c1, c1) + np.einsum("nx,nx->n", c - flat, c2)
            h = np.where(np.abs(h) < 1e-30, 1.0, h)
            step = np.clip(g / h, -0.5 / n_seed * 8, 0.5 / n_seed * 8)
            t = (t - step) % 1.0
        return t.reshape(x.shape[:-1])

    def arclength_params(self, n, dense=8192):
        """n parameters equally spaced in arc length, starting at t = 0."""
        ts = np.arange(dense + 1) / dense
        pts = self.eval(ts)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        return np.interp(np.arange(n) / n * s[-1], s, ts)


# ---------------------------------------------------------------------------
# mesh container and ingestion
# ---------------------------------------------------------------------------


@dataclass
class Mesh:
    """TRI6 mesh of the parent cell with boundary bookkeeping.

    ``hole_t[tag]`` stores the spline parameter of every node in tag order;
    ``pairs_lr`` / ``pairs_bt`` give (minus side, plus side) node pairs of
    the periodic outer boundary, corners excluded.
    """

    nodes: np.ndarray
    elements: np.ndarray
    tags: dict
    zeta_parent: float = ZETA_PARENT
    hole_t: dict = field(default_factory=dict)
    pairs_lr: np.ndarray | None = None
    pairs_bt: np.ndarray | None = None
    _data: fem.ElementData | None = field(default=None, repr=False)
    _aux: tuple | None = field(default=None, repr=False)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_dofs(self):
        return 2 * self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    def data(self) -> fem.ElementData:
        if self._data is None:
            self._data = fem.element_data(self.nodes, self.elements)
        return self._data

    def edofs(self):
        return fem.element_dofs(self.elements)

    def outer_nodes(self):
        return np.unique(np.concatenate([self.tags[t] for t in OUTER_TAGS if t in self.tags]))


def _match_pairs(nodes, ids_a, ids_b, axis, what, tol=1e-8):
    """Pair ids_a with ids_b by the coordinate along ``axis``."""
    a = ids_a[np.argsort(nodes[ids_a, axis])]
    b = ids_b[np.argsort(nodes[ids_b, axis])]
    if a.size != b.size:
        raise ValueError(f"{what}: sides carry {a.size} vs {b.size} nodes")
    gap = np.abs(nodes[a, axis] - nodes[b, axis])
    if gap.size and gap.max() > tol:
        i = int(np.argmax(gap))
        raise ValueError(
            f"{what}: node {int(a[i])} at {nodes[a[i]]} has no mate within {tol} "
            f"(closest candidate {int(b[i])} at {nodes[b[i]]})"
        )
    return np.stack([a, b], axis=1)


def mesh_from_arrays(nodes, elements, tags, zeta_parent=ZETA_PARENT):
    """Build and validate a Mesh from raw arrays.

    Checks element Jacobians, tag sanity (outer nodes on the named faces,
    exact periodic pairing, every boundary node accounted for) and assigns
    hole-boundary curve parameters by projection onto the parent splines.
    """
    nodes = np.ascontiguousarray(nodes, dtype=float)
    elements = np.ascontiguousarray(elements, dtype=np.int64)
    if nodes.ndim != 2 or nodes.shape[1] != 2:
        raise ValueError(f"nodes must be (n, 2), got {nodes.shape}")
    if elements.ndim != 2 or elements.shape[1] != 6:
        raise ValueError(f"elements must be (E, 6), got {elements.shape}")
    if elements.min(initial=0) < 0 or elements.max(initial=-1) >= nodes.shape[0]:
        raise ValueError("element connectivity references nodes out of range")
    tags = {k: np.asarray(v, dtype=np.int64) for k, v in tags.items()}
    mesh = Mesh(nodes=nodes, elements=elements, tags=tags, zeta_parent=float(zeta_parent))
    mesh.data()  # raises on tangled elements

    tol = 1e-8
    if all(t in tags for t in OUTER_TAGS):
        for tag, axis, val in (
            ("left", 0, -1.0), ("right", 0, 1.0), ("bottom", 1, -1.0), ("top", 1, 1.0),
        ):
            ids = tags[tag]
            off = np.abs(nodes[ids, axis] - val)
            if ids.size and off.max() > tol:
                bad = int(ids[np.argmax(off)])
                raise ValueError(f"tag '{tag}': node {bad} at {nodes[bad]} is not on that face")
        corners = tags["corners"]
        if corners.size != 4:
            raise ValueError(f"expected 4 corner nodes, got {corners.size}")
        if np.abs(np.abs(nodes[corners]) - 1.0).max() > tol:
            raise ValueError("corner nodes are not at the cell corners")
        mesh.pairs_lr = _match_pairs(nodes, tags["left"], tags["right"], 1, "left/right pairing")
        mesh.pairs_bt = _match_pairs(nodes, tags["bottom"], tags["top"], 0, "bottom/top pairing")

        # every boundary node must be tagged (outer face or hole ring)
        tagged = set()
        for v in tags.values():
            tagged.update(int(i) for i in v)
        for a, b, m in fem.boundary_edges(elements):
            for n in (a, b, m):
                if n not in tagged:
                    raise ValueError(f"boundary node {n} at {nodes[n]} carries no tag")

    for tag in HOLE_TAGS:
        if tag not in tags:
            continue
        spl = HoleSpline(control_points(zeta_parent, tag))
        ids = tags[tag]
        t = spl.project(nodes[ids])
        gap = np.linalg.norm(spl.eval(t) - nodes[ids], axis=1)
        if gap.size and gap.max() > 1e-7:
            bad = int(ids[np.argmax(gap)])
            raise ValueError(
                f"tag '{tag}': node {bad} lies {gap.max():.2e} off the parent spline"
            )
        mesh.hole_t[tag] = t
    return mesh


def load_mesh(path, zeta_parent=ZETA_PARENT):
    """Read a mesh JSON file ({"nodes", "elements", "tags"}) and validate it."""
    with open(path) as f:
        raw = json.load(f)
    missing = {"nodes", "elements", "tags"} - raw.keys()
    if missing:
        raise ValueError(f"mesh file {path} lacks keys {sorted(missing)}")
    return mesh_from_arrays(raw["nodes"], raw["elements"], raw["tags"], zeta_parent)


def fixture_path(name):
    """Locate a packaged mesh fixture, honoring $HOMOG2_FIXTURES."""
    override = os.environ.get("HOMOG2_FIXTURES")
    if override:
        p = os.path.join(override, name)
        if os.path.exists(p):
            return p
    return str(resources.files("homog2").joinpath("fixtures", name))


# ---------------------------------------------------------------------------
# auxiliary transform
# ---------------------------------------------------------------------------


@dataclass
class TransformationMap:
    """Geometry map data at the parent quadrature points.

    fmu, fmu_inv: (E, Q, 2, 2); jdet: (E, Q); xmu: (E, Q, 2) mapped point
    positions; d: (n_nodes, 2) nodal morph displacement. volume is the
    mapped cell volume (integral of jdet), parent_volume the flat one.
    """

    zeta: float
    d: np.ndarray
    fmu: np.ndarray
    fmu_inv: np.ndarray
    jdet: np.ndarray
    xmu: np.ndarray
    volume: float
    parent_volume: float

    def nodal_volume_weights(self, mesh: Mesh):
        """w_n = integral of N_n jdet over the cell (rigid-mode row weights)."""
        ed = mesh.data()
        wloc = np.einsum("eq,qn->en", ed.w * self.jdet, ed.shape)
        return np.bincount(mesh.elements.ravel(), weights=wloc.ravel(), minlength=mesh.n_nodes)


def _aux_operator(mesh: Mesh):
    """Factorized Dirichlet operator of the morphing solid, cached per mesh."""
    if mesh._aux is not None:
        return mesh._aux
    ed = mesh.data()
    g0, w = ed.g0, ed.w
    lam, mu = _AUX_LAMBDA, _AUX_MU
    gg = np.einsum("eq,eqnb,eqmb->enm", w, g0, g0)
    k_loc = lam * np.einsum("eq,eqna,eqmc->enamc", w, g0, g0)
    k_loc += mu * np.einsum("eq,eqnc,eqma->enamc", w, g0, g0)
    k_loc += mu * np.einsum("enm,ac->enamc", gg, np.eye(2))
    k = fem.assemble_matrix(k_loc.reshape(-1, 12, 12), mesh.edofs(), mesh.n_dofs)

    hole_ids = np.concatenate([mesh.tags[t] for t in HOLE_TAGS])
    outer_ids = mesh.outer_nodes()
    fixed = np.concatenate([np.stack([2 * ids, 2 * ids + 1], axis=1).ravel()
                            for ids in (hole_ids, outer_ids)])
    fixed = np.unique(fixed)
    free = np.setdiff1d(np.arange(mesh.n_dofs), fixed)
    k_free = spla.splu(k[np.ix_(free, free)].tocsc())
    mesh._aux = (k_free, k[np.ix_(free, fixed)].tocsc(), free, fixed, hole_ids)
    return mesh._aux


def solve_auxiliary_transform(mesh: Mesh, zeta) -> TransformationMap:
    """Morph displacement and geometry map for a target shape parameter.

    Hole nodes are displaced onto the target splines at their stored curve
    parameters, the outer boundary is clamped, and the interior follows the
    auxiliary solid. Raises DegenerateTransformError when det F_mu drops to
    or below the validity floor anywhere.
    """
    zeta = float(zeta)
    k_free, k_fp, free, fixed, _ = _aux_operator(mesh)

    d = np.zeros((mesh.n_nodes, 2))
    for tag in HOLE_TAGS:
        ids = mesh.tags[tag]
        target = HoleSpline(control_points(zeta, tag))
        d[ids] = target.eval(mesh.hole_t[tag]) - mesh.nodes[ids]
    dv = d.reshape(-1)
    dv[free] = -k_free.solve(k_fp @ dv[fixed])
    d = dv.reshape(-1, 2)

    ed = mesh.data()
    de = d[mesh.elements]  # (E, 6, 2)
    fmu = np.einsum("eni,eqnj->eqij", de, ed.g0)
    fmu[..., 0, 0] += 1.0
    fmu[..., 1, 1] += 1.0
    jdet = fmu[..., 0, 0] * fmu[..., 1, 1] - fmu[..., 0, 1] * fmu[..., 1, 0]
    if np.min(jdet) <= MIN_JACOBIAN:
        raise DegenerateTransformError(
            f"zeta={zeta:+.4f}: min det F_mu = {jdet.min():.4f} <= {MIN_JACOBIAN}"
        )
    fmu_inv = np.empty_like(fmu)
    fmu_inv[..., 0, 0] = fmu[..., 1, 1]
    fmu_inv[..., 0, 1] = -fmu[..., 0, 1]
    fmu_inv[..., 1, 0] = -fmu[..., 1, 0]
    fmu_inv[..., 1, 1] = fmu[..., 0, 0]
    fmu_inv /= jdet[..., None, None]
    xmu = ed.xq + np.einsum("qn,eni->eqi", ed.shape, de)
    return TransformationMap(
        zeta=zeta,
        d=d,
        fmu=fmu,
        fmu_inv=fmu_inv,
        jdet=jdet,
        xmu=xmu,
        volume=float(np.sum(ed.w * jdet)),
        parent_volume=float(np.sum(ed.w)),
    )


def morph_mesh(mesh: Mesh, tmap: TransformationMap) -> Mesh:
    """Apply the morph to the node coordinates, re-validating as a new parent."""
    return mesh_from_arrays(
        mesh.nodes + tmap.d, mesh.elements, mesh.tags, zeta_parent=tmap.zeta
    )
