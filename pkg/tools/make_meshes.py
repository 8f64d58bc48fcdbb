#!/usr/bin/env python3
"""Generate the TRI6 cell meshes shipped as fixtures.

Force-equilibrium (distmesh-style) triangulation of the four-hole cell at
the parent shape parameter. Only the upper half (two holes) is meshed; the
lower half is its exact point reflection through the origin, merged along
the seam y = 0, so nodes AND connectivity are exactly mirror-symmetric
(p <-> -p), which downstream identities rely on. Outer-boundary nodes sit
on a shared antisymmetric grid so periodic mates carry identical
coordinates. TRI6 mid nodes of hole edges are placed on the spline.

Usage: python3 tools/make_meshes.py [--only coarse|fine] [--outdir DIR]
"""

import argparse
import json
import os
import sys

import numpy as np
from matplotlib.path import Path as MplPath
from scipy.spatial import Delaunay, cKDTree

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
from homog2.geometry import ZETA_PARENT, HoleSpline, control_points  # noqa: E402


# ---------------------------------------------------------------- geometry


class HalfDomain:
    """Signed distance to ([-1,1] x [0,1]) minus holes 0, 1 (negative inside)."""

    def __init__(self, zeta, n_dense=4096):
        self.splines = [HoleSpline(control_points(zeta, t)) for t in ("hole_0", "hole_1")]
        ts = np.arange(n_dense) / n_dense
        self.trees, self.paths = [], []
        for s in self.splines:
            pts = s.eval(ts)
            self.trees.append(cKDTree(pts))
            self.paths.append(MplPath(pts))

    def dist(self, p):
        p = np.atleast_2d(p)
        d = np.maximum(np.abs(p[:, 0]) - 1.0, np.abs(p[:, 1] - 0.5) - 0.5)
        for tree, path in zip(self.trees, self.paths):
            dh = tree.query(p)[0]
            dh = np.where(path.contains_points(p), -dh, dh)
            d = np.maximum(d, -dh)
        return d


def outer_grid(n):
    """Exactly antisymmetric grid with n intervals on [-1, 1]."""
    g = -1.0 + 2.0 * np.arange(n + 1) / n
    return 0.5 * (g - g[::-1])


# ---------------------------------------------------------------- distmesh


def distmesh(domain, fixed, h, it_max=500):
    geps = 0.001 * h
    deps = np.sqrt(np.finfo(float).eps) * h

    dy = h * np.sqrt(3) / 2.0
    rows = []
    jmax = int(np.floor(1.0 / dy))
    imax = int(np.floor(1.0 / h)) + 1
    for j in range(0, jmax + 1):
        off = 0.5 * h if (j % 2) else 0.0
        xs = off + h * np.arange(-imax, imax + 1)
        xs = xs[np.abs(xs) <= 1.0]
        rows.append(np.column_stack([xs, np.full(xs.size, j * dy)]))
    pts = np.vstack(rows)
    pts = pts[domain.dist(pts) < -0.55 * h]
    pts = pts[cKDTree(fixed).query(pts)[0] > 0.7 * h]
    pts = np.vstack([fixed, pts])
    n_fix = fixed.shape[0]

    p_old = np.full_like(pts, np.inf)
    bars = None
    for _ in range(it_max):
        if np.max(np.linalg.norm(pts - p_old, axis=1)) > 0.1 * h:
            p_old = pts.copy()
            tri = Delaunay(pts).simplices
            cent = pts[tri].mean(axis=1)
            tri = tri[domain.dist(cent) < -geps]
            bars = np.unique(
                np.sort(np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1),
                axis=0,
            )
        vec = pts[bars[:, 0]] - pts[bars[:, 1]]
        ell = np.linalg.norm(vec, axis=1)
        ell0 = 1.2 * np.sqrt((ell**2).sum() / len(ell))
        f = np.maximum(ell0 - ell, 0.0) / ell
        fv = f[:, None] * vec
        force = np.zeros_like(pts)
        np.add.at(force, bars[:, 0], fv)
        np.add.at(force, bars[:, 1], -fv)
        force[:n_fix] = 0.0
        pts = pts + 0.2 * force

        d = domain.dist(pts)
        out = d > 0.0
        if np.any(out):
            px = pts[out]
            dgx = (domain.dist(px + [deps, 0.0]) - d[out]) / deps
            dgy = (domain.dist(px + [0.0, deps]) - d[out]) / deps
            g2 = dgx**2 + dgy**2
            pts[out] -= (d[out] / g2)[:, None] * np.column_stack([dgx, dgy])

        interior = d < -geps
        interior[:n_fix] = False
        move = np.linalg.norm(0.2 * force[interior], axis=1)
        if move.size == 0 or move.max() < 0.001 * h:
            break

    tri = Delaunay(pts).simplices
    cent = pts[tri].mean(axis=1)
    tri = tri[domain.dist(cent) < -geps]
    return pts, tri


def fix_orientation(pts, tri):
    v = pts[tri]
    det = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (
        v[:, 1, 1] - v[:, 0, 1]
    ) * (v[:, 2, 0] - v[:, 0, 0])
    tri[det < 0] = tri[det < 0][:, [0, 2, 1]]
    return tri


def triangle_quality(pts, tri):
    v = pts[tri]
    a = np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
    b = np.linalg.norm(v[:, 2] - v[:, 1], axis=1)
    c = np.linalg.norm(v[:, 0] - v[:, 2], axis=1)
    s = 0.5 * (a + b + c)
    area = np.sqrt(np.maximum(s * (s - a) * (s - b) * (s - c), 0.0))
    return 4.0 * np.sqrt(3.0) * area / (a**2 + b**2 + c**2)  # 1 = equilateral


# ---------------------------------------------------------------- half -> full


def mirror_merge(pts, tri, seam_ids):
    """Union of the half mesh and its point reflection through the origin.

    Seam nodes (y = 0) are shared; their mirror is the seam node at -x,
    which exists with identical floats because the seam grid is exactly
    antisymmetric. Returns (nodes, triangles, mirror_map).
    """
    seam_lookup = {pts[i, 0]: int(i) for i in seam_ids}
    seam_set = set(int(i) for i in seam_ids)
    n = len(pts)
    mmap = np.empty(n, dtype=np.int64)
    new_pts = [pts]
    next_id = n
    lower_ids = []
    for i in range(n):
        if i in seam_set:
            mate = seam_lookup.get(-pts[i, 0])
            if mate is None:
                raise RuntimeError(f"seam node {i} at x={pts[i,0]} has no -x mate")
            mmap[i] = mate
        else:
            mmap[i] = next_id
            lower_ids.append(i)
            next_id += 1
    if lower_ids:
        new_pts.append(-pts[lower_ids])
    nodes = np.vstack(new_pts)

    tri_low = mmap[tri]
    full_tri = np.vstack([tri, tri_low])
    # full mirror map (involution over the merged set)
    full_map = np.empty(len(nodes), dtype=np.int64)
    full_map[:n] = mmap
    full_map[mmap[lower_ids]] = lower_ids
    return nodes, full_tri, full_map


# ---------------------------------------------------------------- TRI6


def to_tri6(pts, tri, ring_info, splines):
    """Insert mid-side nodes; adjacent hole-ring edges get spline mid points."""
    hole_of, t_of, pos_of, nring = {}, {}, {}, {}
    for tag, (ids, ts) in ring_info.items():
        nring[tag] = len(ids)
        for k, (gid, t) in enumerate(zip(ids, ts)):
            hole_of[gid], t_of[gid], pos_of[gid] = tag, t, k

    nodes = list(pts)
    mid_cache = {}

    def mid_node(a, b):
        key = (min(a, b), max(a, b))
        if key in mid_cache:
            return mid_cache[key]
        tag = hole_of.get(a)
        if tag is not None and hole_of.get(b) == tag and (
            abs(pos_of[a] - pos_of[b]) in (1, nring[tag] - 1)
        ):
            ta, tb = t_of[a], t_of[b]
            dt = (tb - ta) % 1.0
            tm = (ta + dt / 2.0) % 1.0 if dt < 0.5 else (tb + ((ta - tb) % 1.0) / 2.0) % 1.0
            p = splines[tag].eval(tm)
        else:
            p = 0.5 * (pts[a] + pts[b])
        idx = len(nodes)
        nodes.append(np.asarray(p, float).ravel())
        mid_cache[key] = idx
        return idx

    elems = np.empty((tri.shape[0], 6), dtype=np.int64)
    elems[:, :3] = tri
    for e, (i, j, k) in enumerate(tri):
        elems[e, 3] = mid_node(i, j)
        elems[e, 4] = mid_node(j, k)
        elems[e, 5] = mid_node(k, i)
    return np.array(nodes), elems, mid_cache, hole_of, pos_of, nring


def symmetrize_all(nodes, tol=1e-6):
    """Exact p <-> -p symmetry over the final node set (absorbs roundoff)."""
    tree = cKDTree(nodes)
    dist, mate = tree.query(-nodes)
    if dist.max() > tol:
        raise RuntimeError(f"TRI6 symmetry broken, worst gap {dist.max():.3e}")
    if not np.array_equal(mate[mate], np.arange(len(nodes))):
        raise RuntimeError("symmetry pairing is not involutive")
    out = nodes.copy()
    done = np.zeros(len(nodes), bool)
    for i in range(len(nodes)):
        if done[i]:
            continue
        j = mate[i]
        if i == j:
            out[i] = 0.0
        else:
            r = 0.5 * (nodes[i] - nodes[j])
            out[i], out[j] = r, -r
        done[i] = done[j] = True
    return out


# ---------------------------------------------------------------- driver


def build(h, zeta=ZETA_PARENT):
    n_e = 2 * int(round(1.0 / h))  # even intervals per outer edge
    xs = outer_grid(n_e)
    ys_up = xs[n_e // 2:]  # 0 .. 1

    fixed = [np.column_stack([xs, np.zeros(xs.size)])]  # seam, includes (+-1, 0)
    fixed.append(np.column_stack([xs, np.ones(xs.size)]))  # top, includes corners
    fixed.append(np.column_stack([np.full(ys_up.size - 2, -1.0), ys_up[1:-1]]))
    fixed.append(np.column_stack([np.full(ys_up.size - 2, 1.0), ys_up[1:-1]]))
    n_outer = sum(len(f) for f in fixed)
    seam_ids = np.arange(xs.size)

    spl = {t: HoleSpline(control_points(zeta, t)) for t in ("hole_0", "hole_1", "hole_2", "hole_3")}
    ts_dense = np.arange(8192) / 8192
    length = np.linalg.norm(np.diff(spl["hole_0"].eval(ts_dense), axis=0), axis=1).sum()
    n_h = max(8, int(round(length / h / 2.0)) * 2)
    t0 = spl["hole_0"].arclength_params(n_h)
    ring0 = spl["hole_0"].eval(t0)
    ring1 = ring0 + np.array([-1.0, 0.0])
    base0 = n_outer
    base1 = n_outer + n_h
    fixed += [ring0, ring1]
    fixed = np.vstack(fixed)

    domain = HalfDomain(zeta)
    pts, tri = distmesh(domain, fixed, h)
    nodes3, tri3, mmap = mirror_merge(pts, tri, seam_ids)
    tri3 = fix_orientation(nodes3, tri3)
    q = triangle_quality(nodes3, tri3)

    # mirrored rings: -C_0(t) = C_2(t + 1/2), -C_1(t) = C_3(t + 1/2)
    ring_info = {
        "hole_0": (list(range(base0, base0 + n_h)), t0),
        "hole_1": (list(range(base1, base1 + n_h)), t0),
        "hole_2": ([int(mmap[i]) for i in range(base0, base0 + n_h)], (t0 + 0.5) % 1.0),
        "hole_3": ([int(mmap[i]) for i in range(base1, base1 + n_h)], (t0 + 0.5) % 1.0),
    }
    nodes, elems, mid_cache, hole_of, pos_of, nring = to_tri6(nodes3, tri3, ring_info, spl)
    nodes = symmetrize_all(nodes)

    tol = 1e-12
    on = lambda v, t: np.abs(v - t) < tol
    corners = np.where(on(np.abs(nodes[:, 0]), 1.0) & on(np.abs(nodes[:, 1]), 1.0))[0]
    tags = {"corners": corners}
    for name, axis, val in (("left", 0, -1.0), ("right", 0, 1.0), ("bottom", 1, -1.0), ("top", 1, 1.0)):
        ids = np.where(on(nodes[:, axis], val))[0]
        tags[name] = np.setdiff1d(ids, corners)
    for tag in ("hole_0", "hole_1", "hole_2", "hole_3"):
        ring_ids = ring_info[tag][0]
        mids = [
            idx
            for (a, b), idx in mid_cache.items()
            if hole_of.get(a) == tag
            and hole_of.get(b) == tag
            and abs(pos_of[a] - pos_of[b]) in (1, nring[tag] - 1)
        ]
        tags[tag] = np.array(sorted(set(ring_ids) | set(mids)), dtype=np.int64)
    return nodes, elems, tags, q


def write_mesh(path, nodes, elems, tags):
    data = {
        "nodes": [[float(x), float(y)] for x, y in nodes],
        "elements": [[int(v) for v in row] for row in elems],
        "tags": {k: [int(v) for v in np.sort(ids)] for k, ids in tags.items()},
    }
    with open(path, "w") as f:
        json.dump(data, f)
    print(f"wrote {path}")


def reference_triangle(path):
    nodes = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]
    data = {"nodes": nodes, "elements": [[0, 1, 2, 3, 4, 5]], "tags": {}}
    with open(path, "w") as f:
        json.dump(data, f)
    print(f"wrote {path}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--outdir", default=os.path.join(os.path.dirname(__file__), "..", "src", "homog2", "fixtures"))
    ap.add_argument("--only", choices=["coarse", "fine"])
    ap.add_argument("--h-coarse", type=float, default=0.17)
    ap.add_argument("--h-fine", type=float, default=0.0536)
    args = ap.parse_args()

    os.makedirs(args.outdir, exist_ok=True)
    reference_triangle(os.path.join(args.outdir, "reference_triangle.json"))
    jobs = {"coarse": args.h_coarse, "fine": args.h_fine}
    if args.only:
        jobs = {args.only: jobs[args.only]}
    for name, h in jobs.items():
        nodes, elems, tags, q = build(h)
        print(
            f"{name}: h={h} elements={len(elems)} nodes={len(nodes)} dofs={2 * len(nodes)} "
            f"quality[min/mean]={q.min():.3f}/{q.mean():.3f}"
        )
        write_mesh(os.path.join(args.outdir, f"rve_{name}.json"), nodes, elems, tags)


if __name__ == "__main__":
    main()
