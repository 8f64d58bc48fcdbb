"""Spline, mesh ingestion, and transformation-map checks.

The Green's-theorem boundary area of the morphed mesh serves as the
independent oracle for the Jacobian of the geometry map; spline identities
(knot-point formula, closure, symmetry) pin the B-spline convention.
"""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial import cKDTree

from homog2 import fem, geometry as geo


@pytest.fixture(scope="module")
def coarse():
    return geo.load_mesh(geo.fixture_path("rve_coarse.json"))


@pytest.fixture(scope="module")
def fine():
    return geo.load_mesh(geo.fixture_path("rve_fine.json"))


class TestControlPoints:
    def test_values_at_parent(self):
        pts = geo.control_points(0.025, 0)
        assert_allclose(pts[0], [0.075, 0.5])
        assert_allclose(pts[1], [0.1, 0.1])
        assert_allclose(pts[2], [0.5, 0.075])
        assert_allclose(pts[4], [0.925, 0.5])
        assert_allclose(pts[6], [0.5, 0.925])

    def test_point_symmetry_about_hole_center(self):
        pts = geo.control_points(-0.037, 0)
        assert_allclose(pts[4:] + pts[:4], np.ones((4, 2)), atol=1e-15)

    def test_hole_shifts(self):
        base = geo.control_points(0.01, 0)
        assert_allclose(geo.control_points(0.01, 1), base + [-1, 0])
        assert_allclose(geo.control_points(0.01, 2), base + [-1, -1])
        assert_allclose(geo.control_points(0.01, 3), base + [0, -1])


class TestHoleSpline:
    def spline(self, z=0.025):
        return geo.HoleSpline(geo.control_points(z, 0))

    def test_knot_point_formula(self):
        # closed uniform cubic: C(k/8) = (P_{k-1} + 4 P_k + P_{k+1}) / 6
        s = self.spline()
        p = s.points
        for k in range(8):
            ref = (p[(k - 1) % 8] + 4 * p[k] + p[(k + 1) % 8]) / 6.0
            assert_allclose(s.eval(k / 8.0), ref, atol=1e-14)

    def test_closure_and_smoothness(self):
        s = self.spline(-0.05)
        assert_allclose(s.eval(0.0), s.eval(1.0 - 1e-16), atol=1e-12)
        eps = 1e-9
        for t in (1 / 8, 3 / 8, 0.999999999):
            assert_allclose(s.eval(t - eps), s.eval(t + eps), atol=1e-7)
            d1m, _ = s.deriv(t - eps)
            d1p, _ = s.deriv(t + eps)
            assert_allclose(d1m, d1p, atol=1e-6)

    def test_point_symmetry(self):
        s = self.spline(-0.037)
        ts = np.linspace(0, 0.5, 33)
        assert_allclose(s.eval(ts + 0.5), 1.0 - s.eval(ts), atol=1e-13)

    def test_derivative_by_fd(self):
        s = self.spline(0.0)
        h = 1e-7
        for t in (0.03, 0.26, 0.61, 0.94):
            d1, d2 = s.deriv(t)
            fd1 = (s.eval(t + h) - s.eval(t - h)) / (2 * h)
            assert_allclose(d1, fd1, rtol=1e-6)
            d1p, _ = s.deriv(t + h)
            d1m, _ = s.deriv(t - h)
            assert_allclose(d2, (d1p - d1m) / (2 * h), rtol=1e-5)

    def test_projection_roundtrip(self):
        s = self.spline(0.04)
        ts = np.array([0.01, 0.2, 0.45, 0.5, 0.77, 0.99])
        got = s.project(s.eval(ts))
        err = np.minimum(np.abs(got - ts), 1.0 - np.abs(got - ts))
        assert err.max() < 1e-10

    def test_arclength_params_equispaced(self):
        s = self.spline()
        t = s.arclength_params(40)
        # dense cumulative arc length as the measuring tape
        dense = np.linspace(0.0, 1.0, 200_001)
        pts = s.eval(dense)
        cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
        arcs = np.diff(np.interp(np.concatenate([t, [1.0]]), dense, cum))
        assert arcs.std() / arcs.mean() < 1e-4


class TestMeshFixtures:
    def test_sizes(self, coarse, fine):
        assert coarse.n_elements == 140 and coarse.n_dofs == 778
        assert fine.n_elements == 1032 and fine.n_dofs == 4842

    def test_periodic_pairing_exact(self, coarse, fine):
        for m in (coarse, fine):
            l, r = m.pairs_lr[:, 0], m.pairs_lr[:, 1]
            assert np.all(m.nodes[l, 1] == m.nodes[r, 1])  # identical floats
            b, t = m.pairs_bt[:, 0], m.pairs_bt[:, 1]
            assert np.all(m.nodes[b, 0] == m.nodes[t, 0])

    def test_point_symmetry_exact(self, coarse, fine):
        for m in (coarse, fine):
            d, _ = cKDTree(m.nodes).query(-m.nodes)
            assert d.max() == 0.0

    def test_hole_nodes_on_parent_spline(self, coarse):
        for tag in geo.HOLE_TAGS:
            s = geo.HoleSpline(geo.control_points(coarse.zeta_parent, tag))
            gap = np.linalg.norm(
                s.eval(coarse.hole_t[tag]) - coarse.nodes[coarse.tags[tag]], axis=1
            )
            assert gap.max() < 1e-9

    def test_reference_triangle_fixture(self):
        m = geo.load_mesh(geo.fixture_path("reference_triangle.json"))
        assert m.n_elements == 1
        assert_allclose(m.data().w.sum(), 0.5, rtol=1e-15)

    def test_fixture_env_override(self, tmp_path, monkeypatch):
        p = tmp_path / "rve_coarse.json"
        p.write_text("{}")
        monkeypatch.setenv("HOMOG2_FIXTURES", str(tmp_path))
        assert geo.fixture_path("rve_coarse.json") == str(p)
        monkeypatch.delenv("HOMOG2_FIXTURES")
        assert "fixtures" in geo.fixture_path("rve_coarse.json")


class TestMeshValidation:
    def base(self, coarse):
        return {
            "nodes": coarse.nodes.copy(),
            "elements": coarse.elements.copy(),
            "tags": {k: v.copy() for k, v in coarse.tags.items()},
        }

    def test_missing_keys(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"nodes": []}))
        with pytest.raises(ValueError, match="lacks keys"):
            geo.load_mesh(p)

    def test_out_of_range_connectivity(self, coarse):
        d = self.base(coarse)
        d["elements"][0, 0] = coarse.n_nodes + 5
        with pytest.raises(ValueError, match="out of range"):
            geo.mesh_from_arrays(**d)

    def test_node_off_face(self, coarse):
        d = self.base(coarse)
        bad = int(d["tags"]["left"][0])
        d["nodes"][bad, 0] += 1e-3
        with pytest.raises(ValueError, match=f"node {bad}"):
            geo.mesh_from_arrays(**d)

    def test_broken_pairing(self, coarse):
        d = self.base(coarse)
        bad = int(d["tags"]["left"][2])
        d["nodes"][bad, 1] += 2e-4  # stays on the face, loses its mate
        with pytest.raises(ValueError, match="pairing"):
            geo.mesh_from_arrays(**d)

    def test_node_off_spline(self, coarse):
        d = self.base(coarse)
        bad = int(d["tags"]["hole_0"][0])
        d["nodes"][bad] += 1e-4
        with pytest.raises(ValueError, match="off the parent spline"):
            geo.mesh_from_arrays(**d)

    def test_tangled_element(self, coarse):
        d = self.base(coarse)
        e0 = d["elements"][0]
        d["elements"][0] = e0[[0, 2, 1, 5, 4, 3]]
        with pytest.raises(ValueError, match="Jacobian"):
            geo.mesh_from_arrays(**d)


def morphed_boundary_area(mesh):
    """Green's theorem area of a (curved-edge) mesh: 1/2 closed-int (x dy - y dx)."""
    m, dm = fem.line3_shape(fem.LINE_QP)
    area = 0.0
    for a, b, mid in fem.boundary_edges(mesh.elements):
        xe = mesh.nodes[[a, b, mid]]
        x = m @ xe
        dx = dm @ xe
        area += 0.5 * np.sum(fem.LINE_QW * (x[:, 0] * dx[:, 1] - x[:, 1] * dx[:, 0]))
    return area


class TestTransformationMap:
    def test_parent_is_identity(self, coarse):
        t = geo.solve_auxiliary_transform(coarse, coarse.zeta_parent)
        assert np.abs(t.d).max() < 1e-12
        assert_allclose(t.jdet, 1.0, atol=1e-12)
        assert_allclose(t.volume, t.parent_volume, rtol=1e-12)

    def test_jacobian_integral_matches_boundary_area(self, coarse):
        # integral of jdet over the parent equals the area enclosed by the
        # morphed boundary (independent oracle via Green's theorem)
        for z in (-0.05, 0.05):
            t = geo.solve_auxiliary_transform(coarse, z)
            morphed = geo.morph_mesh(coarse, t)
            assert_allclose(t.volume, morphed_boundary_area(morphed), rtol=1e-8)

    def test_pullback_weights_equal_morphed_mesh_weights(self, coarse):
        # w * jdet on the parent is exactly the quadrature measure of the
        # morphed mesh (isoparametric chain rule, holds to roundoff)
        t = geo.solve_auxiliary_transform(coarse, -0.05)
        morphed = geo.morph_mesh(coarse, t)
        assert_allclose(coarse.data().w * t.jdet, morphed.data().w, rtol=1e-10)

    def test_morph_antisymmetry(self, coarse):
        _, mate = cKDTree(coarse.nodes).query(-coarse.nodes)
        t = geo.solve_auxiliary_transform(coarse, -0.06)
        assert np.abs(t.d + t.d[mate]).max() < 1e-13

    def test_hole_nodes_land_on_target_spline(self, coarse):
        z = -0.05
        t = geo.solve_auxiliary_transform(coarse, z)
        morphed_nodes = coarse.nodes + t.d
        for tag in geo.HOLE_TAGS:
            s = geo.HoleSpline(geo.control_points(z, tag))
            ids = coarse.tags[tag]
            # ring nodes (not mids) are displaced exactly onto the curve
            gap = np.linalg.norm(s.eval(s.project(morphed_nodes[ids])) - morphed_nodes[ids], axis=1)
            assert gap.max() < 1e-9

    def test_degenerate_morph_raises(self, coarse):
        with pytest.raises(geo.DegenerateTransformError, match="min det F_mu"):
            geo.solve_auxiliary_transform(coarse, -0.25)

    def test_rigid_weights_at_parent_are_area_weights(self, coarse):
        t = geo.solve_auxiliary_transform(coarse, coarse.zeta_parent)
        w = t.nodal_volume_weights(coarse)
        assert_allclose(w.sum(), coarse.data().w.sum(), rtol=1e-12)
        # independent route: plain quadrature of each shape function
        ed = coarse.data()
        ref = np.bincount(
            coarse.elements.ravel(),
            weights=np.einsum("eq,qn->en", ed.w, ed.shape).ravel(),
            minlength=coarse.n_nodes,
        )
        assert_allclose(w, ref, atol=1e-13)

    def test_weights_match_morphed_mesh_route(self, coarse):
        # jdet-weighted parent weights == plain weights on the morphed mesh
        t = geo.solve_auxiliary_transform(coarse, 0.04)
        morphed = geo.morph_mesh(coarse, t)
        ed = morphed.data()
        ref = np.bincount(
            morphed.elements.ravel(),
            weights=np.einsum("eq,qn->en", ed.w, ed.shape).ravel(),
            minlength=morphed.n_nodes,
        )
        assert_allclose(t.nodal_volume_weights(coarse), ref, atol=1e-12)
