"""Element, quadrature, and constrained-solve checks.

Exact integrals over the reference triangle and the parabolic-segment area
formula serve as independent oracles for the volume rule; the saddle solver
is checked against a dense solve.
"""

import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from homog2 import fem


def straight_tri6(v0, v1, v2):
    v0, v1, v2 = map(np.asarray, (v0, v1, v2))
    nodes = np.array(
        [v0, v1, v2, 0.5 * (v0 + v1), 0.5 * (v1 + v2), 0.5 * (v2 + v0)], dtype=float
    )
    return nodes, np.array([[0, 1, 2, 3, 4, 5]])


class TestShapeFunctions:
    NODES_REF = np.array(
        [[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]], dtype=float
    )

    def test_kronecker_property(self):
        n, _ = fem.tri6_shape(self.NODES_REF)
        assert_allclose(n, np.eye(6), atol=1e-14)

    def test_partition_of_unity(self):
        rng = np.random.default_rng(0)
        pts = rng.random((40, 2)) * 0.5
        n, dn = fem.tri6_shape(pts)
        assert_allclose(n.sum(axis=1), 1.0, atol=1e-13)
        assert_allclose(dn.sum(axis=1), 0.0, atol=1e-12)

    def test_quadratic_completeness(self):
        # interpolation reproduces any quadratic exactly
        def q(p):
            x, y = p[..., 0], p[..., 1]
            return 1.0 + 2 * x - y + 3 * x * y - 0.5 * x * x + 0.25 * y * y

        rng = np.random.default_rng(1)
        pts = rng.random((25, 2)) * 0.4
        n, _ = fem.tri6_shape(pts)
        assert_allclose(n @ q(self.NODES_REF), q(pts), rtol=1e-13)


class TestVolumeQuadrature:
    # exact monomial integrals over the reference triangle
    EXACT = {(0, 0): 0.5, (1, 0): 1 / 6, (0, 1): 1 / 6, (2, 0): 1 / 12, (1, 1): 1 / 24, (0, 2): 1 / 12}

    def test_degree_two_exact(self):
        for (a, b), val in self.EXACT.items():
            got = np.sum(fem.TRI_QW * fem.TRI_QP[:, 0] ** a * fem.TRI_QP[:, 1] ** b)
            assert_allclose(got, val, rtol=1e-14)

    def test_degree_three_not_exact(self):
        # guards against silently swapping in a higher-order rule, which
        # would change frozen quadrature-dependent values downstream
        got = np.sum(fem.TRI_QW * fem.TRI_QP[:, 0] ** 3)
        assert abs(got - 1 / 20) > 1e-4


class TestElementData:
    def test_affine_element(self):
        nodes, elems = straight_tri6([0, 0], [2, 0], [0, 1])
        ed = fem.element_data(nodes, elems)
        assert_allclose(ed.detj, 2.0, rtol=1e-14)  # maps ref area 1/2 to 1
        assert_allclose(ed.w.sum(), 1.0, rtol=1e-14)
        # gradient of a linear interpolant is exact
        vals = 3.0 * nodes[:, 0] + 4.0 * nodes[:, 1]
        g = np.einsum("n,eqnj->eqj", vals, ed.g0)
        assert_allclose(g, np.broadcast_to([3.0, 4.0], g.shape), rtol=1e-13)

    def test_parabolic_edge_area(self):
        # mid node of the hypotenuse pushed outward: area grows by the
        # parabolic segment 2/3 * base * sagitta = 1/15; the 3-point rule
        # is exact because detJ is quadratic
        nodes, elems = straight_tri6([0, 0], [1, 0], [0, 1])
        nodes[4] = [0.55, 0.55]
        ed = fem.element_data(nodes, elems)
        assert_allclose(ed.w.sum(), 0.5 + 1.0 / 15.0, rtol=1e-14)

    def test_tangled_element_raises(self):
        nodes, elems = straight_tri6([0, 0], [1, 0], [0, 1])
        nodes[[1, 2]] = nodes[[2, 1]]  # clockwise
        with pytest.raises(ValueError, match="element 0"):
            fem.element_data(nodes, elems)

    def test_quadrature_positions(self):
        nodes, elems = straight_tri6([1, 1], [3, 1], [1, 2])
        ed = fem.element_data(nodes, elems)
        ref = np.array([1, 1]) + fem.TRI_QP * [2, 1]
        assert_allclose(ed.xq[0], ref, rtol=1e-14)


class TestEdgeIntegrals:
    def test_boundary_edges_of_two_element_patch(self):
        # unit square split along the diagonal: 4 boundary edges
        nodes = np.array(
            [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0], [1, 0.5], [0.5, 0.5], [0.5, 1], [0, 0.5]],
            dtype=float,
        )
        elems = np.array([[0, 1, 2, 4, 5, 6], [0, 2, 3, 6, 7, 8]])
        edges = fem.boundary_edges(elems)
        assert len(edges) == 4
        assert all(m not in (6,) for (_, _, m) in edges)  # diagonal is interior

    def test_straight_edge_weights(self):
        nodes = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 0.0]])
        w = fem.edge_integral_weights(nodes, [(0, 1, 2)])
        assert_allclose(sum(w.values()), 2.0, rtol=1e-14)  # length
        assert_allclose(
            sum(wi * nodes[n, 0] for n, wi in w.items()), 2.0, rtol=1e-14
        )  # integral of x

    def test_curved_trace_length(self):
        # quadratic interpolant of a quarter circle; frozen value computed
        # with adaptive 1D quadrature of |x'| on the same interpolant
        s = np.sqrt(2) / 2
        nodes = np.array([[1.0, 0.0], [0.0, 1.0], [s, s]])
        w = fem.edge_integral_weights(nodes, [(0, 1, 2)])
        assert_allclose(sum(w.values()), 1.562417125333835, atol=5e-4)


class TestAssembly:
    def test_matrix_and_vector_scatter(self):
        rng = np.random.default_rng(5)
        elems = np.array([[0, 1, 2, 3, 4, 5], [1, 6, 2, 7, 8, 4]])
        edofs = fem.element_dofs(elems)
        ndof = 18
        k_loc = rng.random((2, 12, 12))
        f_loc = rng.random((2, 12))
        k = fem.assemble_matrix(k_loc, edofs, ndof)
        f = fem.assemble_vector(f_loc, edofs, ndof)
        k_ref = np.zeros((ndof, ndof))
        f_ref = np.zeros(ndof)
        for e in range(2):
            for i in range(12):
                f_ref[edofs[e, i]] += f_loc[e, i]
                for j in range(12):
                    k_ref[edofs[e, i], edofs[e, j]] += k_loc[e, i, j]
        assert_allclose(k.toarray(), k_ref, rtol=1e-14)
        assert_allclose(f, f_ref, rtol=1e-14)


class TestConstrainedSolves:
    def make_system(self, rng, n=40, nc=6):
        a = rng.random((n, n))
        k = sp.csc_matrix(a @ a.T + n * np.eye(n))
        c = sp.csr_matrix(rng.random((nc, n)) - 0.5)
        return k, c

    def test_saddle_matches_dense(self):
        rng = np.random.default_rng(11)
        k, c = self.make_system(rng)
        rhs = rng.random(40)
        x, m = fem.SaddleFactor(k, c).solve(rhs)
        big = np.block([[k.toarray(), c.toarray().T], [c.toarray(), np.zeros((6, 6))]])
        ref = np.linalg.solve(big, np.concatenate([rhs, np.zeros(6)]))
        assert_allclose(x, ref[:40], rtol=1e-10)
        assert_allclose(m, ref[40:], rtol=1e-10)

    def test_saddle_multi_rhs(self):
        rng = np.random.default_rng(12)
        k, c = self.make_system(rng)
        rhs = rng.random((40, 3))
        x, m = fem.SaddleFactor(k, c).solve(rhs)
        for j in range(3):
            xj, mj = fem.SaddleFactor(k, c).solve(rhs[:, j])
            assert_allclose(x[:, j], xj, rtol=1e-12)
            assert_allclose(m[:, j], mj, rtol=1e-12)

    def test_saddle_constraint_satisfied(self):
        rng = np.random.default_rng(13)
        k, c = self.make_system(rng)
        x, _ = fem.SaddleFactor(k, c).solve(rng.random(40))
        assert_allclose(c @ x, 0.0, atol=1e-11)

    def test_gram_multiplier_is_least_squares(self):
        rng = np.random.default_rng(14)
        _, c = self.make_system(rng)
        gf = fem.GramFactor(c)
        f = rng.random(40)
        m, res = gf.multiplier(f)
        # optimality: residual orthogonal to the row space
        assert_allclose(c @ res, 0.0, atol=1e-12)
        assert_allclose(res, f + c.T @ m, rtol=1e-13)

    def test_kernel_projection(self):
        rng = np.random.default_rng(15)
        _, c = self.make_system(rng)
        gf = fem.GramFactor(c)
        w = rng.random(40)
        wp = gf.project_kernel(w)
        assert_allclose(c @ wp, 0.0, atol=1e-12)
        assert np.linalg.norm(w - wp) <= np.linalg.norm(w)

    def test_constraint_rank(self):
        rng = np.random.default_rng(16)
        c = rng.random((5, 30))
        c = np.vstack([c, c[0] + 2.0 * c[3]])  # one dependent row
        assert fem.constraint_rank(sp.csr_matrix(c)) == 5
        assert fem.constraint_rank(sp.csr_matrix(c[:5])) == 5
