"""Quadratic-triangle finite element machinery.

Conventions used throughout the package:

- TRI6 local node order: three vertices counterclockwise, then the mid-side
  nodes of edges (0,1), (1,2), (2,0).
- Gradients are stored row-wise: ``G[n, j] = dN_n/dx_j`` and for a vector
  field ``Grad[i, j] = d(field_i)/dx_j``.
- Dof numbering interleaves components: dof of (node n, component c) is
  ``2 n + c``.
- Volume quadrature is a three-point Gauss rule (degree 2, interior points);
  edge traces use three-point Gauss on the 3-node quadratic line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "TRI_QP",
    "TRI_QW",
    "tri6_shape",
    "ElementData",
    "element_data",
    "assemble_matrix",
    "assemble_vector",
    "boundary_edges",
    "edge_integral_weights",
    "constraint_rank",
    "GramFactor",
    "SaddleFactor",
]

# interior 3-point rule on the reference triangle {xi, eta >= 0, xi+eta <= 1},
# weights sum to the reference area 1/2, exact through degree 2
TRI_QP = np.array([[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]])
TRI_QW = np.full(3, 1.0 / 6.0)

# 1D Gauss 3-point rule on [-1, 1]
_G1D = np.sqrt(3.0 / 5.0)
LINE_QP = np.array([-_G1D, 0.0, _G1D])
LINE_QW = np.array([5.0, 8.0, 5.0]) / 9.0

# local (vertex, vertex, mid) triples of the three element edges
EDGE_LOCAL = ((0, 1, 3), (1, 2, 4), (2, 0, 5))


def tri6_shape(points):
    """Shape functions and reference gradients at reference coordinates.

    Returns (N, dN) with shapes (npts, 6) and (npts, 6, 2).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xi, eta = pts[:, 0], pts[:, 1]
    l1, l2, l3 = 1.0 - xi - eta, xi, eta
    n = np.stack(
        [
            l1 * (2.0 * l1 - 1.0),
            l2 * (2.0 * l2 - 1.0),
            l3 * (2.0 * l3 - 1.0),
            4.0 * l1 * l2,
            4.0 * l2 * l3,
            4.0 * l3 * l1,
        ],
        axis=1,
    )
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    dn = np.empty((pts.shape[0], 6, 2))
    for j in range(2):
        dn[:, 0, j] = (4.0 * l1 - 1.0) * dl[0, j]
        dn[:, 1, j] = (4.0 * l2 - 1.0) * dl[1, j]
        dn[:, 2, j] = (4.0 * l3 - 1.0) * dl[2, j]
        dn[:, 3, j] = 4.0 * (l2 * dl[0, j] + l1 * dl[1, j])
        dn[:, 4, j] = 4.0 * (l3 * dl[1, j] + l2 * dl[2, j])
        dn[:, 5, j] = 4.0 * (l1 * dl[2, j] + l3 * dl[0, j])
    return n, dn


def line3_shape(xi):
    """Quadratic line trace (nodes at -1, +1, 0): values and derivatives."""
    xi = np.asarray(xi, dtype=float)
    m = np.stack([0.5 * xi * (xi - 1.0), 0.5 * xi * (xi + 1.0), 1.0 - xi * xi], axis=-1)
    dm = np.stack([xi - 0.5, xi + 0.5, -2.0 * xi], axis=-1)
    return m, dm


@dataclass
class ElementData:
    """Per-quadrature-point element quantities, precomputed once per mesh.

    g0:     (E, Q, 6, 2)  shape gradients w.r.t. physical coordinates
    detj:   (E, Q)        geometry Jacobian determinants
    w:      (E, Q)        quadrature weight times detj (reference measure)
    xq:     (E, Q, 2)     physical positions of the quadrature points
    shape:  (Q, 6)        reference shape values (same for all elements)
    """

    g0: np.ndarray
    detj: np.ndarray
    w: np.ndarray
    xq: np.ndarray
    shape: np.ndarray

    @property
    def n_points(self):
        return self.detj.size


def element_data(nodes, elements):
    """Precompute isoparametric data at the volume quadrature points.

    Raises ValueError if any Jacobian determinant is non-positive (tangled
    or misoriented element, reported with its index).
    """
    shape, dshape = tri6_shape(TRI_QP)  # (Q,6), (Q,6,2)
    xe = nodes[elements]  # (E, 6, 2)
    jac = np.einsum("enx,qnj->eqxj", xe, dshape)  # dx/dxi
    detj = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(detj <= 0.0):
        e = int(np.argwhere(np.any(detj <= 0.0, axis=1))[0, 0])
        raise ValueError(f"non-positive Jacobian in element {e} (min detJ {detj.min():.3e})")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1]
    inv[..., 0, 1] = -jac[..., 0, 1]
    inv[..., 1, 0] = -jac[..., 1, 0]
    inv[..., 1, 1] = jac[..., 0, 0]
    inv /= detj[..., None, None]
    # dN/dx_i = dN/dxi_j * dxi_j/dx_i ; inv[x, j] = dxi_j/dx_... careful:
    # inv is the matrix inverse of jac, inv[j, x] = dxi_j/dx_x
    g0 = np.einsum("qnj,eqjx->eqnx", dshape, inv)
    xq = np.einsum("enx,qn->eqx", xe, shape)
    w = TRI_QW[None, :] * detj
    return ElementData(g0=g0, detj=detj, w=w, xq=xq, shape=shape)


def element_dofs(elements):
    """(E, 12) global dof indices, node-major component-minor."""
    e = np.asarray(elements)
    dofs = np.empty((e.shape[0], 12), dtype=np.int64)
    dofs[:, 0::2] = 2 * e
    dofs[:, 1::2] = 2 * e + 1
    return dofs


def assemble_matrix(k_loc, edofs, ndof):
    """Scatter (E, 12, 12) local blocks into a CSC matrix."""
    rows = np.broadcast_to(edofs[:, :, None], k_loc.shape)
    cols = np.broadcast_to(edofs[:, None, :], k_loc.shape)
    a = sp.coo_matrix(
        (k_loc.ravel(), (rows.ravel(), cols.ravel())), shape=(ndof, ndof)
    )
    return a.tocsc()


def assemble_vector(f_loc, edofs, ndof):
    """Scatter (E, 12) local vectors into a dense global vector."""
    return np.bincount(edofs.ravel(), weights=f_loc.ravel(), minlength=ndof)


def boundary_edges(elements):
    """Edges owned by exactly one element, as (vertex, vertex, mid) triples."""
    seen = {}
    for e, conn in enumerate(np.asarray(elements)):
        for a, b, m in EDGE_LOCAL:
            key = (min(conn[a], conn[b]), max(conn[a], conn[b]))
            if key in seen:
                seen[key] = None
            else:
                seen[key] = (int(conn[a]), int(conn[b]), int(conn[m]))
    return [v for v in seen.values() if v is not None]


def edge_integral_weights(nodes, edges):
    """Nodal weights of the arc-length integral over a set of edge traces.

    Returns a dict node -> w_n with  sum_n w_n f(x_n) ~= integral of f
    over the (possibly curved) traces.
    """
    m, dm = line3_shape(LINE_QP)  # (3g, 3n)
    weights = {}
    for a, b, mid in edges:
        xe = nodes[[a, b, mid]]  # (3, 2)
        dx = dm @ xe  # (3g, 2) tangent vectors
        ds = np.hypot(dx[:, 0], dx[:, 1]) * LINE_QW
        for loc, n in enumerate((a, b, mid)):
            weights[n] = weights.get(n, 0.0) + float(m[:, loc] @ ds)
    return weights


def constraint_rank(c):
    """Numerical rank of a (wide, modest-row-count) constraint matrix.

    Uses a pivoted QR of the small Gram matrix C C^T; rows are built
    near-orthogonal so the squared conditioning is harmless here.
    """
    g = np.asarray((c @ c.T).todense()) if sp.issparse(c) else c @ c.T
    r = scipy.linalg.qr(g, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] == 0.0:
        return 0
    return int(np.count_nonzero(d > d[0] * 1e-12))


class GramFactor:
    """Cholesky factor of C C^T, for least-squares multiplier recovery."""

    def __init__(self, c):
        self.c = c.tocsr() if sp.issparse(c) else sp.csr_matrix(c)
        g = np.asarray((self.c @ self.c.T).todense())
        self._cho = scipy.linalg.cho_factor(g)

    def multiplier(self, f):
        """argmin_m || f + C^T m ||_2 and the residual vector."""
        m = scipy.linalg.cho_solve(self._cho, -(self.c @ f))
        return m, f + self.c.T @ m

    def project_kernel(self, w):
        """Project w onto ker C (removes constraint drift)."""
        return w - self.c.T @ scipy.linalg.cho_solve(self._cho, self.c @ w)


class SaddleFactor:
    """Sparse LU factorization of the bordered system [[K, C^T], [C, 0]].

    The factorization is reused across right-hand sides (tangent problems
    reuse the final Newton matrix). Solves enforce a relative residual of
    1e-10 with at most two refinement passes.
    """

    def __init__(self, k, c):
        n, nc = k.shape[0], c.shape[0]
        self.n, self.nc = n, nc
        a = sp.bmat([[k, c.T], [c, None]], format="csc")
        self._a = a
        self._lu = spla.splu(a)

    def solve(self, rhs1, rhs2=None):
        """Solve for (x, m) given the primal and constraint right-hand sides.

        rhs1 may be (n,) or (n, k); rhs2 defaults to zero.
        """
        one = rhs1.ndim == 1
        r1 = rhs1.reshape(self.n, -1)
        r2 = np.zeros((self.nc, r1.shape[1])) if rhs2 is None else rhs2.reshape(self.nc, -1)
        b = np.vstack([r1, r2])
        x = self._lu.solve(b)
        bn = np.linalg.norm(b, axis=0)
        bn[bn == 0.0] = 1.0
        for _ in range(2):
            res = b - self._a @ x
            if np.all(np.linalg.norm(res, axis=0) <= 1e-10 * bn):
                break
            x += self._lu.solve(res)
        if one:
            x = x[:, 0]
            return x[: self.n], x[self.n:]
        return x[: self.n], x[self.n:]
