"""Two-scale solver on a mixed macroscale discretization.

The macroscopic continuum carries three fields on a structured quadrilateral
mesh: displacement on 8-node serendipity elements, an independent deformation
gradient Fhat on 4-node bilinear elements (four components per node), and an
element-constant multiplier L that ties Fhat to I + Grad u in the mean. Each
quadrature point owns a persistent constitutive state, either a full cell
problem or its reduced counterpart, evaluated at F = I + Grad u and the
symmetrized gradient of Fhat.

The assembled system is the stationarity of

    integral( W_cell(F, grad Fhat) - L : (Fhat - F) ) dX

so the matrix is symmetric whenever the cell tangents are conjugate, which
the micro solver guarantees. Dirichlet data alone drives the load program;
reactions are read off the residual at constrained displacement dofs.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from .geometry import solve_auxiliary_transform
from .material import NonPositiveJacobianError, stress_tangent
from .micro import (
    G6_TRIPLES,
    EffectiveResponse,
    MacroInput,
    NewtonError,
    build_constraints,
    compress_g,
    effective_stress,
    effective_tangents,
    expand_g6,
    solve_micro,
)
from .rom import rom_effective, rom_solve

__all__ = [
    "AnalyticConstitutive",
    "FullConstitutive",
    "MacroBC",
    "MacroMesh",
    "MacroStep",
    "MacroStepError",
    "RomConstitutive",
    "TwoScaleResult",
    "assemble_macro",
    "build_plate",
    "build_rectangle",
    "constraint_gap",
    "nodes_on",
    "point_inputs",
    "run_two_scale",
]


class MacroStepError(RuntimeError):
    """A macro load step cannot be completed at the current increment."""


def _split_g6_last(a6):
    """Spread six canonical components over the last three axes, half at each
    symmetric slot, so contraction with a raw (unsymmetrized) gradient
    reproduces the symmetrized pairing exactly."""
    a6 = np.asarray(a6, dtype=float)
    out = np.zeros(a6.shape[:-1] + (2, 2, 2))
    for c, (i, j, k) in enumerate(G6_TRIPLES):
        out[..., i, j, k] += 0.5 * a6[..., c]
        out[..., k, j, i] += 0.5 * a6[..., c]
    return out


def _split_g6_first(a6):
    """The same half-split applied to the leading axis."""
    a6 = np.asarray(a6, dtype=float)
    out = _split_g6_last(np.moveaxis(a6, 0, -1))
    return np.moveaxis(out, (-3, -2, -1), (0, 1, 2))


# reference-square node layout: corners counterclockwise, then midsides
_Q8_XI = np.array(
    [[-1, -1], [1, -1], [1, 1], [-1, 1], [0, -1], [1, 0], [0, 1], [-1, 0]],
    dtype=float,
)
_Q4_XI = _Q8_XI[:4]


def _q4(xi, eta):
    vals = np.empty(4)
    grads = np.empty((4, 2))
    for a, (xs, ys) in enumerate(_Q4_XI):
        vals[a] = 0.25 * (1 + xs * xi) * (1 + ys * eta)
        grads[a] = [0.25 * xs * (1 + ys * eta), 0.25 * ys * (1 + xs * xi)]
    return vals, grads


def _q8(xi, eta):
    vals = np.empty(8)
    grads = np.empty((8, 2))
    for a, (xs, ys) in enumerate(_Q8_XI[:4]):
        vals[a] = 0.25 * (1 + xs * xi) * (1 + ys * eta) * (xs * xi + ys * eta - 1)
        grads[a] = [
            0.25 * xs * (1 + ys * eta) * (2 * xs * xi + ys * eta),
            0.25 * ys * (1 + xs * xi) * (xs * xi + 2 * ys * eta),
        ]
    for a, (xs, ys) in enumerate(_Q8_XI[4:], start=4):
        if xs == 0.0:
            vals[a] = 0.5 * (1 - xi * xi) * (1 + ys * eta)
            grads[a] = [-xi * (1 + ys * eta), 0.5 * ys * (1 - xi * xi)]
        else:
            vals[a] = 0.5 * (1 + xs * xi) * (1 - eta * eta)
            grads[a] = [0.5 * xs * (1 - eta * eta), -eta * (1 + xs * xi)]
    return vals, grads


@dataclass
class _MacroData:
    gnu: np.ndarray  # (ne, 4, 8, 2) displacement shape gradients
    nf: np.ndarray  # (ne, 4, 4) Fhat shape values
    gnf: np.ndarray  # (ne, 4, 4, 2) Fhat shape gradients
    wdet: np.ndarray  # (ne, 4) quadrature weights
    edof_u: np.ndarray  # (ne, 16)
    edof_f: np.ndarray  # (ne, 16)
    edof_l: np.ndarray  # (ne, 4)
    edof: np.ndarray  # (ne, 36) element scatter map


@dataclass(eq=False)
class MacroMesh:
    """Mixed mesh: Q8 displacement grid, Q4 Fhat grid, per-element zeta.

    The Fhat grid carries the element geometry (its nodes coincide with the
    displacement corner nodes). Quadrature data is cached on first use, so
    edit node coordinates before calling data()."""

    nodes_u: np.ndarray
    elements_u: np.ndarray
    nodes_f: np.ndarray
    elements_f: np.ndarray
    zeta: np.ndarray
    _data: _MacroData = field(default=None, repr=False)

    @property
    def off_f(self):
        return 2 * len(self.nodes_u)

    @property
    def off_l(self):
        return self.off_f + 4 * len(self.nodes_f)

    @property
    def n_dofs(self):
        return self.off_l + 4 * len(self.elements_u)

    def data(self) -> _MacroData:
        if self._data is not None:
            return self._data
        gp = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) / np.sqrt(3.0)
        ne = len(self.elements_u)
        gnu = np.empty((ne, 4, 8, 2))
        nf = np.empty((ne, 4, 4))
        gnf = np.empty((ne, 4, 4, 2))
        wdet = np.empty((ne, 4))
        for e in range(ne):
            xc = self.nodes_f[self.elements_f[e]]
            for q, (xi, eta) in enumerate(gp):
                n4, d4 = _q4(xi, eta)
                _, d8 = _q8(xi, eta)
                jac = xc.T @ d4
                det = np.linalg.det(jac)
                if det <= 0.0:
                    raise ValueError(f"non-positive jacobian in macro element {e}")
                jinv = np.linalg.inv(jac)
                gnu[e, q] = d8 @ jinv
                gnf[e, q] = d4 @ jinv
                nf[e, q] = n4
                wdet[e, q] = det
        comp2 = np.arange(2)
        comp4 = np.arange(4)
        edof_u = (2 * self.elements_u[:, :, None] + comp2).reshape(ne, 16)
        edof_f = (self.off_f + 4 * self.elements_f[:, :, None] + comp4).reshape(ne, 16)
        edof_l = self.off_l + 4 * np.arange(ne)[:, None] + comp4
        edof = np.concatenate([edof_u, edof_f, edof_l], axis=1)
        self._data = _MacroData(gnu, nf, gnf, wdet, edof_u, edof_f, edof_l, edof)
        return self._data

    def initial_state(self):
        """All fields at rest: u = 0, Fhat = I, L = 0."""
        z = np.zeros(self.n_dofs)
        fh = z[self.off_f : self.off_l].reshape(-1, 4)
        fh[:, 0] = 1.0
        fh[:, 3] = 1.0
        return z


def build_rectangle(width, height, nx, ny, zeta):
    """Structured mixed mesh on [0, width] x [0, height], nx by ny elements."""
    ij_u = {}
    coords_u = []
    for j in range(2 * ny + 1):
        for i in range(2 * nx + 1):
            if i % 2 == 1 and j % 2 == 1:
                continue  # serendipity elements have no interior node
            ij_u[(i, j)] = len(coords_u)
            coords_u.append((i * width / (2 * nx), j * height / (2 * ny)))
    coords_f = [
        (i * width / nx, j * height / ny)
        for j in range(ny + 1)
        for i in range(nx + 1)
    ]
    elems_u, elems_f = [], []
    for ey in range(ny):
        for ex in range(nx):
            i0, j0 = 2 * ex, 2 * ey
            elems_u.append(
                [
                    ij_u[(i0, j0)],
                    ij_u[(i0 + 2, j0)],
                    ij_u[(i0 + 2, j0 + 2)],
                    ij_u[(i0, j0 + 2)],
                    ij_u[(i0 + 1, j0)],
                    ij_u[(i0 + 2, j0 + 1)],
                    ij_u[(i0 + 1, j0 + 2)],
                    ij_u[(i0, j0 + 1)],
                ]
            )
            n0 = ey * (nx + 1) + ex
            elems_f.append([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    return MacroMesh(
        nodes_u=np.array(coords_u),
        elements_u=np.array(elems_u),
        nodes_f=np.array(coords_f),
        elements_f=np.array(elems_f),
        zeta=np.full(nx * ny, float(zeta)),
    )


def nodes_on(coords, axis, value, tol=1e-7):
    """Indices of nodes lying on the line coords[axis] == value."""
    return np.where(np.abs(np.asarray(coords)[:, axis] - value) < tol)[0]


@dataclass
class MacroBC:
    """Dirichlet program. u values ramp with the load factor; Fhat values are
    held fixed. u_dofs are global displacement dofs (2*node + comp), f_dofs
    are Fhat-local dofs (4*node + comp)."""

    u_dofs: np.ndarray
    u_vals: np.ndarray
    f_dofs: np.ndarray
    f_vals: np.ndarray
    reaction_dofs: np.ndarray
    perturb_dof: int = -1

    def fixed_dofs(self, mesh):
        return np.concatenate([self.u_dofs, mesh.off_f + self.f_dofs])

    def apply(self, mesh, z, t):
        z[self.u_dofs] = t * self.u_vals
        z[mesh.off_f + self.f_dofs] = self.f_vals


def build_plate(width=6.0, height=20.0, nx=2, ny=4, zeta=-0.035,
                compression=0.075):
    """Compression fixture: clamped bottom, rigid top platen moving down by
    compression * height. Along both platens the lateral stretch and shear
    of Fhat are suppressed (Fhat_xx = 1, Fhat_yx = 0), and Fhat is pinned to
    the identity at the bottom-left corner node."""
    mesh = build_rectangle(width, height, nx, ny, zeta)
    bottom = nodes_on(mesh.nodes_u, 1, 0.0)
    top = nodes_on(mesh.nodes_u, 1, height)
    nodes = np.concatenate([bottom, top])
    u_dofs = np.stack([2 * nodes, 2 * nodes + 1], axis=1).ravel()
    u_vals = np.zeros((nodes.size, 2))
    u_vals[bottom.size :, 1] = -compression * height
    fixed = {}
    for n in np.concatenate([nodes_on(mesh.nodes_f, 1, 0.0),
                             nodes_on(mesh.nodes_f, 1, height)]):
        fixed[4 * n + 0] = 1.0
        fixed[4 * n + 2] = 0.0
    corner = int(nodes_on(mesh.nodes_f, 1, 0.0)[
        np.argmin(mesh.nodes_f[nodes_on(mesh.nodes_f, 1, 0.0), 0])
    ])
    for c, v in enumerate((1.0, 0.0, 0.0, 1.0)):
        fixed[4 * corner + c] = v
    f_dofs = np.array(sorted(fixed), dtype=int)
    mid = [
        int(n)
        for n in nodes_on(mesh.nodes_u, 0, width)
        if abs(mesh.nodes_u[n, 1] - height / 2) < 1e-7
    ]
    bc = MacroBC(
        u_dofs=u_dofs,
        u_vals=u_vals.ravel(),
        f_dofs=f_dofs,
        f_vals=np.array([fixed[d] for d in f_dofs]),
        reaction_dofs=2 * top + 1,
        perturb_dof=2 * mid[0] if mid else -1,
    )
    return mesh, bc


@dataclass
class PointState:
    """Macroscopic input at one quadrature point, in assembly order."""

    k: int
    e: int
    q: int
    inp: MacroInput
    fhat: np.ndarray


def point_inputs(mesh, z):
    """Per-point (F, g6, zeta) plus the interpolated Fhat for a state z."""
    data = mesh.data()
    eye = np.eye(2)
    out = []
    for e in range(len(mesh.elements_u)):
        ue = z[data.edof_u[e]].reshape(8, 2)
        fe = z[data.edof_f[e]].reshape(4, 2, 2)
        for q in range(4):
            gu = np.einsum("ai,aj->ij", ue, data.gnu[e, q])
            graw = np.einsum("ak,aij->kij", data.gnf[e, q], fe)
            inp = MacroInput(
                eye + gu, compress_g(graw, symmetrize=True), mesh.zeta[e]
            )
            fhat = np.einsum("a,aij->ij", data.nf[e, q], fe)
            out.append(PointState(4 * e + q, e, q, inp, fhat))
    return out


def constraint_gap(mesh, z):
    """Largest element mean of |Fhat - F|, the weak constraint violation."""
    data = mesh.data()
    ne = len(mesh.elements_u)
    gaps = np.zeros((ne, 2, 2))
    for pt in point_inputs(mesh, z):
        gaps[pt.e] += data.wdet[pt.e, pt.q] * (pt.fhat - pt.inp.fbar)
    areas = data.wdet.sum(axis=1)
    return float((np.abs(gaps).max(axis=(1, 2)) / areas).max())


def assemble_macro(mesh, handle, z, need_matrix=True):
    """Residual and (optionally) tangent of the mixed system at state z.

    Element blocks follow the pairing of the mixed weak form: the cell
    stress against Grad du, the multiplier against both du and dFhat, the
    moment stress against the raw gradient of dFhat, and the element-mean
    gap against dL. Constitutive failures propagate to the caller."""
    data = mesh.data()
    eye = np.eye(2)
    r = np.zeros(mesh.n_dofs)
    rows, cols, vals = [], [], []
    for e in range(len(mesh.elements_u)):
        ue = z[data.edof_u[e]].reshape(8, 2)
        fe = z[data.edof_f[e]].reshape(4, 2, 2)
        le = z[data.edof_l[e]].reshape(2, 2)
        re = np.zeros(36)
        ke = np.zeros((36, 36)) if need_matrix else None
        for q in range(4):
            w = data.wdet[e, q]
            gnu = data.gnu[e, q]
            gnf = data.gnf[e, q]
            nfv = data.nf[e, q]
            gu = np.einsum("ai,aj->ij", ue, gnu)
            fbar = eye + gu
            graw = np.einsum("ak,aij->kij", gnf, fe)
            inp = MacroInput(
                fbar, compress_g(graw, symmetrize=True), mesh.zeta[e]
            )
            eff = handle.evaluate(4 * e + q, inp, need_tangent=need_matrix)
            fhat = np.einsum("a,aij->ij", nfv, fe)
            re[:16] += w * np.einsum("bc,nc->nb", eff.pbar - le, gnu).ravel()
            re[16:32] += w * (
                np.einsum("a,ij->aij", nfv, le)
                + np.einsum("kij,ak->aij", eff.qbar, gnf)
            ).ravel()
            re[32:] += w * (fhat - fbar).ravel()
            if not need_matrix:
                continue
            ke[:16, :16] += w * np.einsum(
                "nc,bcdf,mf->nbmd", gnu, eff.dp_df, gnu
            ).reshape(16, 16)
            ke[:16, 16:32] += w * np.einsum(
                "nc,bckij,ak->nbaij", gnu, eff.dp_dg, gnf
            ).reshape(16, 16)
            ke[16:32, :16] += w * np.einsum(
                "ak,kijbc,mc->aijmb", gnf, eff.dq_df, gnu
            ).reshape(16, 16)
            ke[16:32, 16:32] += w * np.einsum(
                "ak,kijglm,bg->aijblm", gnf, eff.dq_dg, gnf
            ).reshape(16, 16)
            kul = -w * np.einsum("bi,nj->nbij", eye, gnu).reshape(16, 4)
            ke[:16, 32:] += kul
            ke[32:, :16] += kul.T
            kfl = w * np.einsum("a,il,jm->aijlm", nfv, eye, eye).reshape(16, 4)
            ke[16:32, 32:] += kfl
            ke[32:, 16:32] += kfl.T
        edof = data.edof[e]
        r[edof] += re
        if need_matrix:
            rows.append(np.repeat(edof, 36))
            cols.append(np.tile(edof, 36))
            vals.append(ke.ravel())
    if not need_matrix:
        return r, None
    k = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_dofs, mesh.n_dofs),
    ).tocsr()
    return r, k


class AnalyticConstitutive:
    """Local first-gradient response with an optional tiny penalty on the
    gradient of Fhat.

    The moment stress vanishes (up to the regularization), so this is a
    plain continuum written in the mixed form. With grad_stiffness = 0 the
    matrix is singular for solves, because Fhat wiggles with zero element
    mean cost nothing; assembly-level oracles use that default, solver
    tests pass a small positive value."""

    def __init__(self, mat, grad_stiffness=0.0):
        self.material = mat
        self.eps = float(grad_stiffness)
        # frame-invariant quadratic in the full symmetrized gradient:
        # q = eps * sym(G), so dq/dG_raw is eps times the symmetrizer
        sym = np.zeros((2, 2, 2, 2, 2, 2))
        for k in range(2):
            for i in range(2):
                for j in range(2):
                    sym[k, i, j, k, i, j] += 0.5
                    sym[k, i, j, j, i, k] += 0.5
        self._dq_dg = self.eps * sym
        self._zero5 = np.zeros((2, 2, 2, 2, 2))

    def evaluate(self, k, inp, need_tangent=True):
        p, a = stress_tangent(self.material, inp.fbar)
        return EffectiveResponse(
            pbar=p,
            qbar=self.eps * expand_g6(inp.g6),
            dp_df=a,
            dp_dg=self._zero5,
            dq_df=self._zero5,
            dq_dg=self._dq_dg,
            volume=1.0,
        )

    def checkpoint(self):
        pass

    def rollback(self):
        pass


class FullConstitutive:
    """One cell problem per quadrature point, warm-started along the path."""

    def __init__(self, cell_mesh, mat, tol=None):
        self.mesh = cell_mesh
        self.material = mat
        self.tol = tol
        self._aux = {}
        self._state = {}
        self._saved = {}

    def _setup(self, zeta):
        key = float(zeta)
        if key not in self._aux:
            tmap = solve_auxiliary_transform(self.mesh, key)
            self._aux[key] = (tmap, build_constraints(self.mesh, tmap))
        return self._aux[key]

    def evaluate(self, k, inp, need_tangent=True):
        tmap, cons = self._setup(inp.zeta)
        w0, prev = self._state.get(k, (None, None))
        try:
            sol = solve_micro(self.mesh, tmap, self.material, cons, inp,
                              w0=w0, from_input=prev, tol=self.tol,
                              keep_saddle=need_tangent)
        except NewtonError:
            # a stale warm start can strand the cell; retry from scratch
            sol = solve_micro(self.mesh, tmap, self.material, cons, inp,
                              tol=self.tol, max_cuts=8,
                              keep_saddle=need_tangent)
        self._state[k] = (sol.w.copy(), inp)
        if need_tangent:
            return effective_tangents(self.mesh, tmap, self.material, sol)
        pbar, qbar = effective_stress(self.mesh, tmap, self.material, inp,
                                      sol.w)
        return EffectiveResponse(pbar=pbar, qbar=qbar, dp_df=None,
                                 dp_dg=None, dq_df=None, dq_dg=None,
                                 volume=0.0)

    def checkpoint(self):
        self._saved = dict(self._state)

    def rollback(self):
        self._state = dict(self._saved)


class RomConstitutive:
    """Reduced cell per quadrature point, warm-started along the path."""

    def __init__(self, artifact):
        self.artifact = artifact
        self.material = artifact.material
        self._state = {}
        self._saved = {}

    def evaluate(self, k, inp, need_tangent=True):
        a0, prev = self._state.get(k, (None, None))
        st = rom_solve(self.artifact, inp, a0=a0, from_input=prev)
        self._state[k] = (st.a.copy(), inp)
        return rom_effective(self.artifact, st)

    def checkpoint(self):
        self._saved = dict(self._state)

    def rollback(self):
        self._state = dict(self._saved)


_WATCHDOG = 4


def _macro_newton(mesh, handle, z, free, tol, max_iter, f_ext):
    """Damped Newton on the free dofs with a nonmonotone watchdog, matching
    the reduced solver: near a cell transformation point the mixed matrix
    passes through indefiniteness, where monotone backtracking stalls."""
    z = z.copy()
    history = []
    for _ in range(max_iter):
        try:
            r, k = assemble_macro(mesh, handle, z, need_matrix=True)
        except (NewtonError, NonPositiveJacobianError) as exc:
            raise MacroStepError(str(exc)) from exc
        rn = float(np.linalg.norm((r - f_ext)[free]))
        history.append(rn)
        if rn <= tol:
            return z, r, len(history) - 1
        kff = k[free, :][:, free].tocsc()
        try:
            dz = splu(kff).solve(-(r - f_ext)[free])
        except RuntimeError as exc:
            raise MacroStepError(str(exc)) from exc
        if not np.all(np.isfinite(dz)):
            raise MacroStepError("non-finite macro update")
        r_ref = max(history[-_WATCHDOG:])
        alpha = 1.0
        while True:
            zt = z.copy()
            zt[free] += alpha * dz
            try:
                rt, _ = assemble_macro(mesh, handle, zt, need_matrix=False)
                rtn = float(np.linalg.norm((rt - f_ext)[free]))
            except (NewtonError, NonPositiveJacobianError, MacroStepError):
                rtn = np.inf
            if rtn <= tol or rtn <= (1.0 - 1e-4 * alpha) * r_ref:
                break
            alpha *= 0.5
            if alpha < 2.0 ** -12:
                raise MacroStepError("macro line search stalled")
        z = zt
    raise MacroStepError("macro Newton did not converge")


@dataclass
class MacroStep:
    index: int
    t: float
    z: np.ndarray
    reaction: float
    iterations: int


@dataclass
class TwoScaleResult:
    steps: list
    completed: bool
    cuts: int

    def curve(self):
        """Rows of (step index, load factor, reaction force)."""
        return np.array([[s.index, s.t, s.reaction] for s in self.steps])


def run_two_scale(mesh, bc, handle, n_steps=40, tol=None, max_iter=25,
                  max_cuts=8, perturb=0.0, progress=None):
    """March the Dirichlet program from 0 to full load.

    Steps that fail (constitutive divergence, stalled macro Newton) are
    halved against a global cut budget; the constitutive state rolls back
    to the last converged step each time. When the budget is exhausted the
    partial curve is returned with completed=False rather than raising.
    The reaction is the residual summed over the constrained reaction dofs,
    with sign chosen so compression is positive. A nonzero perturb applies
    that force at bc.perturb_dof during the first step only, to nudge the
    solver off a symmetric branch."""
    data = mesh.data()
    if tol is None:
        tol = 1e-8 * handle.material.c1 * float(data.wdet.sum())
    fixed = bc.fixed_dofs(mesh)
    free = np.setdiff1d(np.arange(mesh.n_dofs), fixed)
    z = mesh.initial_state()
    bc.apply(mesh, z, 0.0)
    f_zero = np.zeros(mesh.n_dofs)
    f_first = f_zero
    if perturb:
        if bc.perturb_dof < 0:
            raise ValueError("perturb requested but bc has no perturb_dof")
        f_first = f_zero.copy()
        f_first[bc.perturb_dof] = perturb
    handle.checkpoint()
    steps = []
    t_good = 0.0
    ds_max = 1.0 / max(int(n_steps), 1)
    ds = ds_max
    cuts = 0
    while t_good < 1.0 - 1e-12:
        t_try = min(1.0, t_good + ds)
        zt = z.copy()
        bc.apply(mesh, zt, t_try)
        f_ext = f_first if t_good == 0.0 else f_zero
        try:
            z_new, r, iters = _macro_newton(mesh, handle, zt, free, tol,
                                            max_iter, f_ext)
        except MacroStepError:
            handle.rollback()
            cuts += 1
            if cuts > max_cuts:
                return TwoScaleResult(steps, False, cuts)
            ds *= 0.5
            continue
        z = z_new
        t_good = t_try
        handle.checkpoint()
        reaction = -float(r[bc.reaction_dofs].sum())
        steps.append(MacroStep(len(steps) + 1, t_good, z.copy(), reaction,
                               iters))
        if progress is not None:
            progress(f"macro step {len(steps)}: t={t_good:.4f} "
                     f"R={reaction:.6g} iters={iters}")
        ds = min(2.0 * ds, ds_max)
    return TwoScaleResult(steps, True, cuts)
