"""Element-local HDG machinery: block assembly, static condensation, reconstruction.

Per element the mixed form couples the flux pair q = (q_x, q_y), the potential
u, and the trace values lam on the four facets:

    flux_mass @ q - grad_coupling.T @ u + trace_to_flux @ lam = load_flux
    grad_coupling @ q + boundary_stab @ u + trace_to_potential @ lam = load_potential

Eliminating (q, u) leaves each element's dense contribution to the global
trace equation (`schur`, `schur_load`).  Dirichlet facets carry no trace
unknowns: the facet L2 projection of the boundary datum is folded into the
load vectors at assembly, and the corresponding trace columns are zeroed.

All operations here are pure per-element functions and safe to run in
parallel over elements.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .basis import eval_matrix, reference_element
from .mesh import NORMALS


class NumericalBreakdown(RuntimeError):
    pass


class UnsupportedOrder(ValueError):
    pass


def _trace_indices(p):
    """Volume node indices on each local side, ordered along the facet tangent."""
    n = p + 1
    return (
        np.arange(n),            # bottom: j = 0
        p + np.arange(n) * n,    # right:  i = p
        p * n + np.arange(n),    # top:    j = p
        np.arange(n) * n,        # left:   i = 0
    )


class LocalOps:
    """Reference-element data shared by every element of one (mesh, order) pair."""

    def __init__(self, mesh, p):
        self.mesh = mesh
        self.p = p
        self.ref = reference_element(p)
        self.nb = self.ref.n_nodes
        self.n1 = p + 1
        q = self.ref.quad
        self.w2 = self.ref.quad_weights_2d
        self.interp2 = self.ref.interp_2d
        self.dxi2 = self.ref.deriv_2d(0)
        self.deta2 = self.ref.deriv_2d(1)
        # 1D facet mass on [-1,1] for the GLL trace basis (GL rule = exact)
        E = self.ref.interp_1d
        self.mass1 = E.T @ (q.quad_weights[:, None] * E)
        self.trace_idx = _trace_indices(p)
        # facet quadrature positions along the tangent and the interp matrix
        self.facet_quad = q
        self.facet_interp = E
        # physical facet mass per side: bottom/top scale dx, left/right dy
        side_len = (mesh.dx, mesh.dy, mesh.dx, mesh.dy)
        self.facet_mass = [0.5 * side_len[s] * self.mass1 for s in range(4)]
        self.jac = self.ref.jacobian(mesh.dx, mesh.dy)

    def facet_project(self, func, elem, side):
        """Facet L2 projection of func onto the trace basis of one element side."""
        f = self.mesh.elem_to_facets[elem, side]
        x, y = self.mesh.facet_points(f, self.facet_quad.nodes)
        g = np.asarray(func(x, y), dtype=float)
        rhs = self.facet_interp.T @ (self.facet_quad.quad_weights * g)
        return np.linalg.solve(self.mass1, rhs)


@dataclass
class LocalSolver:
    """Factorized local blocks and the condensed facet operator of one element."""

    elem: int
    ops: LocalOps = field(repr=False)
    lu: tuple = field(repr=False)  # LU of [[flux_mass, -grad_coupling.T], [grad_coupling, boundary_stab]]
    trace_cols: np.ndarray = field(repr=False)  # [trace_to_flux; trace_to_potential], interior columns only
    load: np.ndarray = field(repr=False)  # [load_flux; load_potential]
    facet_coupling: np.ndarray = field(repr=False)  # [facet_flux | tau * facet_stab], all four sides
    facet_mass_stab: np.ndarray = field(repr=False)  # tau * facet mass on interior sides (block diag)
    interior_side: np.ndarray = field(repr=False)  # bool per local side
    schur: np.ndarray = field(default=None, repr=False)
    schur_load: np.ndarray = field(default=None, repr=False)

    @property
    def n_trace(self):
        return 4 * self.ops.n1


@dataclass
class LocalBlocks:
    """Raw (unfactorized) local blocks of one element, for assembly and oracles."""

    flux_mass: np.ndarray  # one component; the flux block is this twice
    grad_coupling: np.ndarray  # int w * div(q), both components side by side
    boundary_stab: np.ndarray  # tau-weighted mass on the whole element boundary
    trace_to_flux: np.ndarray  # interior-facet columns only
    trace_to_potential: np.ndarray
    facet_coupling: np.ndarray  # facet equations applied to (q, u)
    facet_mass_stab: np.ndarray  # tau * facet mass, interior sides
    load: np.ndarray  # (load_flux, load_potential) with Dirichlet data folded
    lam_bc: np.ndarray  # projected boundary datum in the local trace layout
    interior_side: np.ndarray

    def matrix(self):
        """The local block matrix [[flux_mass, -grad'], [grad, stab]]."""
        nb = self.flux_mass.shape[0]
        n = 3 * nb
        mat = np.zeros((n, n))
        mat[:nb, :nb] = self.flux_mass
        mat[nb: 2 * nb, nb: 2 * nb] = self.flux_mass
        mat[: 2 * nb, 2 * nb:] = -self.grad_coupling.T
        mat[2 * nb:, : 2 * nb] = self.grad_coupling
        mat[2 * nb:, 2 * nb:] = self.boundary_stab
        return mat

    @property
    def trace_cols(self):
        return np.vstack([self.trace_to_flux, self.trace_to_potential])


def local_blocks(mesh, elem, spec, ops, tau_per_facet=None):
    """Quadrature assembly of every local block of one element."""
    p1, nb = ops.n1, ops.nb
    x0, y0 = mesh.elem_origin(elem)
    qx, qy = ops.ref.quad_points_on(x0, y0, mesh.dx, mesh.dy)
    kq = np.asarray(spec.coefficient(qx, qy), dtype=float)
    if np.any(kq <= 0.0):
        raise NumericalBreakdown(f"coefficient not positive on element {elem}")
    fq = np.asarray(spec.source(qx, qy), dtype=float)

    wj = ops.w2 * ops.jac
    flux_mass = ops.interp2.T @ ((wj / kq)[:, None] * ops.interp2)
    # int w * dq/dx and int w * dq/dy (constant metric on the affine element)
    bx = 0.5 * mesh.dy * ops.interp2.T @ (ops.w2[:, None] * ops.dxi2)
    by = 0.5 * mesh.dx * ops.interp2.T @ (ops.w2[:, None] * ops.deta2)
    grad_coupling = np.hstack([bx, by])

    facets = mesh.elem_to_facets[elem]
    if tau_per_facet is None:
        tau = np.full(4, spec.tau)
    else:
        tau = np.asarray(tau_per_facet, dtype=float)[facets]
    interior_side = ~mesh.facet_boundary[facets]

    boundary_stab = np.zeros((nb, nb))
    trace_to_flux = np.zeros((2 * nb, 4 * p1))
    trace_to_potential = np.zeros((nb, 4 * p1))
    facet_coupling = np.zeros((4 * p1, 3 * nb))
    facet_mass_stab = np.zeros((4 * p1, 4 * p1))
    for s in range(4):
        m = ops.facet_mass[s]
        idx = ops.trace_idx[s]
        rows = slice(s * p1, (s + 1) * p1)
        boundary_stab[np.ix_(idx, idx)] += tau[s] * m
        for d in range(2):
            ns = NORMALS[s, d]
            if ns == 0.0:
                continue
            trace_to_flux[d * nb + idx, rows] += ns * m
            facet_coupling[rows, d * nb + idx] += ns * m
        trace_to_potential[idx, rows] += -tau[s] * m
        facet_coupling[rows, 2 * nb + idx] += tau[s] * m
        if interior_side[s]:
            facet_mass_stab[rows, rows] += tau[s] * m

    # fold Dirichlet data: boundary trace slots take the facet projection of g_D
    lam_bc = np.zeros(4 * p1)
    for s in range(4):
        if not interior_side[s]:
            lam_bc[s * p1:(s + 1) * p1] = ops.facet_project(spec.dirichlet, elem, s)
    load_flux = -trace_to_flux @ lam_bc
    load_potential = ops.interp2.T @ (wj * fq) - trace_to_potential @ lam_bc

    mask = np.repeat(interior_side, p1)
    trace_to_flux[:, ~mask] = 0.0
    trace_to_potential[:, ~mask] = 0.0

    return LocalBlocks(
        flux_mass=flux_mass,
        grad_coupling=grad_coupling,
        boundary_stab=boundary_stab,
        trace_to_flux=trace_to_flux,
        trace_to_potential=trace_to_potential,
        facet_coupling=facet_coupling,
        facet_mass_stab=facet_mass_stab,
        load=np.concatenate([load_flux, load_potential]),
        lam_bc=lam_bc,
        interior_side=interior_side,
    )


def assemble_local(mesh, elem, spec, ops, tau_per_facet=None):
    """Assemble and factorize the local HDG blocks of one element."""
    blocks = local_blocks(mesh, elem, spec, ops, tau_per_facet)
    try:
        lu = lu_factor(blocks.matrix())
    except np.linalg.LinAlgError as exc:  # pragma: no cover - tau > 0 keeps this regular
        raise NumericalBreakdown(f"singular local matrix on element {elem}") from exc
    return LocalSolver(
        elem=elem,
        ops=ops,
        lu=lu,
        trace_cols=blocks.trace_cols,
        load=blocks.load,
        facet_coupling=blocks.facet_coupling,
        facet_mass_stab=blocks.facet_mass_stab,
        interior_side=blocks.interior_side,
    )


def condense(ls):
    """Schur-complement the local degrees of freedom onto the element's facets.

    The element contributes facet_coupling @ (q, u) - facet_mass_stab @ lam to
    its facet equations; substituting the local solve
    (q, u) = local_inv @ (load - trace_cols @ lam) gives
    schur @ lam = schur_load with
        schur = facet_coupling @ local_inv @ trace_cols + facet_mass_stab
        schur_load = facet_coupling @ local_inv @ load
    """
    rhs = np.column_stack([ls.trace_cols, ls.load])
    sol = lu_solve(ls.lu, rhs)
    ls.schur = ls.facet_coupling @ sol[:, :-1] + ls.facet_mass_stab
    ls.schur_load = ls.facet_coupling @ sol[:, -1]
    return ls.schur, ls.schur_load


def reconstruct(ls, lam):
    """Solve the local system for (q, u) given the element's facet trace values.

    lam has 4*(p+1) entries in local side order; entries on Dirichlet sides are
    ignored (the projected boundary datum was folded in at assembly).
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (ls.n_trace,):
        raise ValueError(f"expected {ls.n_trace} trace values, got {lam.shape}")
    sol = lu_solve(ls.lu, ls.load - ls.trace_cols @ lam)
    nb = ls.ops.nb
    return sol[: 2 * nb], sol[2 * nb:]


class PostprocessOps:
    """Shared data for the order-raising local Neumann solve (order p -> p+1)."""

    def __init__(self, ops):
        if ops.p < 1:
            raise UnsupportedOrder("postprocessing needs p >= 1")
        self.ops = ops
        self.ref = reference_element(ops.p + 1)
        self.nb = self.ref.n_nodes
        # evaluate the order-p basis on the order-(p+1) quadrature grid
        cross = eval_matrix(ops.ref.basis, self.ref.quad.nodes)
        self.interp_from_p = np.kron(cross, cross)
        self.w2 = self.ref.quad_weights_2d
        self.dxi2 = self.ref.deriv_2d(0)
        self.deta2 = self.ref.deriv_2d(1)
        mesh = ops.mesh
        self.stiff = (mesh.dy / mesh.dx) * self.dxi2.T @ (self.w2[:, None] * self.dxi2)
        self.stiff += (mesh.dx / mesh.dy) * self.deta2.T @ (self.w2[:, None] * self.deta2)
        self.jac = self.ref.jacobian(mesh.dx, mesh.dy)
        self.mean_row = self.jac * (self.ref.interp_2d.T @ self.w2)
        n = self.nb
        kkt = np.zeros((n + 1, n + 1))
        kkt[:n, :n] = self.stiff
        kkt[:n, n] = self.mean_row
        kkt[n, :n] = self.mean_row
        self.kkt_lu = lu_factor(kkt)


def postprocess(ls, q, u, pops, spec):
    """Superconvergent potential: local Neumann problem at order p+1.

    Solves (grad u*, grad w) = -(K^-1 q_h, grad w) over the element with the
    element mean of u* constrained to the mean of u_h.
    """
    mesh = ls.ops.mesh
    nb = ls.ops.nb
    x0, y0 = mesh.elem_origin(ls.elem)
    qx, qy = pops.ref.quad_points_on(x0, y0, mesh.dx, mesh.dy)
    kq = np.asarray(spec.coefficient(qx, qy), dtype=float)
    qh_x = pops.interp_from_p @ q[:nb]
    qh_y = pops.interp_from_p @ q[nb:]
    rhs = -0.5 * mesh.dy * pops.dxi2.T @ (pops.w2 * qh_x / kq)
    rhs += -0.5 * mesh.dx * pops.deta2.T @ (pops.w2 * qh_y / kq)
    mean_u = pops.jac * pops.w2 @ (pops.interp_from_p @ u)
    sol = lu_solve(pops.kkt_lu, np.concatenate([rhs, [mean_u]]))
    return sol[:-1]
