"""1D Gauss-Legendre-Lobatto / Gauss-Legendre bases and tensor-product quadrature.

Interpolation always uses GLL nodes; quadrature defaults to a GL rule with the
same point count, which is exact two degrees higher and tolerates variable
coefficients.  All point evaluation goes through the second barycentric
formula so the Lagrange basis never has to leave nodal form.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import roots_jacobi

# Evaluation points closer than this to a node reuse the nodal value directly,
# avoiding the 0/0 in the second barycentric form.
NODE_SNAP_TOL = 1e-14


@dataclass(frozen=True)
class Basis1D:
    """Nodal 1D basis on [-1,1]: nodes, quadrature weights, barycentric weights."""

    order: int
    nodes: np.ndarray
    quad_weights: np.ndarray
    bary_weights: np.ndarray
    family: str  # "gll" or "gl"

    @property
    def n(self):
        return self.order + 1


def _legendre_val(p, x):
    """P_p(x) via the numpy Legendre series (coefficient basis e_p)."""
    c = np.zeros(p + 1)
    c[p] = 1.0
    return npleg.legval(x, c)


def barycentric_weights(nodes):
    """Barycentric weights by the direct product formula, normalized.

    W_j = 1 / prod_{k != j} (x_j - x_k), rescaled so max |W_j| = 1 and
    W_0 > 0.  The barycentric form is invariant under a common scale, and
    this normalization makes the alternating (-1)^j sign pattern literal.
    """
    x = np.asarray(nodes, dtype=float)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / diff.prod(axis=1)
    w = w / np.abs(w).max()
    if w[0] < 0:
        w = -w
    return w


def gll_nodes_weights(p):
    """GLL rule with p+1 points: zeros of (1-x^2) P_p'(x), exact to degree 2p-1."""
    if p < 1:
        raise ValueError("GLL basis needs order p >= 1 (at least two points)")
    nodes = np.empty(p + 1)
    nodes[0], nodes[-1] = -1.0, 1.0
    if p > 1:
        # interior GLL nodes are the roots of the Jacobi polynomial P^(1,1)_{p-1}
        nodes[1:-1] = roots_jacobi(p - 1, 1.0, 1.0)[0]
    weights = 2.0 / (p * (p + 1) * _legendre_val(p, nodes) ** 2)
    return Basis1D(p, nodes, weights, barycentric_weights(nodes), "gll")


def gl_nodes_weights(p):
    """GL rule with p+1 points (interior nodes), exact to degree 2p+1."""
    if p < 0:
        raise ValueError("order must be >= 0")
    nodes, weights = npleg.leggauss(p + 1)
    return Basis1D(p, nodes, weights, barycentric_weights(nodes), "gl")


def bary_eval(basis, values, x):
    """Evaluate the interpolant of nodal ``values`` at scalar point ``x``."""
    values = np.asarray(values, dtype=float)
    dx = x - basis.nodes
    hit = np.abs(dx) < NODE_SNAP_TOL
    if hit.any():
        return float(values[np.argmax(hit)])
    t = basis.bary_weights / dx
    return float(t @ values / t.sum())


def eval_matrix(basis, points):
    """Matrix V with V[q, j] = l_j(points[q]) for the basis's Lagrange functions.

    Applying V to nodal values interpolates them to ``points``; rows sum to 1.
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    dx = points[:, None] - basis.nodes[None, :]
    hit = np.abs(dx) < NODE_SNAP_TOL
    dx = np.where(hit, 1.0, dx)
    V = basis.bary_weights[None, :] / dx
    snap = hit.any(axis=1)
    V[snap] = 0.0
    V[hit] = 1.0
    V[~snap] /= V[~snap].sum(axis=1, keepdims=True)
    return V


def diff_matrix(basis):
    """Differentiation matrix D with D[i, j] = l_j'(x_i) at the basis nodes."""
    x, w = basis.nodes, basis.bary_weights
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    D = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


@dataclass(frozen=True)
class ReferenceElement2D:
    """Tensor-product reference square [-1,1]^2 with GLL interpolation and GL quadrature.

    Index convention is lexicographic, I = i + j*(p+1) with i the xi index,
    so 2D operators are Kronecker products kron(op_eta, op_xi).
    """

    order: int
    basis: Basis1D = field(repr=False)
    quad: Basis1D = field(repr=False)
    # 1D interpolation/differentiation from GLL nodes to the quadrature points
    interp_1d: np.ndarray = field(repr=False)
    deriv_1d: np.ndarray = field(repr=False)

    @property
    def n_nodes(self):
        return (self.order + 1) ** 2

    @property
    def n_quad(self):
        return self.quad.n**2

    @property
    def quad_weights_2d(self):
        w = self.quad.quad_weights
        return np.kron(w, w)

    @property
    def interp_2d(self):
        return np.kron(self.interp_1d, self.interp_1d)

    def deriv_2d(self, axis):
        """Evaluation of d/dxi (axis=0) or d/deta (axis=1) at the tensor quad points."""
        if axis == 0:
            return np.kron(self.interp_1d, self.deriv_1d)
        return np.kron(self.deriv_1d, self.interp_1d)

    def quad_points_on(self, x0, y0, dx, dy):
        """Physical coordinates of the tensor quadrature grid on an element."""
        qx = x0 + dx * (self.quad.nodes + 1.0) / 2.0
        qy = y0 + dy * (self.quad.nodes + 1.0) / 2.0
        X, Y = np.meshgrid(qx, qy)  # row index = eta, col = xi; flatten matches kron
        return X.ravel(), Y.ravel()

    def jacobian(self, dx, dy):
        """Constant Jacobian determinant of the affine map, dx*dy/4."""
        return dx * dy / 4.0


def reference_element(p, quad_family="gl", quad_order=None):
    """Reference element of order p; quadrature GL (default) or GLL of the same count."""
    basis = gll_nodes_weights(p)
    qo = p if quad_order is None else quad_order
    if quad_family == "gl":
        quad = gl_nodes_weights(qo)
    elif quad_family == "gll":
        quad = gll_nodes_weights(qo)
    else:
        raise ValueError(f"unknown quadrature family {quad_family!r}")
    interp = eval_matrix(basis, quad.nodes)
    deriv = interp @ diff_matrix(basis)
    return ReferenceElement2D(p, basis, quad, interp, deriv)


def quad_2d(ref, samples, dx, dy):
    """Integrate samples given on the tensor quadrature grid of an dx-by-dy element."""
    samples = np.asarray(samples, dtype=float).ravel()
    return float(ref.quad_weights_2d @ samples) * ref.jacobian(dx, dy)
