# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""P1 finite element spaces, assembly, interpolation and norms."""

import logging
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from literals import L2_SUBDIV
from mesh import red_refine

logger = logging.getLogger(__name__)

_MASS_PATTERN = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])


class FeFunction:
    """Continuous piecewise affine function given by its nodal values.

    Attributes:
        mesh: the owning mesh.
        coeffs: (n_v,) array of nodal values.
    """

    def __init__(self, mesh, coeffs):
        """Construct.

        Args:
            mesh: the owning mesh.
            coeffs: nodal values, one per vertex.

        Raises:
            ValueError: if the number of values does not match the mesh.
        """
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (mesh.n_vertices,):
            raise ValueError(
                f"expected {mesh.n_vertices} nodal values, "
                f"got shape {coeffs.shape}"
            )
        self.mesh = mesh
        self.coeffs = coeffs

    def __repr__(self):
        """Short description of the function."""
        return f"FeFunction(n={len(self.coeffs)}, mesh={self.mesh!r})"

    @classmethod
    def zeros(cls, mesh):
        """Return the zero function on a mesh."""
        return cls(mesh, np.zeros(mesh.n_vertices))

    def copy(self):
        """Return an independent copy."""
        return FeFunction(self.mesh, self.coeffs.copy())

    def satisfies(self, mask):
        """Report whether the constrained coefficients are exactly zero.

        Args:
            mask: DirichletMask of the space.

        Returns:
            True if the function belongs to the constrained space.
        """
        return bool(np.all(self.coeffs[mask.constrained] == 0.0))


class DirichletMask:
    """Vertices whose values are constrained to zero.

    Attributes:
        constrained: boolean flag per vertex.
    """

    def __init__(self, mesh, constrained):
        """Construct.

        Args:
            mesh: the mesh the mask refers to.
            constrained: boolean flag per vertex.

        Raises:
            ValueError: if the mask has the wrong length or constrains an
                interior vertex.
        """
        constrained = np.array(constrained, dtype=bool)
        if constrained.shape != (mesh.n_vertices,):
            raise ValueError(
                f"mask needs {mesh.n_vertices} flags, got {constrained.shape}"
            )
        if np.any(constrained & ~mesh.boundary_vertex_flags):
            raise ValueError("only boundary vertices may be constrained")
        constrained.setflags(write=False)
        self.constrained = constrained
        self.free = np.flatnonzero(~constrained)

    @classmethod
    def boundary(cls, mesh):
        """Homogeneous Dirichlet conditions on the whole boundary."""
        return cls(mesh, mesh.boundary_vertex_flags)

    @classmethod
    def neumann(cls, mesh):
        """Empty mask, i.e. pure Neumann conditions."""
        return cls(mesh, np.zeros(mesh.n_vertices, dtype=bool))

    @property
    def is_empty(self):
        """Whether no vertex is constrained."""
        return not bool(np.any(self.constrained))

    def restrict(self, matrix):
        """Eliminate constrained rows and columns.

        Args:
            matrix: full (n_v, n_v) sparse matrix.

        Returns:
            The reduced CSR matrix acting on the free vertices.
        """
        matrix = sp.csr_matrix(matrix)
        if self.is_empty:
            return matrix
        return matrix[self.free][:, self.free].tocsr()

    def expand(self, values):
        """Embed values on the free vertices into a full-length vector.

        Args:
            values: array with one value per free vertex.

        Returns:
            Full vector with zeros at constrained vertices.
        """
        full = np.zeros(len(self.constrained))
        full[self.free] = values
        return full

    def apply(self, u):
        """Return a copy of u with constrained values set to zero."""
        coeffs = u.coeffs.copy()
        coeffs[self.constrained] = 0.0
        return FeFunction(u.mesh, coeffs)


def _assemble(m, local):
    """Sum element blocks (n_e, 3, 3) into a global CSR matrix."""
    rows = np.broadcast_to(m.elements[:, :, None], local.shape)
    cols = np.broadcast_to(m.elements[:, None, :], local.shape)
    matrix = sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())),
        shape=(m.n_vertices, m.n_vertices),
    )
    return matrix.tocsr()


def assemble_mass(m, lumped=False):
    """Assemble the P1 mass matrix.

    Args:
        m: the mesh.
        lumped: if True, return the diagonal matrix of row sums.

    Returns:
        Sparse symmetric positive definite mass matrix.
    """
    local = (m.areas / 12.0)[:, None, None] * _MASS_PATTERN
    mass = _assemble(m, local)
    if lumped:
        return sp.diags(np.asarray(mass.sum(axis=1)).ravel()).tocsr()
    return mass


def assemble_weighted_stiffness(m, weights):
    """Assemble sum_T w_T (grad phi_i, grad phi_j)_T.

    Args:
        m: the mesh.
        weights: positive weight per element.

    Returns:
        Sparse symmetric positive semidefinite matrix.

    Raises:
        ValueError: for a wrong number of weights or a nonpositive weight.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (m.n_elements,):
        raise ValueError(
            f"expected {m.n_elements} element weights, got {weights.shape}"
        )
    if not np.all(weights > 0):
        bad = int(np.argmin(weights > 0))
        raise ValueError(
            f"element weights must be positive; weight[{bad}]={weights[bad]}"
        )
    grads = m.grad_bary
    local = np.einsum("eik,ejk->eij", grads, grads)
    local *= (weights * m.areas)[:, None, None]
    return _assemble(m, local)


def assemble_stiffness(m):
    """Assemble the standard P1 Laplace stiffness matrix."""
    return assemble_weighted_stiffness(m, np.ones(m.n_elements))


def assemble_gradient(m):
    """Matrix mapping nodal values to stacked element gradients.

    Row 2e + c holds the c-th component of the gradient on element e.

    Args:
        m: the mesh.

    Returns:
        Sparse (2 n_e, n_v) matrix.
    """
    grads = m.grad_bary
    n_e = m.n_elements
    rows = (2 * np.arange(n_e)[:, None, None] + np.arange(2)[None, None, :])
    rows = np.broadcast_to(rows, (n_e, 3, 2))
    cols = np.broadcast_to(m.elements[:, :, None], (n_e, 3, 2))
    matrix = sp.coo_matrix(
        (grads.ravel(), (rows.ravel(), cols.ravel())),
        shape=(2 * n_e, m.n_vertices),
    )
    return matrix.tocsr()


def element_gradients(m, u):
    """Constant gradient of a P1 function on every element.

    Args:
        m: the mesh.
        u: FeFunction or nodal array on m.

    Returns:
        (n_e, 2) array of gradients.
    """
    coeffs = _coeffs(m, u)
    return np.einsum("eij,ei->ej", m.grad_bary, coeffs[m.elements])


def nodal_interpolate(m, f):
    """Nodal interpolation of a scalar field.

    Args:
        m: the mesh.
        f: vectorized callable mapping (n, 2) points to (n,) values.

    Returns:
        FeFunction with coeffs[i] = f(vertex_i).
    """
    return FeFunction(m, np.asarray(f(m.vertices), dtype=float))


@lru_cache(maxsize=None)
def reference_quadrature(subdiv):
    """Edge-midpoint rule on 4^subdiv uniform sub-triangles.

    Args:
        subdiv: number of red refinements of the reference triangle.

    Returns:
        points: (q, 3) barycentric coordinates.
        weights: (q,) weights summing to one.
    """
    vertices = np.eye(3)
    triangles = np.array([[0, 1, 2]])
    for _ in range(subdiv):
        vertices, triangles = red_refine(vertices, triangles)
    corners = vertices[triangles]
    points = 0.5 * np.concatenate(
        [
            corners[:, 0] + corners[:, 1],
            corners[:, 1] + corners[:, 2],
            corners[:, 2] + corners[:, 0],
        ]
    )
    weights = np.full(len(points), 1.0 / len(points))
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


def l2_error(m, u, f_exact, subdiv=L2_SUBDIV):
    """L2 distance between a P1 function and an analytic field.

    Args:
        m: the mesh.
        u: FeFunction or nodal array.
        f_exact: vectorized callable mapping (n, 2) points to (n,) values.
        subdiv: sub-triangle refinement depth of the quadrature.

    Returns:
        Approximation of ||u - f_exact||_{L2}.

    Raises:
        ValueError: for a negative subdiv.
    """
    if subdiv < 0:
        raise ValueError(f"subdiv must be nonnegative, got {subdiv}")
    coeffs = _coeffs(m, u)
    points, weights = reference_quadrature(subdiv)
    corners = m.vertices[m.elements]
    physical = np.einsum("qk,ekd->eqd", points, corners)
    u_values = np.einsum("qk,ek->eq", points, coeffs[m.elements])
    f_values = np.asarray(
        f_exact(physical.reshape(-1, 2)), dtype=float
    ).reshape(u_values.shape)
    squared = ((u_values - f_values) ** 2) @ weights
    return float(np.sqrt(max(squared @ m.areas, 0.0)))


def total_variation(m, u):
    """Total variation of a P1 function, sum_T |T| |grad u_T|.

    Args:
        m: the mesh.
        u: FeFunction or nodal array.

    Returns:
        Nonnegative total variation.
    """
    gradients = element_gradients(m, u)
    return float(m.areas @ np.linalg.norm(gradients, axis=1))


def m_norm(u, M):
    """Norm induced by a symmetric positive definite matrix.

    Args:
        u: FeFunction or vector.
        M: matrix of matching dimension.

    Returns:
        sqrt(u^T M u).

    Raises:
        ValueError: if the dimensions do not match.
    """
    coeffs = u.coeffs if isinstance(u, FeFunction) else np.asarray(u)
    if M.shape != (len(coeffs), len(coeffs)):
        raise ValueError(
            f"vector of length {len(coeffs)} does not match matrix {M.shape}"
        )
    return float(np.sqrt(max(coeffs @ (M @ coeffs), 0.0)))


def integral(m, u):
    """Exact integral of a P1 function over the domain."""
    coeffs = _coeffs(m, u)
    return float(m.areas @ coeffs[m.elements].mean(axis=1))


def max_norm(u):
    """Maximum norm of a P1 function, attained at a vertex."""
    coeffs = u.coeffs if isinstance(u, FeFunction) else np.asarray(u)
    return float(np.max(np.abs(coeffs))) if len(coeffs) else 0.0


def _coeffs(m, u):
    """Nodal array of u, checked against the mesh."""
    if isinstance(u, FeFunction):
        if u.mesh is not m and u.mesh.n_vertices != m.n_vertices:
            raise ValueError("function lives on a different mesh")
        return u.coeffs
    coeffs = np.asarray(u, dtype=float)
    if coeffs.shape != (m.n_vertices,):
        raise ValueError(
            f"expected {m.n_vertices} nodal values, got {coeffs.shape}"
        )
    return coeffs
