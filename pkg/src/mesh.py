# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Triangulations of the square obtained by uniform red refinement."""

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from errors import DegenerateElementError
from utils import render

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ElementGeometry:
    """Geometry of a single affine triangle.

    Attributes:
        area: positive area of the triangle.
        grad_bary: (3, 2) array with the constant gradients of the three
            barycentric coordinates.
    """

    area: float
    grad_bary: np.ndarray


def triangle_geometry(corners):
    """Compute areas and barycentric gradients of a batch of triangles.

    Args:
        corners: (n, 3, 2) array of triangle vertex coordinates.

    Returns:
        areas: (n,) array of absolute areas.
        grads: (n, 3, 2) array of barycentric gradients.

    Raises:
        DegenerateElementError: if some triangle has zero area.
    """
    corners = np.asarray(corners, dtype=float)
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    scale = np.maximum(
        np.einsum("ij,ij->i", e1, e1), np.einsum("ij,ij->i", e2, e2)
    )
    degenerate = np.abs(det) <= 1e-14 * scale
    if np.any(degenerate):
        raise DegenerateElementError(
            f"{int(np.count_nonzero(degenerate))} element(s) have zero area, "
            f"first at position {int(np.argmax(degenerate))}"
        )

    # Rows of the inverse Jacobian transpose give the gradients of
    # lambda_1 and lambda_2; lambda_0 = 1 - lambda_1 - lambda_2.
    grad1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
    grad2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
    grads = np.stack([-grad1 - grad2, grad1, grad2], axis=1)
    return 0.5 * np.abs(det), grads


def mesh_edges(elements):
    """Determine the unique edges of a triangulation.

    Local edge j of an element (a, b, c) joins vertices (a, b), (b, c) and
    (c, a) for j = 0, 1, 2.

    Args:
        elements: (n_e, 3) integer array of vertex indices.

    Returns:
        edges: (n_ed, 2) array of sorted vertex pairs.
        element_to_edge: (n_e, 3) array of edge indices per element.
    """
    elements = np.asarray(elements)
    local = np.stack(
        [elements[:, [0, 1]], elements[:, [1, 2]], elements[:, [2, 0]]],
        axis=1,
    )
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


def red_refine(vertices, elements):
    """Split every triangle into four congruent children.

    New vertices are the edge midpoints, appended after the existing ones.
    Children keep the orientation of their parent.

    Args:
        vertices: (n_v, d) array of coordinates.
        elements: (n_e, 3) integer array.

    Returns:
        The refined (vertices, elements) pair.
    """
    vertices = np.asarray(vertices, dtype=float)
    elements = np.asarray(elements)
    edges, element_to_edge = mesh_edges(elements)
    midpoints = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    new_vertices = np.vstack([vertices, midpoints])

    a, b, c = elements.T
    m_ab, m_bc, m_ca = (len(vertices) + element_to_edge).T
    new_elements = np.concatenate(
        [
            np.stack([a, m_ab, m_ca], axis=1),
            np.stack([m_ab, b, m_bc], axis=1),
            np.stack([m_ca, m_bc, c], axis=1),
            np.stack([m_ab, m_bc, m_ca], axis=1),
        ]
    )
    return new_vertices, new_elements


class Mesh:
    """Conforming triangulation with read-only connectivity and geometry.

    Attributes:
        vertices: (n_v, 2) coordinates.
        elements: (n_e, 3) positively oriented vertex triples.
        level: number of uniform refinements of the initial partition.
        half_width: w for the domain (-w, w)^2, or None for other domains.
    """

    def __init__(self, vertices, elements, level=0, half_width=None):
        """Construct.

        Args:
            vertices: (n_v, 2) coordinates.
            elements: (n_e, 3) vertex triples.
            level: refinement level of the mesh.
            half_width: half width of the square domain, if any.

        Raises:
            ValueError: if the arrays have the wrong shape, or some element
                is negatively oriented.
        """
        vertices = np.array(vertices, dtype=float)
        elements = np.array(elements, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (n_v, 2)")
        if elements.ndim != 2 or elements.shape[1] != 3:
            raise ValueError("elements must have shape (n_e, 3)")
        if elements.size and (
            elements.min() < 0 or elements.max() >= len(vertices)
        ):
            raise ValueError("element references a missing vertex")
        vertices.setflags(write=False)
        elements.setflags(write=False)
        self.vertices = vertices
        self.elements = elements
        self.level = int(level)
        self.half_width = half_width

        corners = vertices[elements]
        e1 = corners[:, 1] - corners[:, 0]
        e2 = corners[:, 2] - corners[:, 0]
        signed = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(signed < 0):
            raise ValueError("elements must be positively oriented")

    def __repr__(self):
        """Short description of the mesh."""
        return (
            f"Mesh(level={self.level}, n_vertices={self.n_vertices}, "
            f"n_elements={self.n_elements})"
        )

    @property
    def n_vertices(self):
        """Number of vertices."""
        return len(self.vertices)

    @property
    def n_elements(self):
        """Number of elements."""
        return len(self.elements)

    @cached_property
    def geometry(self):
        """Areas and barycentric gradients of all elements."""
        areas, grads = triangle_geometry(self.vertices[self.elements])
        areas.setflags(write=False)
        grads.setflags(write=False)
        return areas, grads

    @property
    def areas(self):
        """Element areas."""
        return self.geometry[0]

    @property
    def grad_bary(self):
        """Barycentric gradients per element."""
        return self.geometry[1]

    @cached_property
    def edges(self):
        """Unique edges and the element-to-edge map."""
        return mesh_edges(self.elements)

    @cached_property
    def boundary_vertex_flags(self):
        """Boolean flag per vertex marking the boundary of the domain."""
        if self.half_width is not None:
            extent = np.max(np.abs(self.vertices), axis=1)
            flags = np.abs(extent - self.half_width) <= 1e-12 * self.half_width
        else:
            edges, element_to_edge = self.edges
            counts = np.bincount(
                element_to_edge.ravel(), minlength=len(edges)
            )
            flags = np.zeros(self.n_vertices, dtype=bool)
            flags[edges[counts == 1].ravel()] = True
        flags.setflags(write=False)
        return flags

    def dump(self):
        """Serialize the mesh in the plain text exchange format.

        Returns:
            The header line ``n_v n_e``, one ``x1 x2 boundary_flag`` line per
            vertex and one ``i j k`` line per element.
        """
        return render(
            "mesh.jinja",
            {
                "n_vertices": self.n_vertices,
                "n_elements": self.n_elements,
                "vertices": [
                    (repr(float(x1)), repr(float(x2)), int(flag))
                    for (x1, x2), flag in zip(
                        self.vertices, self.boundary_vertex_flags
                    )
                ],
                "elements": [tuple(int(i) for i in e) for e in self.elements],
            },
        )


def grid_spacing(level, half_width):
    """Distance between neighbouring grid lines at a refinement level.

    Args:
        level: refinement level.
        half_width: half width of the square.

    Returns:
        2 w / 2^level.
    """
    return 2.0 * half_width / 2**level


def square_mesh_size(level, half_width):
    """Maximal element diameter of the square mesh without building it.

    Args:
        level: refinement level.
        half_width: half width of the square.

    Returns:
        The diagonal length 2 sqrt(2) w / 2^level.
    """
    return math.sqrt(2.0) * grid_spacing(level, half_width)


def build_square_mesh(level, half_width):
    """Build the uniform triangulation of (-w, w)^2.

    The initial partition splits the square along the diagonal from (-w, -w)
    to (w, w); each refinement applies :func:`red_refine`. Vertices are
    finally renumbered lexicographically by (x2, x1).

    Args:
        level: number of uniform refinements, at least 0.
        half_width: w > 0.

    Returns:
        The refined Mesh.

    Raises:
        ValueError: for a negative level or nonpositive half width.
    """
    if level < 0:
        raise ValueError(f"level must be nonnegative, got {level}")
    if half_width <= 0:
        raise ValueError(f"half_width must be positive, got {half_width}")

    w = float(half_width)
    vertices = np.array([[-w, -w], [w, -w], [w, w], [-w, w]])
    elements = np.array([[0, 1, 2], [0, 2, 3]])
    for _ in range(level):
        vertices, elements = red_refine(vertices, elements)

    n = 2**level
    spacing = grid_spacing(level, w)
    keys = np.rint((vertices + w) / spacing).astype(np.int64)
    order = np.lexsort((keys[:, 0], keys[:, 1]))
    renumber = np.empty_like(order)
    renumber[order] = np.arange(len(order))
    keys = keys[order]
    vertices = -w + keys * spacing
    # Snap the far boundary exactly onto w.
    vertices[keys == n] = w
    elements = renumber[elements]

    logger.debug(
        f"built square mesh level={level}: "
        f"{len(vertices)} vertices, {len(elements)} elements"
    )
    return Mesh(vertices, elements, level=level, half_width=w)


def mesh_size(m):
    """Maximal element diameter, i.e. the longest edge.

    Args:
        m: the mesh.

    Returns:
        The mesh size h.
    """
    edges, _ = m.edges
    vectors = m.vertices[edges[:, 1]] - m.vertices[edges[:, 0]]
    return float(np.max(np.linalg.norm(vectors, axis=1)))


def element_geometry(m, e):
    """Area and barycentric gradients of one element.

    Args:
        m: the mesh.
        e: element index.

    Returns:
        ElementGeometry of element e.

    Raises:
        IndexError: if e is not an element index.
    """
    if not 0 <= e < m.n_elements:
        raise IndexError(f"element {e} out of range [0, {m.n_elements})")
    areas, grads = triangle_geometry(m.vertices[m.elements[e]][None])
    return ElementGeometry(area=float(areas[0]), grad_bary=grads[0])


def diagonal_reflection_permutation(m):
    """Permutation of vertices induced by the swap (x1, x2) -> (x2, x1).

    Args:
        m: a mesh built by :func:`build_square_mesh`.

    Returns:
        Integer array pi with vertices[pi[i]] == swapped(vertices[i]).

    Raises:
        ValueError: if some reflected vertex is not a vertex of the mesh.
    """
    spacing = grid_spacing(m.level, m.half_width)
    keys = np.rint((m.vertices + m.half_width) / spacing).astype(np.int64)
    index = {(int(k1), int(k2)): i for i, (k1, k2) in enumerate(keys)}
    permutation = np.empty(m.n_vertices, dtype=np.int64)
    for i, (k1, k2) in enumerate(keys):
        j = index.get((int(k2), int(k1)))
        if j is None:
            raise ValueError(
                f"reflection of vertex {i} at {tuple(m.vertices[i])} "
                "is not a mesh vertex"
            )
        permutation[i] = j
    return permutation
