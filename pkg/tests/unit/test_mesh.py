#!/usr/bin/env python3
# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Mesh unit tests."""

import logging
import math

import numpy as np
import pytest

from errors import DegenerateElementError
from mesh import (
    Mesh,
    build_square_mesh,
    diagonal_reflection_permutation,
    element_geometry,
    mesh_size,
    red_refine,
    triangle_geometry,
)

logger = logging.getLogger(__name__)


def unit_triangle(scale=1.0, shift=(0.0, 0.0)):
    """Mesh of the single triangle (0,0), (1,0), (0,1), scaled and shifted."""
    vertices = scale * np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return Mesh(vertices + np.asarray(shift), [[0, 1, 2]])


@pytest.mark.parametrize(
    "level,n_vertices,n_elements",
    [(0, 4, 2), (1, 9, 8), (3, 81, 128), (5, 1089, 2048)],
)
def test_square_mesh_counts(level, n_vertices, n_elements):
    """Counts follow n_e = 2 4^l and n_v = (2^l + 1)^2."""
    m = build_square_mesh(level, 1.5)
    assert m.n_vertices == n_vertices
    assert m.n_elements == n_elements
    assert m.level == level


@pytest.mark.parametrize("level", [0, 1, 4, 5])
def test_mesh_size(level):
    """The mesh size is the diagonal 3 sqrt(2) / 2^l."""
    m = build_square_mesh(level, 1.5)
    assert mesh_size(m) == pytest.approx(3 * math.sqrt(2) / 2**level)


def test_mesh_size_level_four():
    """Level 4 gives 3 sqrt(2) / 16."""
    assert mesh_size(build_square_mesh(4, 1.5)) == pytest.approx(
        0.265165, abs=1e-6
    )


def test_areas_and_orientation():
    """Element areas are positive and add up to the square's area."""
    m = build_square_mesh(4, 1.5)
    assert np.all(m.areas > 0)
    assert m.areas.sum() == pytest.approx(9.0, rel=1e-12)
    assert np.allclose(m.grad_bary.sum(axis=1), 0.0, atol=1e-12)


def test_edges_shared_by_at_most_two_elements():
    """Interior edges have two neighbours, boundary edges one."""
    m = build_square_mesh(3, 1.5)
    edges, element_to_edge = m.edges
    counts = np.bincount(element_to_edge.ravel(), minlength=len(edges))
    assert set(counts) == {1, 2}
    on_boundary = m.boundary_vertex_flags[edges].all(axis=1)
    assert np.all(on_boundary[counts == 1])
    assert np.count_nonzero(counts == 1) == 4 * 2**3


def test_boundary_flags():
    """Flags mark exactly the vertices with max(|x1|, |x2|) = w."""
    m = build_square_mesh(2, 1.5)
    expected = np.isclose(np.max(np.abs(m.vertices), axis=1), 1.5)
    assert np.array_equal(m.boundary_vertex_flags, expected)
    assert np.count_nonzero(expected) == 16


def test_vertex_order():
    """Vertices are sorted by (x2, x1) on the grid."""
    m = build_square_mesh(2, 1.5)
    keys = list(zip(m.vertices[:, 1], m.vertices[:, 0]))
    assert keys == sorted(keys)
    assert tuple(m.vertices[0]) == (-1.5, -1.5)
    assert tuple(m.vertices[-1]) == (1.5, 1.5)


def test_initial_split_along_diagonal():
    """The level 0 mesh splits the square along (-w,-w)-(w,w)."""
    m = build_square_mesh(0, 1.5)
    shared = set(m.elements[0]) & set(m.elements[1])
    corners = {tuple(m.vertices[i]) for i in shared}
    assert corners == {(-1.5, -1.5), (1.5, 1.5)}


def test_negative_level_rejected():
    with pytest.raises(ValueError):
        build_square_mesh(-1, 1.5)


def test_red_refine_children_keep_area():
    """Each red refinement splits a triangle into four quarter triangles."""
    vertices, elements = red_refine(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]])
    )
    areas, _ = triangle_geometry(vertices[elements])
    assert len(vertices) == 6
    assert np.allclose(areas, 0.125)


def test_element_geometry_reference_triangle():
    """Barycentric gradients of the reference triangle."""
    geometry = element_geometry(unit_triangle(), 0)
    assert geometry.area == pytest.approx(0.5)
    assert np.allclose(geometry.grad_bary, [[-1, -1], [1, 0], [0, 1]])


def test_element_geometry_translation_and_scaling():
    """Translation leaves geometry unchanged; scaling by 2 scales it."""
    reference = element_geometry(unit_triangle(), 0)
    moved = element_geometry(unit_triangle(shift=(3.0, -2.0)), 0)
    scaled = element_geometry(unit_triangle(scale=2.0), 0)
    assert moved.area == pytest.approx(reference.area)
    assert np.allclose(moved.grad_bary, reference.grad_bary)
    assert scaled.area == pytest.approx(4 * reference.area)
    assert np.allclose(scaled.grad_bary, 0.5 * reference.grad_bary)


def test_element_geometry_bad_index():
    with pytest.raises(IndexError):
        element_geometry(unit_triangle(), 1)


def test_degenerate_triangle():
    """Collinear corners raise a hard error."""
    corners = np.array([[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]])
    with pytest.raises(DegenerateElementError):
        triangle_geometry(corners)


def test_negatively_oriented_element_rejected():
    with pytest.raises(ValueError):
        Mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 2, 1]])


def test_reflection_permutation():
    """The swap of coordinates is an involution mapping elements."""
    m = build_square_mesh(3, 1.5)
    pi = diagonal_reflection_permutation(m)
    assert np.allclose(m.vertices[pi], m.vertices[:, ::-1])
    assert np.array_equal(pi[pi], np.arange(m.n_vertices))

    on_diagonal = np.isclose(m.vertices[:, 0], m.vertices[:, 1])
    assert np.array_equal(pi[on_diagonal], np.flatnonzero(on_diagonal))

    triangles = {tuple(sorted(e)) for e in m.elements}
    reflected = {tuple(sorted(pi[e])) for e in m.elements}
    assert triangles == reflected


def test_reflection_of_point():
    """(0.75, -0.75) is mapped to (-0.75, 0.75)."""
    m = build_square_mesh(2, 1.5)
    pi = diagonal_reflection_permutation(m)
    i = int(np.flatnonzero(np.all(m.vertices == [0.75, -0.75], axis=1))[0])
    assert tuple(m.vertices[pi[i]]) == (-0.75, 0.75)


def test_dump_format():
    """The dump starts with the counts, then vertices, then elements."""
    m = build_square_mesh(1, 1.5)
    lines = m.dump().strip().splitlines()
    assert lines[0].split() == ["9", "8"]
    assert len(lines) == 1 + 9 + 8
    x1, x2, flag = lines[1].split()
    assert (float(x1), float(x2), flag) == (-1.5, -1.5, "1")
    center = lines[1 + 4].split()
    assert (float(center[0]), float(center[1]), center[2]) == (0.0, 0.0, "0")
    assert all(len(line.split()) == 3 for line in lines[10:])
