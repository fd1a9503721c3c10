from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biotplate.errors import GeometryError, MeshingError
from biotplate.geometry import (BOTTOM, FLUID, FLUID_DIRICHLET, FLUID_NEUMANN, GAMMA, LEFT,
                                RIGHT, SOLID, SOLID_DIRICHLET, TOP, PeriodicMesh,
                                build_cell_geometry, classify_boundaries, extrude_layer_mesh,
                                generate_periodic_cell_mesh, mesh_quality_report)


def test_cavity_fluid_area(cavity_geom, cavity_mesh):
    assert cavity_geom.fluid_area == pytest.approx(math.pi / 16, abs=1e-15)
    # the interface is a regular polygon inscribed in the circle
    n_sides = cavity_mesh.edges_with(GAMMA).size
    inscribed = 0.5 * n_sides * 0.25 ** 2 * math.sin(2 * math.pi / n_sides)
    assert cavity_mesh.region_area(FLUID) == pytest.approx(inscribed, rel=1e-12)


@pytest.mark.parametrize("params, code", [
    ({"center": (0.5, 0.0), "radius": 1.2}, "geometry-touches-top-bottom"),
    ({"center": (0.5, 0.0), "radius": 0.0}, "degenerate-region"),
    ({"center": (0.5, 0.0), "radius": 0.6}, "degenerate-region"),
    ({"center": (0.5, 0.9), "radius": 0.2}, "geometry-touches-top-bottom"),
    ({"center": (0.5, 0.0)}, "missing-parameter"),
])
def test_cavity_errors(params, code):
    with pytest.raises(GeometryError) as exc:
        build_cell_geometry("cavity", **params)
    assert exc.value.code == code


@pytest.mark.parametrize("band, code", [
    ((0.3, -0.3), "degenerate-region"),
    ((-1.0, 0.3), "geometry-touches-top-bottom"),
])
def test_channel_errors(band, code):
    with pytest.raises(GeometryError) as exc:
        build_cell_geometry("channel", band=band)
    assert exc.value.code == code


def test_unknown_family():
    with pytest.raises(GeometryError):
        build_cell_geometry("lattice")


def test_channel_moments(channel_geom, channel_mesh):
    assert channel_geom.fluid_area == pytest.approx(0.6)
    assert channel_geom.fluid_moment == pytest.approx(0.0, abs=1e-15)
    assert channel_mesh.region_area(FLUID) == pytest.approx(0.6, abs=1e-12)
    y2 = channel_mesh.nodes[channel_mesh.triangles].mean(axis=1)[:, 1]
    f = channel_mesh.tri_tags == FLUID
    moment = float(np.sum(channel_mesh.areas()[f] * y2[f]))
    assert moment == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("mesh_name", ["cavity_mesh", "channel_mesh"])
def test_mesh_invariants(mesh_name, request):
    mesh = request.getfixturevalue(mesh_name)
    assert np.all(mesh.areas() > 0)
    assert mesh.region_area(FLUID) + mesh.region_area(SOLID) == pytest.approx(2.0, abs=1e-10)
    left, right = mesh.periodic_pairs.T
    d = mesh.nodes[right] - mesh.nodes[left]
    assert np.abs(d - [1.0, 0.0]).max() <= 1e-12


def test_periodic_lateral_sets_match(cavity_mesh):
    n = cavity_mesh.nodes
    left = np.sort(n[np.abs(n[:, 0]) < 1e-12, 1])
    right = np.sort(n[np.abs(n[:, 0] - 1) < 1e-12, 1])
    np.testing.assert_allclose(left, right, atol=1e-12)


def _interface_loops(mesh: PeriodicMesh) -> int:
    """Number of closed interface polygons (vertex degree 2 everywhere)."""
    e = mesh.boundary_edges[mesh.edges_with(GAMMA)]
    deg = np.bincount(e.ravel())
    assert np.all(deg[np.unique(e)] == 2)
    parent = {v: v for v in np.unique(e)}

    def find(v):
        while parent[v] != v:
            v = parent[v]
        return v
    for a, b in e:
        parent[find(a)] = find(b)
    return len({find(v) for v in parent})


def test_cavity_interface_single_loop(cavity_mesh):
    assert _interface_loops(cavity_mesh) == 1


def test_channel_interface_two_polylines(channel_mesh):
    e = channel_mesh.edges_with(GAMMA)
    y = channel_mesh.nodes[channel_mesh.boundary_edges[e]][..., 1]
    assert set(np.round(np.unique(y), 12)) == {-0.3, 0.3}
    for level in (-0.3, 0.3):
        on = np.all(np.abs(y - level) < 1e-12, axis=1)
        x = channel_mesh.nodes[channel_mesh.boundary_edges[e[on]]][..., 0]
        assert np.sum(np.abs(x[:, 1] - x[:, 0])) == pytest.approx(1.0, abs=1e-12)


def test_interface_edges_separate_fluid_and_solid(cavity_mesh):
    tri_edges = {}
    for t, tri in enumerate(cavity_mesh.triangles):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = tuple(sorted((tri[a], tri[b])))
            tri_edges.setdefault(key, []).append(t)
    for i in cavity_mesh.edges_with(GAMMA):
        ts = tri_edges[tuple(sorted(cavity_mesh.boundary_edges[i]))]
        assert sorted(cavity_mesh.tri_tags[ts]) == [FLUID, SOLID]
        assert cavity_mesh.tri_tags[cavity_mesh.edge_tris[i]] == SOLID


def test_solid_components(cavity_mesh, channel_mesh):
    assert cavity_mesh.n_solid_components == 1
    assert channel_mesh.n_solid_components == 2


def test_solid_family_has_no_fluid():
    mesh = generate_periodic_cell_mesh(build_cell_geometry("solid"), 0.25)
    assert mesh.region_area(FLUID) == 0.0
    assert mesh.edges_with(GAMMA).size == 0


def test_mesh_hash_stable(cavity_geom):
    a = generate_periodic_cell_mesh(cavity_geom, 0.2)
    b = generate_periodic_cell_mesh(cavity_geom, 0.2)
    assert a.hash() == b.hash()
    assert PeriodicMesh.from_dict(a.to_dict()).hash() == a.hash()


def test_quality_report_structured_solid():
    mesh = generate_periodic_cell_mesh(build_cell_geometry("solid"), 0.25)
    q = mesh_quality_report(mesh)
    assert q["min_angle"] == pytest.approx(45.0, abs=1e-9)


def test_quality_refinement_halves_hmax(cavity_geom):
    # measured: ratio of h_max between h and h/2 stays within 20% of one half
    q1 = mesh_quality_report(generate_periodic_cell_mesh(cavity_geom, 0.2))
    q2 = mesh_quality_report(generate_periodic_cell_mesh(cavity_geom, 0.1))
    assert 0.4 <= q2["h_max"] / q1["h_max"] <= 0.6


def test_quality_empty_mesh(cavity_mesh):
    empty = PeriodicMesh(np.zeros((0, 2)), np.zeros((0, 3), dtype=int), np.zeros(0, dtype=int),
                         np.zeros((0, 2), dtype=int), np.zeros(0, dtype=int),
                         np.zeros(0, dtype=int), np.zeros((0, 2), dtype=int),
                         np.zeros(0, dtype=int), 0.1)
    with pytest.raises(MeshingError) as exc:
        mesh_quality_report(empty)
    assert exc.value.code == "empty-mesh"


def test_nonpositive_h(cavity_geom):
    with pytest.raises((GeometryError, MeshingError)):
        generate_periodic_cell_mesh(cavity_geom, 0.0)


# ---------------------------------------------------------------- layer
def test_layer_quarter(cavity_geom, cavity_mesh):
    layer = extrude_layer_mesh(cavity_geom, cavity_mesh, (0.0, 1.0), 0.25)
    assert layer.n_cells == 4
    assert layer.mesh.region_area() == pytest.approx(0.5, abs=1e-12)
    assert layer.mesh.n_nodes <= 4 * cavity_mesh.n_nodes
    assert layer.neumann_sides == ("b",)


def test_layer_noninteger(cavity_geom, cavity_mesh):
    with pytest.raises(GeometryError) as exc:
        extrude_layer_mesh(cavity_geom, cavity_mesh, (0.0, 1.0), 0.3)
    assert exc.value.code == "noninteger-cell-count"


def test_layer_tags_cavity(cavity_geom, cavity_mesh):
    layer = extrude_layer_mesh(cavity_geom, cavity_mesh, (0.0, 1.0), 0.25)
    sets = classify_boundaries(layer)
    assert sets["fluid_dirichlet"].size == 0 and sets["fluid_neumann"].size == 0
    # every boundary edge carries one of the valid tags
    assert sum(v.size for v in sets.values()) == len(layer.mesh.boundary_edges)
    n_top = np.count_nonzero(cavity_mesh.edge_tags == TOP)
    assert sets["top"].size == 4 * n_top
    assert sets["bottom"].size == 4 * np.count_nonzero(cavity_mesh.edge_tags == BOTTOM)
    assert sets["gamma"].size == 4 * cavity_mesh.edges_with(GAMMA).size


def test_layer_tags_channel(channel_geom, channel_mesh):
    layer = extrude_layer_mesh(channel_geom, channel_mesh, (0.0, 1.0), 0.25, ("a",))
    m = layer.mesh
    for tag, x in ((FLUID_DIRICHLET, 0.0), (FLUID_NEUMANN, 1.0)):
        e = m.boundary_edges[m.edges_with(tag)]
        assert e.size > 0
        np.testing.assert_allclose(m.nodes[e][..., 0], x, atol=1e-12)
    # the solid is clamped at both lateral ends
    x = m.nodes[m.boundary_edges[m.edges_with(SOLID_DIRICHLET)]][..., 0]
    assert np.all((np.abs(x) < 1e-12) | (np.abs(x - 1.0) < 1e-12))
    assert np.any(np.abs(x) < 1e-12) and np.any(np.abs(x - 1.0) < 1e-12)
    assert not np.isin(m.edge_tags, (LEFT, RIGHT)).any()


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 6))
def test_layer_area_scaling(cavity_geom, n):
    mesh = generate_periodic_cell_mesh(cavity_geom, 0.3)
    eps = 1.0 / n
    layer = extrude_layer_mesh(cavity_geom, mesh, (0.0, 1.0), eps)
    assert layer.mesh.region_area() == pytest.approx(2 * eps, rel=1e-12)
    assert layer.mesh.region_area(FLUID) == pytest.approx(eps * mesh.region_area(FLUID), rel=1e-12)
