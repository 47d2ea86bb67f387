"""Surface meshes, STL I/O, and marker seeding."""

import struct

import numpy as np
import pytest

from mlsibm.errors import ConfigError, StlParseError
from mlsibm.grid import build_grid
from mlsibm.surface import (MarkerSet, Oscillation, TriMesh, circle_markers,
                            icosphere, icosphere_subdivisions_for_edge,
                            load_stl, markers_from_mesh, resolution_check,
                            seed_line_markers, write_stl_ascii,
                            write_stl_binary)

ASCII_TRIANGLE = """solid tri
  facet normal 0 0 1
    outer loop
      vertex 0 0 0
      vertex 1 0 0
      vertex 0 1 0
    endloop
  endfacet
endsolid tri
"""


def test_icosphere_matches_sphere_geometry():
    r = 0.5
    prev_area_err = np.inf
    for sub in (1, 2, 3):
        mesh = icosphere(radius=r, subdivisions=sub)
        _, areas = mesh.face_normals_areas()
        err = abs(areas.sum() - 4 * np.pi * r * r)
        assert err < prev_area_err       # refinement converges to the sphere
        prev_area_err = err
        assert np.allclose(np.linalg.norm(mesh.vertices, axis=1), r)
    assert abs(mesh.enclosed_volume() - 4.0 / 3.0 * np.pi * r**3) < 5e-3


def test_icosphere_centered():
    c = (1.0, -2.0, 0.5)
    mesh = icosphere(radius=0.3, center=c, subdivisions=1)
    assert np.allclose(np.linalg.norm(mesh.vertices - c, axis=1), 0.3)


def test_subdivisions_for_edge():
    r, target = 0.5, 0.042
    sub = icosphere_subdivisions_for_edge(r, target)
    assert icosphere(radius=r, subdivisions=sub).mean_edge() <= target
    assert icosphere(radius=r, subdivisions=sub - 1).mean_edge() > target


def test_markers_from_mesh_fields():
    mesh = icosphere(radius=0.5, subdivisions=2)
    mk = markers_from_mesh(mesh)
    assert mk.X.shape == (mesh.faces.shape[0], 3)
    normals, areas = mesh.face_normals_areas()
    assert np.allclose(mk.area, areas)
    assert np.allclose(np.linalg.norm(mk.normal, axis=1), 1.0)
    # outward normals on a sphere point along the centroid radius
    assert np.all(np.einsum("ij,ij->i", mk.X, mk.normal) > 0)
    assert np.isclose(mk.enclosed_volume, abs(mesh.enclosed_volume()))
    assert np.isclose(mk.mean_edge_length, mesh.mean_edge())


def test_stl_ascii_parser_on_handwritten_payload(tmp_path):
    path = tmp_path / "tri.stl"
    path.write_text(ASCII_TRIANGLE)
    mesh = load_stl(str(path))
    assert mesh.faces.shape == (1, 3)
    tri = mesh.vertices[mesh.faces[0]]
    assert np.allclose(sorted(tri.sum(axis=1)), [0.0, 1.0, 1.0])
    _, areas = mesh.face_normals_areas()
    assert np.isclose(areas[0], 0.5)


def test_stl_round_trips(tmp_path):
    mesh = icosphere(radius=0.4, center=(0.2, 0.0, -0.1), subdivisions=2)
    pa = str(tmp_path / "a.stl")
    pb = str(tmp_path / "b.stl")
    write_stl_ascii(pa, mesh)
    write_stl_binary(pb, mesh)
    for p in (pa, pb):
        back = load_stl(p)
        assert back.faces.shape == mesh.faces.shape
        c0 = np.sort(mesh.centroids(), axis=0)
        c1 = np.sort(back.centroids(), axis=0)
        assert np.allclose(c0, c1, atol=1e-6)   # 32-bit STL payload
        assert np.isclose(back.enclosed_volume(), mesh.enclosed_volume(),
                          atol=1e-5)


def test_stl_truncated_binary_raises(tmp_path):
    mesh = icosphere(radius=0.4, subdivisions=1)
    p = tmp_path / "trunc.stl"
    write_stl_binary(str(p), mesh)
    data = p.read_bytes()
    p.write_bytes(data[: len(data) - 25])
    with pytest.raises(StlParseError):
        load_stl(str(p))


def test_stl_bad_count_raises(tmp_path):
    p = tmp_path / "bad.stl"
    # header promises 100 facets but carries none
    p.write_bytes(b"\x00" * 80 + struct.pack("<I", 100))
    with pytest.raises(StlParseError):
        load_stl(str(p))


def test_stl_garbage_ascii_raises(tmp_path):
    p = tmp_path / "garbage.stl"
    p.write_text("solid x\n  facet normal 0 0 1\n    vertex nope\nendsolid\n")
    with pytest.raises(StlParseError):
        load_stl(str(p))


def test_degenerate_facets_dropped(tmp_path):
    degen = ASCII_TRIANGLE.replace(
        "endsolid tri",
        """facet normal 0 0 1
    outer loop
      vertex 2 2 0
      vertex 2 2 0
      vertex 2 2 0
    endloop
  endfacet
endsolid tri""")
    p = tmp_path / "degen.stl"
    p.write_text(degen)
    mesh = load_stl(str(p))
    assert mesh.faces.shape[0] == 1
    assert mesh.dropped_facets == 1


def test_circle_markers():
    mk = circle_markers((1.0, 2.0), 0.5, 64)
    assert np.isclose(mk.area.sum(), 2 * np.pi * 0.5)
    assert np.allclose(np.linalg.norm(mk.X - [1.0, 2.0], axis=1), 0.5)
    out = (mk.X - [1.0, 2.0]) / 0.5
    assert np.allclose(mk.normal, out)
    assert np.isclose(mk.enclosed_volume, np.pi * 0.25)
    with pytest.raises(ConfigError):
        circle_markers((0, 0), 1.0, 2)


def test_seed_line_markers():
    grid = build_grid((16, 8), 0.25, periodic=(True, False))
    mk = seed_line_markers(1.1, 3, 16, grid)
    assert mk.X.shape == (48, 2)
    assert np.allclose(mk.X[:, 1], 1.1)
    assert np.allclose(np.diff(mk.X[:, 0]), 0.25 / 3)
    assert np.isclose(mk.area.sum(), 16 * 0.25)
    assert np.allclose(mk.normal, [0.0, 1.0])


def test_resolution_check_warns_on_sparse_markers():
    grid = build_grid((16, 16, 16), 0.1, periodic=(True,) * 3)
    mesh = icosphere(radius=0.5, subdivisions=1)   # edge ~0.3 = 3h
    rep = resolution_check(markers_from_mesh(mesh), grid)
    assert rep.warning and rep.ratio > 1.0
    fine = icosphere(radius=0.5, subdivisions=4)
    rep2 = resolution_check(markers_from_mesh(fine), grid)
    assert not rep2.warning


def test_oscillation_kinematics():
    osc = Oscillation((0.7, 0.0, 0.0), 1.3)
    mesh = icosphere(radius=0.2, subdivisions=1)
    mk = markers_from_mesh(mesh, motion=osc)
    X0 = mk.X.copy()
    mk.move_to(0.8)
    assert np.allclose(mk.X, X0 + osc.displacement(0.8))
    assert np.allclose(mk.U_desired, osc.velocity(0.8))
    # acceleration consistent with a centered difference of the velocity
    eps = 1e-6
    fd = (osc.velocity(0.8 + eps) - osc.velocity(0.8 - eps)) / (2 * eps)
    assert np.allclose(mk.body_acceleration(0.8), fd, atol=1e-5)


def test_static_markers_have_zero_desired_velocity():
    mk = circle_markers((0.0, 0.0), 1.0, 16)
    assert np.allclose(mk.U_desired, 0.0)
    assert np.allclose(mk.body_velocity(3.0), 0.0)
