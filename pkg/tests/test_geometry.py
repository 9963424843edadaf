import textwrap

import numpy as np
import pytest

from vfmesh.geometry import (
    GeometryError,
    load_geometry,
    make_soup_2d,
    make_soup_3d,
    min_distance,
    on_boundary,
    winding_2d,
    winding_3d,
    winding_many,
)

from helpers import (
    cube_soup,
    point_in_polygon_parity,
    point_in_triangles_parity,
    random_convex_polyhedron,
    random_simple_polygon,
    polygon_soup,
    square_soup,
)


# ---------------------------------------------------------------------------
# Loading

def test_load_seg_text_unit_square(tmp_path):
    p = tmp_path / "square.seg"
    p.write_text(textwrap.dedent("""\
        # CCW unit square
        0 0 1 0
        1 0 1 1
        1 1 0 1
        0 1 0 0
    """))
    soup = load_geometry(p, "seg-text")
    assert soup.dimension == 2
    assert soup.n_elements == 4
    lo, hi = soup.bbox
    assert np.allclose(lo, [0, 0]) and np.allclose(hi, [1, 1])


def test_load_obj_cube_triangles(tmp_path):
    verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
             (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]
    faces = [(1, 4, 3), (1, 3, 2), (5, 6, 7), (5, 7, 8), (1, 2, 6), (1, 6, 5),
             (2, 3, 7), (2, 7, 6), (3, 4, 8), (3, 8, 7), (4, 1, 5), (4, 5, 8)]
    lines = [f"v {x} {y} {z}" for x, y, z in verts]
    lines += [f"f {a} {b} {c}" for a, b, c in faces]
    p = tmp_path / "cube.obj"
    p.write_text("\n".join(lines) + "\n")
    soup = load_geometry(p, "obj-tris")
    assert soup.dimension == 3
    assert soup.n_elements == 12


def test_load_obj_polyline_pairs(tmp_path):
    p = tmp_path / "loop.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nl 1 2 3 1\n")
    soup = load_geometry(p, "obj-lines")
    assert soup.dimension == 2
    assert soup.n_elements == 3


def test_degenerate_segments_dropped(tmp_path):
    p = tmp_path / "degen.seg"
    p.write_text("0 0 1 0\n0.5 0.5 0.5 0.5\n1 0 1 1\n1 1 0 0\n")
    soup = load_geometry(p, "seg-text")
    assert soup.n_elements == 3
    assert soup.dropped == 1


def test_zero_valid_elements_rejected(tmp_path):
    p = tmp_path / "empty.seg"
    p.write_text("# nothing\n")
    with pytest.raises(GeometryError):
        load_geometry(p, "seg-text")


def test_unreadable_file_rejected(tmp_path):
    with pytest.raises(GeometryError):
        load_geometry(tmp_path / "missing.seg", "seg-text")


def test_stl_binary_roundtrip(tmp_path):
    import struct

    tris = np.array(cube_soup().points_a), np.array(cube_soup().points_b), np.array(cube_soup().points_c)
    blob = bytearray(b"\0" * 80)
    blob += struct.pack("<I", 12)
    for a, b, c in zip(*tris):
        blob += struct.pack("<3f", 0, 0, 0)
        for v in (a, b, c):
            blob += struct.pack("<3f", *v)
        blob += struct.pack("<H", 0)
    p = tmp_path / "cube.stl"
    p.write_bytes(bytes(blob))
    soup = load_geometry(p, "stl")
    assert soup.n_elements == 12
    assert abs(winding_3d((0.5, 0.5, 0.5), soup) - 1.0) < 1e-10


def test_stl_ascii(tmp_path):
    lines = ["solid x"]
    for a, b, c in zip(cube_soup().points_a, cube_soup().points_b, cube_soup().points_c):
        lines.append(" facet normal 0 0 0")
        lines.append("  outer loop")
        for v in (a, b, c):
            lines.append(f"   vertex {v[0]} {v[1]} {v[2]}")
        lines.append("  endloop")
        lines.append(" endfacet")
    lines.append("endsolid x")
    p = tmp_path / "cube_ascii.stl"
    p.write_text("\n".join(lines))
    soup = load_geometry(p, "stl")
    assert soup.n_elements == 12


# ---------------------------------------------------------------------------
# Winding numbers: pinned examples

def test_winding_2d_square_center():
    assert abs(winding_2d((0.5, 0.5), square_soup()) - 1.0) < 1e-12


def test_winding_2d_far_outside():
    assert abs(winding_2d((10.0, 10.0), square_soup())) < 1e-12


def test_winding_2d_single_segment_quarter():
    # Subtended angle between (-1,-1) and (1,-1) is 90 degrees -> 1/4 turn.
    soup = make_soup_2d([[-1, 0, 1, 0]])
    w = winding_2d((0.0, 1.0), soup)
    assert abs(abs(w) - 0.25) < 1e-12
    assert w > 0  # a->b left-to-right seen from above is CCW-positive


def test_winding_3d_cube_center():
    assert abs(winding_3d((0.5, 0.5, 0.5), cube_soup()) - 1.0) < 1e-10


def test_winding_3d_outside_bbox():
    assert abs(winding_3d((5.0, 5.0, 5.0), cube_soup())) < 1e-10


def test_winding_3d_octant_triangle():
    soup = make_soup_3d([[(1, 0, 0), (0, 1, 0), (0, 0, 1)]])
    w = winding_3d((0.0, 0.0, 0.0), soup)
    assert abs(abs(w) - 0.125) < 1e-12
    assert w > 0  # outward-facing normal away from the origin


# ---------------------------------------------------------------------------
# Invariants

def test_additivity_of_partitions():
    rng = np.random.default_rng(7)
    verts = random_simple_polygon(rng, n=16)
    soup = polygon_soup(verts)
    pts = rng.uniform(-2, 2, size=(50, 2))
    whole = winding_many(pts, soup)
    segs = np.hstack([soup.points_a, soup.points_b])
    part = np.zeros(len(pts))
    for chunk in np.array_split(segs, 5):
        part += winding_many(pts, make_soup_2d(chunk))
    assert np.allclose(whole, part, atol=1e-12)


def test_orientation_antisymmetry():
    rng = np.random.default_rng(8)
    soup = polygon_soup(random_simple_polygon(rng))
    pts = rng.uniform(-2, 2, size=(40, 2))
    assert np.allclose(winding_many(pts, soup),
                       -winding_many(pts, soup.reversed()), atol=1e-13)

    soup3 = random_convex_polyhedron(rng)
    pts3 = rng.uniform(-2, 2, size=(40, 3))
    assert np.allclose(winding_many(pts3, soup3),
                       -winding_many(pts3, soup3.reversed()), atol=1e-13)


def test_watertight_parity_oracle_2d():
    rng = np.random.default_rng(9)
    verts = random_simple_polygon(rng, n=14)
    soup = polygon_soup(verts)
    pts = rng.uniform(-2, 2, size=(300, 2))
    w = winding_many(pts, soup)
    for p, wi in zip(pts, w):
        expected = 1.0 if point_in_polygon_parity(p, verts) else 0.0
        assert abs(wi - expected) < 1e-9


def test_watertight_parity_oracle_3d():
    rng = np.random.default_rng(10)
    soup = random_convex_polyhedron(rng)
    pts = rng.uniform(-1.5, 1.5, size=(150, 3))
    w = winding_many(pts, soup)
    for p, wi in zip(pts, w):
        expected = 1.0 if point_in_triangles_parity(p, soup, rng) else 0.0
        assert abs(wi - expected) < 1e-9


def test_rigid_motion_equivariance():
    rng = np.random.default_rng(11)
    soup = polygon_soup(random_simple_polygon(rng))
    pts = rng.uniform(-2, 2, size=(30, 2))
    theta = 0.7
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    t = np.array([0.3, -1.2])
    moved = soup.transformed(R, t)
    w0 = winding_many(pts, soup)
    w1 = winding_many(pts @ R.T + t, moved)
    assert np.allclose(w0, w1, atol=1e-10)


def test_on_boundary_flagging():
    soup = square_soup()
    pts = np.array([[0.5, 0.0], [0.5, 0.5], [0.5, 1e-12]])
    flags = on_boundary(pts, soup)
    assert flags[0] and not flags[1] and flags[2]
    d = min_distance(np.array([[0.5, -0.5]]), soup)
    assert abs(d[0] - 0.5) < 1e-12


def test_min_distance_triangles():
    soup = cube_soup()
    d = min_distance(np.array([[0.5, 0.5, 2.0], [0.5, 0.5, 0.5], [-1.0, -1.0, -1.0]]), soup)
    assert abs(d[0] - 1.0) < 1e-12
    assert abs(d[1] - 0.5) < 1e-12
    assert abs(d[2] - np.sqrt(3)) < 1e-12
