"""Shared synthetic geometry and independent oracles for the test suite.

Oracles here are deliberately separate implementations from the package:
ray-crossing parity for inside/outside, shoelace areas, dense point
sampling for mesh areas.
"""

from __future__ import annotations

import numpy as np

from vfmesh.geometry import GeometrySoup, make_soup_2d, make_soup_3d


def square_soup(lo=0.0, hi=1.0, ccw=True) -> GeometrySoup:
    """Axis-aligned square boundary, counter-clockwise by default."""
    c = [(lo, lo), (hi, lo), (hi, hi), (lo, hi)]
    if not ccw:
        c = c[::-1]
    segs = [[*c[i], *c[(i + 1) % 4]] for i in range(4)]
    return make_soup_2d(np.array(segs))


def polygon_soup(vertices) -> GeometrySoup:
    v = np.asarray(vertices, dtype=float)
    segs = [[*v[i], *v[(i + 1) % len(v)]] for i in range(len(v))]
    return make_soup_2d(np.array(segs))


def random_simple_polygon(rng, n=12, r_lo=0.5, r_hi=1.5):
    """Star-shaped polygon around the origin (always simple), CCW."""
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=n))
    radii = rng.uniform(r_lo, r_hi, size=n)
    return np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)


CUBE_TRIS = [
    # -z face (normal 0,0,-1), +z, -y, +y, -x, +x; outward orientation.
    [(0, 0, 0), (0, 1, 0), (1, 1, 0)], [(0, 0, 0), (1, 1, 0), (1, 0, 0)],
    [(0, 0, 1), (1, 0, 1), (1, 1, 1)], [(0, 0, 1), (1, 1, 1), (0, 1, 1)],
    [(0, 0, 0), (1, 0, 0), (1, 0, 1)], [(0, 0, 0), (1, 0, 1), (0, 0, 1)],
    [(0, 1, 0), (0, 1, 1), (1, 1, 1)], [(0, 1, 0), (1, 1, 1), (1, 1, 0)],
    [(0, 0, 0), (0, 0, 1), (0, 1, 1)], [(0, 0, 0), (0, 1, 1), (0, 1, 0)],
    [(1, 0, 0), (1, 1, 0), (1, 1, 1)], [(1, 0, 0), (1, 1, 1), (1, 0, 1)],
]


def cube_soup(lo=0.0, hi=1.0) -> GeometrySoup:
    tris = np.array(CUBE_TRIS, dtype=float) * (hi - lo) + lo
    return make_soup_3d(tris)


def random_convex_polyhedron(rng, n=30):
    """Triangulated convex hull of random sphere points, outward-oriented."""
    from scipy.spatial import ConvexHull

    pts = rng.normal(size=(n, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    pts *= rng.uniform(0.8, 1.2, size=(n, 1))
    hull = ConvexHull(pts)
    tris = []
    center = pts[hull.vertices].mean(axis=0)
    for simplex in hull.simplices:
        a, b, c = pts[simplex]
        n_vec = np.cross(b - a, c - a)
        if np.dot(n_vec, a - center) < 0:
            a, b = b, a
        tris.append([a, b, c])
    return make_soup_3d(np.array(tris))


# ---------------------------------------------------------------------------
# Ray-parity oracles (independent of winding-number code)

def point_in_polygon_parity(p, vertices) -> bool:
    """Even-odd rule with a horizontal ray, half-open edge convention."""
    x, y = p
    inside = False
    v = np.asarray(vertices, dtype=float)
    j = len(v) - 1
    for i in range(len(v)):
        xi, yi = v[i]
        xj, yj = v[j]
        if (yi > y) != (yj > y):
            x_cross = xi + (y - yi) / (yj - yi) * (xj - xi)
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def point_in_triangles_parity(p, soup: GeometrySoup, rng) -> bool:
    """Parity of ray-triangle crossings; re-casts on near-degenerate hits."""
    for _ in range(32):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        hits, ok = _count_ray_hits(np.asarray(p, float), direction, soup)
        if ok:
            return hits % 2 == 1
    raise RuntimeError("could not find a clean ray")


def _count_ray_hits(origin, direction, soup):
    eps = 1e-12
    v0, v1, v2 = soup.points_a, soup.points_b, soup.points_c
    e1, e2 = v1 - v0, v2 - v0
    h = np.cross(direction, e2)
    a = np.einsum("nk,nk->n", e1, h)
    parallel = np.abs(a) < eps
    a_safe = np.where(parallel, 1.0, a)
    s = origin - v0
    u = np.einsum("nk,nk->n", s, h) / a_safe
    q = np.cross(s, e1)
    v = direction @ q.T / a_safe
    t = np.einsum("nk,nk->n", e2, q) / a_safe
    hit = (~parallel) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    margin = 1e-9
    grazing = hit & ((u < margin) | (v < margin) | (u + v > 1 - margin) | (t < margin))
    if grazing.any():
        return 0, False
    return int(hit.sum()), True


def shoelace_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
