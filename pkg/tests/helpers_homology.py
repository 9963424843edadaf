"""Brute-force homology oracle, independent of the persistence pipeline.

Betti numbers of a sub-complex are computed directly: H0 by union-find
over present edges, higher Betti numbers from GF(2) boundary-matrix ranks
(Gaussian elimination on uint64-packed bit rows).  Nothing here shares
code with vfmesh.persistence beyond reading the complex structure.
"""

from __future__ import annotations

import numpy as np


def gf2_rank(rows: list[int]) -> int:
    """Rank over GF(2) of a matrix given as bitmask rows."""
    rank = 0
    pivots: list[int] = []
    for row in rows:
        for p in pivots:
            row = min(row, row ^ p)
        if row:
            pivots.append(row)
            pivots.sort(reverse=True)
            rank += 1
    return rank


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))
        self.count = n

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra
            self.count -= 1


def betti_of_subcomplex(cx, f_threshold: float) -> tuple[int, ...]:
    """Betti numbers of the simplices with entry value <= f_threshold.

    B0 via union-find; Bk = (#k-simplices - rank d_k) - rank d_{k+1}.
    """
    f = np.asarray(cx.vertex_f)
    present_v = [v for v in range(cx.n_vertices) if f[v] <= f_threshold]
    v_index = {v: i for i, v in enumerate(present_v)}
    present: dict[int, list[tuple[int, ...]]] = {}
    for dim, simplices in cx.simplices.items():
        present[dim] = [s for s in simplices if f[list(s)].max() <= f_threshold]

    uf = UnionFind(len(present_v))
    for a, b in present.get(1, []):
        uf.union(v_index[a], v_index[b])
    b0 = uf.count

    counts = {0: len(present_v)}
    for dim, items in present.items():
        counts[dim] = len(items)

    ranks = {}
    max_dim = max(counts)
    for dim in range(1, max_dim + 1):
        faces = {s: i for i, s in enumerate(present.get(dim - 1, []))} if dim > 1 else v_index
        rows = []
        for s in present.get(dim, []):
            mask = 0
            for k in range(len(s)):
                facet = s[:k] + s[k + 1:]
                key = facet if dim > 1 else facet[0]
                mask |= 1 << faces[key]
            rows.append(mask)
        ranks[dim] = gf2_rank(rows)

    betti = [b0]
    for dim in range(1, cx.dimension):
        z = counts.get(dim, 0) - ranks.get(dim, 0)
        b = z - ranks.get(dim + 1, 0)
        betti.append(b)
    return tuple(betti)


def euler_characteristic(cx, f_threshold: float) -> int:
    f = np.asarray(cx.vertex_f)
    chi = int((f <= f_threshold).sum())
    for dim, simplices in cx.simplices.items():
        n = sum(1 for s in simplices if f[list(s)].max() <= f_threshold)
        chi += (-1) ** dim * n
    return chi


def make_random_field_2d(rng, nx=None, ny=None):
    """Synthetic field on a tiny grid: random cell and subcell values."""
    from vfmesh.geometry import make_soup_2d
    from vfmesh.grid import VolumeFractionField, build_grid

    nx = nx or int(rng.integers(1, 5))
    ny = ny or int(rng.integers(1, 5))
    soup = make_soup_2d([[0, 0, nx, 0], [nx, 0, nx, ny], [nx, ny, 0, ny], [0, ny, 0, 0]])
    grid = build_grid(soup, 1.0)
    assert grid.extents == (nx, ny)
    return VolumeFractionField(
        grid, 2,
        cells=rng.random((nx, ny)),
        vertices=rng.random((nx + 1, ny + 1)),
        edges={0: rng.random((nx, ny + 1)), 1: rng.random((nx + 1, ny))},
    )


def make_random_field_3d(rng, shape=None):
    from vfmesh.geometry import make_soup_3d
    from vfmesh.grid import VolumeFractionField, build_grid
    from helpers import CUBE_TRIS

    if shape is None:
        shape = tuple(int(rng.integers(1, 4)) for _ in range(3))
    nx, ny, nz = shape
    tris = np.array(CUBE_TRIS, dtype=float) * np.array([nx, ny, nz])
    soup = make_soup_3d(tris)
    grid = build_grid(soup, 1.0)
    assert grid.extents == (nx, ny, nz)
    return VolumeFractionField(
        grid, 2,
        cells=rng.random((nx, ny, nz)),
        vertices=rng.random((nx + 1, ny + 1, nz + 1)),
        edges={0: rng.random((nx, ny + 1, nz + 1)),
               1: rng.random((nx + 1, ny, nz + 1)),
               2: rng.random((nx + 1, ny + 1, nz))},
        faces={0: rng.random((nx + 1, ny, nz)),
               1: rng.random((nx, ny + 1, nz)),
               2: rng.random((nx, ny, nz + 1))},
    )
