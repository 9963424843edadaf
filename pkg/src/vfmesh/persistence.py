"""Persistent homology of the volume-fraction threshold family.

The cubical field is transferred to a simplicial complex through the dual
construction: each cell becomes a dual vertex carrying f = 1 - vf, and
introduced vertices subdivide the dual 2-cells (2D) or dual faces and
volumes (3D) so that pinch connectivity is controlled by subcell values.
Introduced-vertex values are clamped between the min and max of their
surrounding values.  A simplex enters the filtration at the maximum f of
its vertices (vertices first, then edges among present vertices, then
higher simplices), and standard boundary-matrix reduction over Z/2 yields
the persistence diagram.  Thresholding is inclusive: a cell with vf equal
to the threshold is present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import VolumeFractionField


@dataclass
class FiltrationComplex:
    """Simplicial complex with a lower-star filtration on vertex values.

    ``vertex_f`` holds f = 1 - vf.  ``simplices[k]`` lists k-simplices as
    sorted vertex-id tuples; every face of a listed simplex is listed.
    ``vertex_info`` tags each vertex with its primal origin for audits.
    """

    dimension: int
    vertex_f: np.ndarray
    simplices: dict[int, list[tuple[int, ...]]]
    vertex_info: list[tuple] = field(default_factory=list)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_f)

    def entry_value(self, simplex: tuple[int, ...]) -> float:
        return float(self.vertex_f[list(simplex)].max())

    def all_simplices(self):
        """Yield (dim, vertex-tuple) for every simplex including vertices."""
        for v in range(self.n_vertices):
            yield 0, (v,)
        for dim in sorted(self.simplices):
            for s in self.simplices[dim]:
                yield dim, s

    def max_homology_dim(self) -> int:
        return self.dimension - 1


@dataclass
class PersistenceDiagram:
    """(homology dim, birth f, death f) pairs; death may be +inf."""

    dimension: int
    pairs: list[tuple[int, float, float]]

    def betti_at(self, vf_threshold: float) -> tuple[int, ...]:
        return betti_at(self, vf_threshold)

    def finite_pairs(self):
        return [p for p in self.pairs if math.isfinite(p[2])]


@dataclass
class BettiCurve:
    """Step function threshold -> Betti numbers, jumps only at filtration values."""

    dimension: int
    thresholds: list[float]          # descending vf values where counts may change
    counts: list[tuple[int, ...]]    # counts at vf in (next_threshold, threshold]
    max_vf: float


# ---------------------------------------------------------------------------
# Dual construction, 2D

def dualize_2d(field: VolumeFractionField) -> FiltrationComplex:
    """One dual vertex per cell; introduced vertices at interior grid vertices.

    Each interior dual quad splits into four triangles around its
    introduced vertex, whose value is the primal vertex vf clamped between
    the min and max of the four surrounding cell vfs.
    """
    if field.dimension != 2:
        raise ValueError("dualize_2d requires a 2D field")
    nx, ny = field.grid.extents
    cells = field.cells

    def cid(i, j):
        return i * ny + j

    vf_list = [cells[i, j] for i in range(nx) for j in range(ny)]
    info = [("cell", (i, j)) for i in range(nx) for j in range(ny)]

    intro_id = {}
    for i in range(1, nx):
        for j in range(1, ny):
            around = cells[i - 1:i + 1, j - 1:j + 1]
            v = float(np.clip(field.vertices[i, j], around.min(), around.max()))
            intro_id[(i, j)] = len(vf_list)
            vf_list.append(v)
            info.append(("vertex", (i, j)))

    edges = set()
    triangles = set()
    for i in range(1, nx):
        for j in range(ny):
            edges.add(_key(cid(i - 1, j), cid(i, j)))
    for i in range(nx):
        for j in range(1, ny):
            edges.add(_key(cid(i, j - 1), cid(i, j)))
    for (i, j), w in intro_id.items():
        ring = [cid(i - 1, j - 1), cid(i, j - 1), cid(i, j), cid(i - 1, j)]
        for a, b in zip(ring, ring[1:] + ring[:1]):
            edges.add(_key(w, a))
            triangles.add(_key(w, a, b))

    f = 1.0 - np.asarray(vf_list)
    return FiltrationComplex(2, f, {1: sorted(edges), 2: sorted(triangles)}, info)


# ---------------------------------------------------------------------------
# Dual construction, 3D

def dualize_3d(field: VolumeFractionField) -> FiltrationComplex:
    """Dual vertices per hex; introduced vertices per interior primal edge
    (dual face) and interior primal vertex (dual volume).

    Dual faces split into 4 triangles; dual volumes into 24 tetrahedra by
    joining the volume vertex with the subdivided face triangles.  Edge
    values clamp among the 4 ring hexes; vertex values clamp among all 26
    surrounding subcell values (8 hexes, 12 faces, 6 edges).
    """
    if field.dimension != 3:
        raise ValueError("dualize_3d requires a 3D field")
    nx, ny, nz = field.grid.extents
    cells = field.cells

    def hid(i, j, k):
        return (i * ny + j) * nz + k

    vf_list = [cells[i, j, k] for i in range(nx) for j in range(ny) for k in range(nz)]
    info = [("cell", (i, j, k)) for i in range(nx) for j in range(ny) for k in range(nz)]

    # Ring hexes around an edge running along `axis` at edge index (i, j, k):
    # the four cells sharing that edge, ordered cyclically (adjacent pairs
    # share a primal face).
    def edge_ring(axis, idx):
        i, j, k = idx
        if axis == 0:
            ring = [(i, j - 1, k - 1), (i, j, k - 1), (i, j, k), (i, j - 1, k)]
        elif axis == 1:
            ring = [(i - 1, j, k - 1), (i, j, k - 1), (i, j, k), (i - 1, j, k)]
        else:
            ring = [(i - 1, j - 1, k), (i, j - 1, k), (i, j, k), (i - 1, j, k)]
        return ring

    def edge_interior(axis, idx):
        return all(0 <= c[a] < field.grid.extents[a] for c in edge_ring(axis, idx)
                   for a in range(3))

    edge_intro = {}
    for axis in range(3):
        e_arr = field.edges[axis]
        for idx in np.ndindex(e_arr.shape):
            if not edge_interior(axis, idx):
                continue
            ring_vf = [cells[c] for c in edge_ring(axis, idx)]
            v = float(np.clip(e_arr[idx], min(ring_vf), max(ring_vf)))
            edge_intro[(axis, idx)] = len(vf_list)
            vf_list.append(v)
            info.append(("edge", axis, idx))

    vertex_intro = {}
    for i in range(1, nx):
        for j in range(1, ny):
            for k in range(1, nz):
                vals = list(cells[i - 1:i + 1, j - 1:j + 1, k - 1:k + 1].ravel())
                # 12 incident faces: per normal axis, 2x2 tangential offsets.
                for a in range(3):
                    f_arr = field.faces[a]
                    others = [ax for ax in range(3) if ax != a]
                    for o1 in (0, 1):
                        for o2 in (0, 1):
                            idx = [i, j, k]
                            idx[others[0]] -= o1
                            idx[others[1]] -= o2
                            vals.append(f_arr[tuple(idx)])
                # 6 incident edges.
                for a in range(3):
                    e_arr = field.edges[a]
                    for d in (0, -1):
                        idx = [i, j, k]
                        idx[a] += d
                        vals.append(e_arr[tuple(idx)])
                v = float(np.clip(field.vertices[i, j, k], min(vals), max(vals)))
                vertex_intro[(i, j, k)] = len(vf_list)
                vf_list.append(v)
                info.append(("vertex", (i, j, k)))

    edges = set()
    triangles = set()
    tets = set()

    # Dual edges across interior primal faces.
    for a in range(3):
        n = list(field.grid.extents)
        for idx in np.ndindex(tuple(n[ax] - (1 if ax == a else 0) for ax in range(3))):
            lo = list(idx)
            hi = list(idx)
            hi[a] += 1
            if hi[a] >= n[a]:
                continue
            edges.add(_key(hid(*lo), hid(*hi)))

    # Dual faces: spokes and 4 triangles each.
    for (axis, idx), e_id in edge_intro.items():
        ring = [hid(*c) for c in edge_ring(axis, idx)]
        for a, b in zip(ring, ring[1:] + ring[:1]):
            edges.add(_key(e_id, a))
            triangles.add(_key(e_id, a, b))

    # Dual volumes: 24 tets joining the volume vertex with face triangles.
    for (i, j, k), v_id in vertex_intro.items():
        incident_edges = []
        for a in range(3):
            for d in (0, -1):
                idx = [i, j, k]
                idx[a] += d
                incident_edges.append((a, tuple(idx)))
        for axis, idx in incident_edges:
            e_id = edge_intro[(axis, idx)]
            ring = [hid(*c) for c in edge_ring(axis, idx)]
            edges.add(_key(v_id, e_id))
            for a, b in zip(ring, ring[1:] + ring[:1]):
                edges.add(_key(v_id, a))
                triangles.add(_key(v_id, e_id, a))
                triangles.add(_key(v_id, a, b))
                tets.add(_key(v_id, e_id, a, b))

    f = 1.0 - np.asarray(vf_list)
    return FiltrationComplex(
        3, f, {1: sorted(edges), 2: sorted(triangles), 3: sorted(tets)}, info)


def _key(*vs) -> tuple[int, ...]:
    return tuple(sorted(vs))


# ---------------------------------------------------------------------------
# Filtration order and reduction

def lower_star_filtration(cx: FiltrationComplex) -> list[tuple[float, int, tuple[int, ...]]]:
    """Simplices sorted by (entry value, dimension, vertex tuple).

    Entry value is the max of the vertex values, so every simplex follows
    all of its faces; dimension-ascending tie-break keeps that true at
    equal values, and the lexicographic tail makes the order deterministic.
    """
    out = []
    for dim, s in cx.all_simplices():
        out.append((cx.entry_value(s), dim, s))
    out.sort(key=lambda t: (t[0], t[1], t[2]))
    return out


def reduce_filtration(ordered: list[tuple[float, int, tuple[int, ...]]],
                      dimension: int | None = None) -> PersistenceDiagram:
    """Standard Z/2 boundary-matrix reduction with the clearing trick.

    Columns are bitsets (Python ints) over filtration positions; each
    column is XOR-reduced until its lowest set bit is unique.  Unpaired
    simplices yield infinite classes.
    """
    pos = {s: i for i, (_, _, s) in enumerate(ordered)}
    n = len(ordered)
    dims = np.array([d for _, d, _ in ordered])
    top = int(dims.max()) if n else 0

    stored: dict[int, int] = {}
    pivot: dict[int, int] = {}
    killed: set[int] = set()
    negative: set[int] = set()
    pairs: list[tuple[int, float, float]] = []

    for dim in range(top, 0, -1):
        for j in range(n):
            if dims[j] != dim or j in killed:
                continue
            _, _, simplex = ordered[j]
            col = 0
            for facet in _facets(simplex):
                col |= 1 << pos[facet]
            while col:
                low = col.bit_length() - 1
                owner = pivot.get(low)
                if owner is None:
                    break
                col ^= stored[owner]
            if col:
                low = col.bit_length() - 1
                pivot[low] = j
                stored[j] = col
                negative.add(j)
                killed.add(low)
                birth_f, birth_dim, _ = ordered[low]
                death_f = ordered[j][0]
                pairs.append((birth_dim, birth_f, death_f))

    for i in range(n):
        if i not in killed and i not in negative:
            pairs.append((int(dims[i]), ordered[i][0], math.inf))

    pairs.sort(key=lambda p: (p[0], p[1], p[2]))
    if dimension is None:
        dimension = top + 1 if n else 2
    return PersistenceDiagram(dimension, pairs)


def _facets(simplex: tuple[int, ...]):
    for k in range(len(simplex)):
        yield simplex[:k] + simplex[k + 1:]


def compute_diagram(cx: FiltrationComplex) -> PersistenceDiagram:
    return reduce_filtration(lower_star_filtration(cx), dimension=cx.dimension)


# ---------------------------------------------------------------------------
# Betti queries

def betti_at(diagram: PersistenceDiagram, vf_threshold: float) -> tuple[int, ...]:
    """Counts of classes alive at f = 1 - vf_threshold (birth <= f < death)."""
    f = 1.0 - vf_threshold
    n_dims = diagram.dimension  # B0..B_{d-1}
    counts = [0] * n_dims
    for dim, birth, death in diagram.pairs:
        if dim < n_dims and birth <= f < death:
            counts[dim] += 1
    return tuple(counts)


def betti_curve(diagram: PersistenceDiagram, max_vf: float | None = None) -> BettiCurve:
    """Evaluate Betti numbers on the descending ladder of jump thresholds."""
    values = set()
    for _, birth, death in diagram.pairs:
        values.add(1.0 - birth)
        if math.isfinite(death):
            values.add(1.0 - death)
    thresholds = sorted(values, reverse=True)
    if max_vf is None:
        max_vf = thresholds[0] if thresholds else 1.0
    counts = [betti_at(diagram, t) for t in thresholds]
    return BettiCurve(diagram.dimension, thresholds, counts, max_vf)


# ---------------------------------------------------------------------------
# Exports

def export_diagram_csv(diagram: PersistenceDiagram, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("dim,birth,death\n")
        for dim, birth, death in diagram.pairs:
            d = "inf" if math.isinf(death) else f"{death:.12g}"
            fh.write(f"{dim},{birth:.12g},{d}\n")


def export_betti_curve_csv(curve: BettiCurve, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        names = ",".join(f"B{k}" for k in range(curve.dimension))
        fh.write(f"vf,{names}\n")
        for t, c in zip(curve.thresholds, curve.counts):
            fh.write(f"{t:.12g}," + ",".join(str(v) for v in c) + "\n")


SVG_SIZE = 360
SVG_MARGIN = 40
SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c")


def export_diagram_svg(diagram: PersistenceDiagram, path) -> None:
    """Scatter of (birth, death) per dimension; infinite deaths sit on the top rail."""
    finite = [v for p in diagram.pairs for v in p[1:] if math.isfinite(v)]
    hi = max(finite + [1.0])
    lo = min(finite + [0.0])
    span = hi - lo or 1.0
    size, m = SVG_SIZE, SVG_MARGIN
    inner = size - 2 * m

    def sx(v):
        return m + (v - lo) / span * inner

    def sy(v):
        return size - m - (v - lo) / span * inner

    rows = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{sx(lo)}" y1="{sy(lo)}" x2="{sx(hi)}" y2="{sy(hi)}" '
        'stroke="#999" stroke-dasharray="4 3"/>',
        f'<line x1="{m}" y1="{size - m}" x2="{size - m}" y2="{size - m}" stroke="black"/>',
        f'<line x1="{m}" y1="{m}" x2="{m}" y2="{size - m}" stroke="black"/>',
        f'<text x="{size // 2}" y="{size - 8}" font-size="12" text-anchor="middle">birth (1 - vf)</text>',
        f'<text x="12" y="{size // 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 12 {size // 2})">death</text>',
    ]
    for dim, birth, death in diagram.pairs:
        color = SVG_COLORS[dim % len(SVG_COLORS)]
        if math.isinf(death):
            rows.append(f'<path d="M {sx(birth) - 4} {m + 4} L {sx(birth)} {m - 4} '
                        f'L {sx(birth) + 4} {m + 4} Z" fill="{color}" class="dim{dim} inf"/>')
        else:
            rows.append(f'<circle cx="{sx(birth)}" cy="{sy(death)}" r="3.5" '
                        f'fill="{color}" fill-opacity="0.8" class="dim{dim}"/>')
    for dim in range(diagram.dimension):
        rows.append(f'<circle cx="{size - m - 90}" cy="{m + 14 * dim}" r="4" '
                    f'fill="{SVG_COLORS[dim % len(SVG_COLORS)]}"/>')
        rows.append(f'<text x="{size - m - 80}" y="{m + 14 * dim + 4}" font-size="11">'
                    f'dim {dim}</text>')
    rows.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
