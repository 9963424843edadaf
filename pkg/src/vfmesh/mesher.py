"""Threshold-mesh extraction and topological anti-aliasing.

A mesh is the set of grid cells with volume fraction at or above the
threshold.  Two aliasing artifacts are repaired from subcell data:

* Pinches: exactly two cells meeting at a vertex with no shared edge (2D),
  or two 3D cells meeting at an edge or vertex with no shared face.  A
  pinch is connected if its subcell is interior (vf >= threshold), else
  separated.  Repair splits cells with a template (default one-to-five:
  an inset center quad plus four edge trapezoids) and removes or adds the
  children touching the pinch.  Adjacent pinches must resolve the same
  way; conflicting chains fall back to a configured policy.
* Archipelagos: disconnected islands are joined by template children laid
  along bridges of interior grid edges, then components smaller than a
  cell-count floor are removed.

3D pinches are detected and classified only; their repair templates are
out of scope, so resolutions are emitted as suggestions.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import gcd

import numpy as np
from scipy import ndimage

from .grid import Grid, SubcellIndex, VolumeFractionField

logger = logging.getLogger(__name__)

CONNECT = "connect"
SEPARATE = "separate"
UNRESOLVED = "unresolved"

FOUR_CONN_2D = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
SIX_CONN_3D = ndimage.generate_binary_structure(3, 1)


class MeshError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Split templates (pluggable; resolution logic never depends on geometry)

CORNERS = ((0, 0), (1, 0), (1, 1), (0, 1))
SIDES = ("S", "E", "N", "W")  # edge of the cell each side child sits on


class FiveSplit:
    """One-to-five split: inset center quad C plus trapezoids S/E/N/W.

    Every corner of the parent belongs to exactly two side children, every
    parent edge to exactly one, and removing the children at any corner
    set never leaves point contacts inside the cell (C touches all sides
    along edges).  ``inset`` is the center-quad corner position.
    """

    name = "five"
    inset = Fraction(1, 4)

    def child_ids(self):
        return ("C", "S", "E", "N", "W")

    def child_polygon(self, child: str) -> list[tuple[Fraction, Fraction]]:
        """Cell-relative CCW vertices, exact rational coordinates."""
        t = self.inset
        u = 1 - t
        v00, v10, v11, v01 = (0, 0), (1, 0), (1, 1), (0, 1)
        i00, i10, i11, i01 = (t, t), (u, t), (u, u), (t, u)
        polys = {
            "C": [i00, i10, i11, i01],
            "S": [v00, v10, i10, i00],
            "E": [v10, v11, i11, i10],
            "N": [v11, v01, i01, i11],
            "W": [v01, v00, i00, i01],
        }
        return [(Fraction(a), Fraction(b)) for a, b in polys[child]]

    def children_at_corner(self, corner) -> tuple[str, ...]:
        return {
            (0, 0): ("S", "W"),
            (1, 0): ("S", "E"),
            (1, 1): ("E", "N"),
            (0, 1): ("N", "W"),
        }[tuple(corner)]

    def child_on_side(self, side: str) -> str:
        return side

    def covers_corner(self, child: str, corner) -> bool:
        return child in self.children_at_corner(corner)


class QuarterSplit:
    """One-to-four quadrisection; kept for comparison experiments.

    Not the default: removing the corner children at two opposite corners
    of one cell leaves its two remaining quarters meeting only at the cell
    center, i.e. a new pinch.
    """

    name = "quarter"

    def child_ids(self):
        return ("00", "10", "11", "01")

    def child_polygon(self, child: str) -> list[tuple[Fraction, Fraction]]:
        h = Fraction(1, 2)
        qx, qy = int(child[0]), int(child[1])
        x0, y0 = qx * h, qy * h
        return [(x0, y0), (x0 + h, y0), (x0 + h, y0 + h), (x0, y0 + h)]

    def children_at_corner(self, corner) -> tuple[str, ...]:
        return (f"{corner[0]}{corner[1]}",)

    def child_on_side(self, side: str) -> str:
        raise MeshError("quadrisection has no unique side child")

    def covers_corner(self, child: str, corner) -> bool:
        return child == f"{corner[0]}{corner[1]}"


DEFAULT_TEMPLATE = FiveSplit()


# ---------------------------------------------------------------------------
# Mesh data

@dataclass(frozen=True)
class Pinch:
    """A non-face-connected local configuration.

    ``location`` is the pinch vertex or edge; ``incident_cells`` the two
    material cells meeting there; ``case_id`` the canonical occupancy
    pattern of the surrounding 2^d neighborhood.
    """

    location: SubcellIndex
    case_id: str
    label: str
    incident_cells: tuple[tuple[int, ...], tuple[int, ...]]
    resolution: str = UNRESOLVED

    def to_json(self) -> dict:
        loc = {"kind": self.location.kind, "index": list(self.location.index)}
        if self.location.axis is not None:
            loc["axis"] = self.location.axis
        return {"location": loc, "case": self.case_id, "label": self.label,
                "resolution": self.resolution}


@dataclass
class CubicalMesh:
    """Retained cells plus template children.

    ``children[(i, j)]`` lists the present child ids of a split cell (a
    retained cell may shed children, a complement cell may gain them);
    cells absent from the dict are full iff retained.  ``provenance``
    tags each (cell, child) with the repair stage that created it.
    """

    grid: Grid
    threshold: float
    retained: np.ndarray
    children: dict[tuple[int, ...], set[str]] = field(default_factory=dict)
    provenance: dict[tuple, str] = field(default_factory=dict)
    template: FiveSplit = field(default_factory=lambda: DEFAULT_TEMPLATE)

    # -- structure queries ---------------------------------------------------

    @property
    def dimension(self) -> int:
        return self.grid.dimension

    def is_material_cell(self, idx) -> bool:
        idx = tuple(idx)
        if idx in self.children:
            return bool(self.children[idx])
        return self._in_range(idx) and bool(self.retained[idx])

    def _in_range(self, idx) -> bool:
        return all(0 <= idx[a] < self.grid.extents[a] for a in range(self.dimension))

    def material_cells(self) -> list[tuple[int, ...]]:
        cells = {tuple(idx) for idx in np.argwhere(self.retained)}
        for idx, present in self.children.items():
            if present:
                cells.add(idx)
            else:
                cells.discard(idx)
        return sorted(cells)

    def corner_occupied(self, cell, corner) -> bool:
        """Does material of ``cell`` cover a neighborhood of that corner?"""
        cell = tuple(cell)
        if not self._in_range(cell):
            return False
        if cell in self.children:
            return any(self.template.covers_corner(ch, corner)
                       for ch in self.children[cell])
        return bool(self.retained[cell])

    # -- elements -------------------------------------------------------------

    def elements(self):
        """Yield (parent cell, child id or None, CCW world vertices, provenance)."""
        if self.dimension != 2:
            raise MeshError("explicit elements are 2D only")
        step = self.grid.cell_size
        for idx in self.material_cells():
            origin = self.grid.base + np.array(idx, float) * step
            if idx in self.children:
                for ch in sorted(self.children[idx]):
                    rel = self.template.child_polygon(ch)
                    pts = np.array([[origin[0] + float(a) * step,
                                     origin[1] + float(b) * step] for a, b in rel])
                    tag = self.provenance.get((idx, ch), "template")
                    yield idx, ch, self.grid.to_world(pts), tag
            else:
                pts = origin + np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float) * step
                yield idx, None, self.grid.to_world(pts), "grid"

    def element_quarter_polygons(self):
        """Element outlines in exact quarter-cell integer units (grid frame)."""
        for idx in self.material_cells():
            ox, oy = 4 * idx[0], 4 * idx[1]
            if idx in self.children:
                for ch in sorted(self.children[idx]):
                    rel = self.template.child_polygon(ch)
                    poly = [(ox + int(4 * a), oy + int(4 * b)) for a, b in rel]
                    yield (idx, ch), poly
            else:
                yield (idx, None), [(ox, oy), (ox + 4, oy), (ox + 4, oy + 4), (ox, oy + 4)]

    # -- connectivity ---------------------------------------------------------

    def pre_repair_labels(self):
        """Face-adjacency component labels of the retained cells only."""
        structure = FOUR_CONN_2D if self.dimension == 2 else SIX_CONN_3D
        labels, n = ndimage.label(self.retained, structure=structure)
        return labels, int(n)

    def component_labels(self):
        """Union-find over elements sharing a boundary segment.

        Returns (label per element key, number of components); element keys
        are (cell, child-or-None).  Exact integer quarter-unit coordinates
        make shared-segment detection robust.
        """
        if self.dimension != 2:
            labels, n = self.pre_repair_labels()
            out = {}
            for idx in self.material_cells():
                out[(idx, None)] = int(labels[idx])
            return out, n
        keys = []
        seg_owner: dict[tuple, list[int]] = {}
        for key, poly in self.element_quarter_polygons():
            eid = len(keys)
            keys.append(key)
            for a, b in zip(poly, poly[1:] + poly[:1]):
                for seg in _unit_segments(a, b):
                    seg_owner.setdefault(seg, []).append(eid)
        parent = list(range(len(keys)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for owners in seg_owner.values():
            for other in owners[1:]:
                ra, rb = find(owners[0]), find(other)
                if ra != rb:
                    parent[rb] = ra
        roots = {}
        labels = {}
        for eid, key in enumerate(keys):
            r = find(eid)
            labels[key] = roots.setdefault(r, len(roots))
        return labels, len(roots)

    def component_cells(self):
        """Map component label -> set of parent cells contributing material."""
        labels, n = self.component_labels()
        comp: dict[int, set] = {}
        for (cell, _child), lab in labels.items():
            comp.setdefault(lab, set()).add(cell)
        return comp

    def copy(self) -> "CubicalMesh":
        return CubicalMesh(self.grid, self.threshold, self.retained.copy(),
                           {k: set(v) for k, v in self.children.items()},
                           dict(self.provenance), self.template)


def _unit_segments(a, b):
    """Split an integer segment into unit steps so partial overlaps match."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    n = gcd(abs(dx), abs(dy))
    sx, sy = dx // n, dy // n
    for k in range(n):
        p = (a[0] + k * sx, a[1] + k * sy)
        q = (a[0] + (k + 1) * sx, a[1] + (k + 1) * sy)
        yield (p, q) if p <= q else (q, p)


# ---------------------------------------------------------------------------
# Extraction

def extract_mesh(field: VolumeFractionField, vf_threshold: float,
                 template=None) -> CubicalMesh:
    """Retain cells with vf >= threshold (inclusive; thresholds above the
    field maximum give an empty mesh)."""
    if vf_threshold < 0:
        raise MeshError("threshold must be non-negative")
    retained = field.cells >= vf_threshold
    return CubicalMesh(field.grid, float(vf_threshold), retained,
                       template=template or DEFAULT_TEMPLATE)


# ---------------------------------------------------------------------------
# Pinch detection

def detect_pinches(mesh: CubicalMesh) -> list[Pinch]:
    if mesh.dimension == 2:
        return _detect_pinches_2d(mesh)
    return _detect_pinches_3d(mesh)


def _corner_occupancy_arrays(mesh: CubicalMesh) -> np.ndarray:
    """occ[i, j, c]: cell (i, j) has material at corner CORNERS[c]."""
    nx, ny = mesh.grid.extents
    occ = np.repeat(mesh.retained[:, :, None], 4, axis=2).copy()
    for idx, present in mesh.children.items():
        for c, corner in enumerate(CORNERS):
            occ[idx[0], idx[1], c] = any(
                mesh.template.covers_corner(ch, corner) for ch in present)
    return occ


def _detect_pinches_2d(mesh: CubicalMesh) -> list[Pinch]:
    nx, ny = mesh.grid.extents
    occ = _corner_occupancy_arrays(mesh)
    pad = np.zeros((nx + 2, ny + 2, 4), dtype=bool)
    pad[1:-1, 1:-1] = occ
    # Quadrants around node (i, j): SW cell (i-1,j-1) corner (1,1) etc.
    sw = pad[0:nx + 1, 0:ny + 1, 2]
    se = pad[1:nx + 2, 0:ny + 1, 3]
    ne = pad[1:nx + 2, 1:ny + 2, 0]
    nw = pad[0:nx + 1, 1:ny + 2, 1]
    diag = sw & ne & ~se & ~nw
    anti = se & nw & ~sw & ~ne
    pinches = []
    for i, j in np.argwhere(diag | anti):
        if diag[i, j]:
            cells = ((i - 1, j - 1), (i, j))
        else:
            cells = ((i, j - 1), (i - 1, j))
        pinches.append(Pinch(SubcellIndex("vertex", (int(i), int(j))),
                             "2d-v1", "2D vertex", cells))
    return pinches


# 3D case table ---------------------------------------------------------------

_EDGE_RING_OFFSETS = {
    0: ((0, 0, 0), (0, 1, 0), (0, 1, 1), (0, 0, 1)),
    1: ((0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)),
    2: ((0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)),
}


def _cube_symmetries():
    """The 48 signed axis permutations acting on the 2x2x2 cell block."""
    import itertools

    perms = list(itertools.permutations(range(3)))
    maps = []
    for perm in perms:
        for signs in itertools.product((0, 1), repeat=3):
            m = []
            for bit in range(8):
                c = ((bit >> 0) & 1, (bit >> 1) & 1, (bit >> 2) & 1)
                img = [0, 0, 0]
                for a in range(3):
                    v = c[perm[a]]
                    img[a] = v ^ signs[a]
                m.append(img[0] | (img[1] << 1) | (img[2] << 2))
            maps.append(tuple(m))
    return sorted(set(maps))


_SYMMETRIES = _cube_symmetries()


def _canonical_pattern(pattern: int) -> int:
    best = 255
    for m in _SYMMETRIES:
        img = 0
        for bit in range(8):
            if pattern & (1 << bit):
                img |= 1 << m[bit]
        best = min(best, img)
    return best


def _pattern_analysis(pattern: int):
    """Pinched center edges and residual vertex pinch of an 8-cell pattern.

    Cells are bits a | b<<1 | c<<2 for offsets (a, b, c) in {0,1}^3 around
    the center vertex.  An edge along axis ``a`` is pinched when exactly
    its diagonal cell pair is occupied among the four cells of its ring.
    The center vertex is pinched when, after merging the diagonal pairs of
    pinched edges, the occupied (or empty) cells still fall into more than
    one face-connected component: material or complement meeting at the
    vertex alone.
    """
    occupied = [b for b in range(8) if pattern & (1 << b)]
    empty = [b for b in range(8) if not pattern & (1 << b)]

    def bit(a, b, c):
        return a | (b << 1) | (c << 2)

    pinched_edges = []
    empty_pairs = []
    for axis in range(3):
        for side in (0, 1):
            ring = []
            for off in _EDGE_RING_OFFSETS[axis]:
                coord = list(off)
                coord[axis] = side
                ring.append(bit(*coord))
            occ = [b for b in ring if pattern & (1 << b)]
            if len(occ) == 2 and (ring.index(occ[0]) - ring.index(occ[1])) % 2 == 0:
                pinched_edges.append((axis, side, tuple(occ)))
                empty_pairs.append(tuple(b for b in ring if b not in occ))

    def face_adjacent(x, y):
        return bin(x ^ y).count("1") == 1

    def components(cells, extra_pairs):
        parent = {c: c for c in cells}

        def find(c):
            while parent[c] != c:
                parent[c] = parent[parent[c]]
                c = parent[c]
            return c

        def union(x, y):
            rx, ry = find(x), find(y)
            if rx != ry:
                parent[ry] = rx

        for x in cells:
            for y in cells:
                if x < y and face_adjacent(x, y):
                    union(x, y)
        for x, y in extra_pairs:
            if x in parent and y in parent:
                union(x, y)
        return len({find(c) for c in cells})

    pinch_pairs = [pair for _, _, pair in pinched_edges]
    occ_comps = components(occupied, pinch_pairs) if occupied else 0
    emp_comps = components(empty, empty_pairs) if empty else 0
    vertex_pinched = occ_comps > 1 or emp_comps > 1
    return pinched_edges, vertex_pinched


def _build_case_table():
    """Canonical invalid 2x2x2 patterns -> (case id, label).

    Invalid means some center-incident edge is pinched or the center
    vertex is.  The enumeration yields exactly 11 canonical cases.
    """
    cases = {}
    for pattern in range(256):
        canon = _canonical_pattern(pattern)
        if canon in cases:
            continue
        edges, vertex = _pattern_analysis(canon)
        if not edges and not vertex:
            continue
        parts = []
        if edges:
            parts.append(f"{len(edges)} edge" + ("s" if len(edges) > 1 else ""))
        if vertex:
            parts.append("1 vertex")
        cases[canon] = (f"3d-{len(cases) + 1:02d}", ", ".join(parts))
    return cases


_CASE_TABLE = _build_case_table()


def classify_neighborhood_3d(pattern: int):
    """(case id, label) of an invalid 8-cell pattern, or None if valid."""
    return _CASE_TABLE.get(_canonical_pattern(pattern))


def taxonomy_3d():
    """The canonical pinch cases as {case id: label}."""
    return {cid: label for cid, label in _CASE_TABLE.values()}


def _detect_pinches_3d(mesh: CubicalMesh) -> list[Pinch]:
    ret = mesh.retained
    nx, ny, nz = mesh.grid.extents
    pinches = []

    # Edge pinches: diagonal pair in the 4-cell ring around an interior edge.
    ring_slices = {
        0: lambda r: (r[:, :-1, :-1], r[:, 1:, :-1], r[:, 1:, 1:], r[:, :-1, 1:]),
        1: lambda r: (r[:-1, :, :-1], r[1:, :, :-1], r[1:, :, 1:], r[:-1, :, 1:]),
        2: lambda r: (r[:-1, :-1, :], r[1:, :-1, :], r[1:, 1:, :], r[:-1, 1:, :]),
    }
    pure_edge_case = classify_neighborhood_3d(_edge_pair_pattern())
    for axis in range(3):
        A, B, C, D = ring_slices[axis](ret)
        diag = A & C & ~B & ~D
        anti = B & D & ~A & ~C
        for arr, pair_kind in ((diag, 0), (anti, 1)):
            for pos in np.argwhere(arr):
                # argwhere positions index the sliced arrays
                i, j, k = (int(v) for v in pos)
                if axis == 0:
                    edge_idx = (i, j + 1, k + 1)
                    c0 = (i, j + pair_kind, k)
                    c1 = (i, j + 1 - pair_kind, k + 1)
                elif axis == 1:
                    edge_idx = (i + 1, j, k + 1)
                    c0 = (i + pair_kind, j, k)
                    c1 = (i + 1 - pair_kind, j, k + 1)
                else:
                    edge_idx = (i + 1, j + 1, k)
                    c0 = (i + pair_kind, j, k)
                    c1 = (i + 1 - pair_kind, j + 1, k)
                pinches.append(Pinch(SubcellIndex("edge", edge_idx, axis=axis),
                                     pure_edge_case[0], pure_edge_case[1], (c0, c1)))

    # Vertex neighborhoods: report the center vertex when it is itself pinched.
    pad = np.zeros((nx + 2, ny + 2, nz + 2), dtype=bool)
    pad[1:-1, 1:-1, 1:-1] = ret
    for i in range(nx + 1):
        for j in range(ny + 1):
            for k in range(nz + 1):
                block = pad[i:i + 2, j:j + 2, k:k + 2]
                if block.sum() < 2:
                    continue
                pattern = 0
                for a in (0, 1):
                    for b in (0, 1):
                        for c in (0, 1):
                            if block[a, b, c]:
                                pattern |= 1 << (a | (b << 1) | (c << 2))
                edges, vertex = _pattern_analysis(pattern)
                if not vertex:
                    continue
                case = classify_neighborhood_3d(pattern)
                occ = [(i - 1 + a, j - 1 + b, k - 1 + c)
                       for a in (0, 1) for b in (0, 1) for c in (0, 1)
                       if pattern & (1 << (a | (b << 1) | (c << 2)))]
                # the body-diagonal pair meeting only at this vertex
                pair = _vertex_pinch_pair(pattern, (i - 1, j - 1, k - 1)) or (occ[0], occ[-1])
                pinches.append(Pinch(SubcellIndex("vertex", (i, j, k)),
                                     case[0], case[1], pair))
    return pinches


def _edge_pair_pattern() -> int:
    # two cells sharing exactly one edge: offsets (0,0,0) and (0,1,1)
    return (1 << 0) | (1 << (0 | (1 << 1) | (1 << 2)))


def _vertex_pinch_pair(pattern: int, base):
    for b in range(8):
        opp = b ^ 0b111
        if pattern & (1 << b) and pattern & (1 << opp) and b < opp:
            c0 = (base[0] + (b & 1), base[1] + ((b >> 1) & 1), base[2] + ((b >> 2) & 1))
            c1 = (base[0] + (opp & 1), base[1] + ((opp >> 1) & 1), base[2] + ((opp >> 2) & 1))
            return (c0, c1)
    return None


# ---------------------------------------------------------------------------
# Classification and conflict resolution

def classify_pinch(pinch: Pinch, field: VolumeFractionField,
                   vf_threshold: float) -> Pinch:
    """Connect iff the pinch subcell is interior (vf >= threshold, inclusive)."""
    value = field.value(pinch.location)
    res = CONNECT if value >= vf_threshold else SEPARATE
    return replace(pinch, resolution=res)


def resolve_adjacent_conflicts(pinches: list[Pinch], policy: str = SEPARATE) -> list[Pinch]:
    """Force equal resolutions within each chain of pinches sharing a cell.

    Chains separated by pinch-free cells keep their own resolutions.
    ``policy`` in {connect, separate, majority} settles conflicting chains
    (majority ties fall to separate).
    """
    if policy not in (CONNECT, SEPARATE, "majority"):
        raise MeshError(f"unknown conflict policy {policy!r}")
    n = len(pinches)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    by_cell: dict[tuple, int] = {}
    for idx, p in enumerate(pinches):
        for cell in p.incident_cells:
            if cell in by_cell:
                ra, rb = find(by_cell[cell]), find(idx)
                if ra != rb:
                    parent[rb] = ra
            else:
                by_cell[cell] = idx

    chains: dict[int, list[int]] = {}
    for idx in range(n):
        chains.setdefault(find(idx), []).append(idx)

    out = list(pinches)
    for members in chains.values():
        res = {pinches[m].resolution for m in members}
        if len(res) <= 1:
            continue
        if policy == "majority":
            votes = [pinches[m].resolution for m in members]
            decided = CONNECT if votes.count(CONNECT) > votes.count(SEPARATE) else SEPARATE
        else:
            decided = policy
        for m in members:
            out[m] = replace(pinches[m], resolution=decided)
    return out


# ---------------------------------------------------------------------------
# 2D repair

def _corner_in_cell(node, cell):
    return (node[0] - cell[0], node[1] - cell[1])


def _cells_around_node(node):
    i, j = node
    return [(i - 1, j - 1), (i, j - 1), (i, j), (i - 1, j)]


def apply_pinch_templates_2d(mesh: CubicalMesh, pinches: list[Pinch]) -> CubicalMesh:
    """Split cells at each pinch vertex and drop/add the corner children.

    Separate splits the material cells and removes their children at the
    pinch vertex; connect splits the complement cells and adds theirs.
    Children tile the parent exactly, so area is conserved.
    """
    if mesh.dimension != 2:
        raise MeshError("template repair is 2D only")
    out = mesh.copy()
    tpl = out.template
    all_children = set(tpl.child_ids())
    for p in pinches:
        if p.location.kind != "vertex":
            continue
        if p.resolution == UNRESOLVED:
            raise MeshError(f"pinch at {p.location.index} is unresolved")
        node = p.location.index
        for cell in _cells_around_node(node):
            if not out._in_range(cell):
                continue
            corner = _corner_in_cell(node, cell)
            at_corner = set(tpl.children_at_corner(corner))
            material = out.is_material_cell(cell)
            if p.resolution == SEPARATE and material:
                present = out.children.get(cell)
                if present is None:
                    present = set(all_children)
                present -= at_corner
                out.children[cell] = present
                for ch in present:
                    out.provenance.setdefault((cell, ch), "pinch-separate")
            elif p.resolution == CONNECT and not material:
                present = out.children.setdefault(cell, set())
                present |= at_corner
                for ch in at_corner:
                    out.provenance[(cell, ch)] = "pinch-connect"
    _fill_completed_cells(out)
    return out


def _fill_completed_cells(mesh: CubicalMesh):
    # A complement cell that accumulated all four side children gets its
    # center too (swap), avoiding a spurious template-sized hole.
    tpl = mesh.template
    if not isinstance(tpl, FiveSplit):
        return
    for cell, present in mesh.children.items():
        if present >= {"S", "E", "N", "W"} and "C" not in present:
            if not mesh.retained[cell]:
                present.add("C")
                mesh.provenance[(cell, "C")] = "pinch-connect"


# ---------------------------------------------------------------------------
# Archipelago joining and island removal

def join_archipelago(mesh: CubicalMesh, field: VolumeFractionField,
                     vf_threshold: float,
                     forbidden_vertices: set | None = None) -> CubicalMesh:
    """Join components bridged by paths of interior grid edges.

    Breadth-first wavefronts grow from every component simultaneously, so
    the nearest pair joins first; ties break on component id then edge
    index.  Paths may not pass through vertices whose pinch was resolved
    as separate (``forbidden_vertices``).  Template children are added
    along each bridge: the side child of every non-material cell flanking
    a path edge, plus the corner children fanning around interior path
    vertices.
    """
    if mesh.dimension != 2:
        raise MeshError("archipelago joining is 2D only")
    out = mesh.copy()
    forbidden = forbidden_vertices or set()

    while True:
        labels, n = out.component_labels()
        if n <= 1:
            break
        cell_comp: dict[tuple, int] = {}
        for (cell, _child), lab in labels.items():
            cell_comp[cell] = lab
        bridge = _shortest_bridge(out, field, vf_threshold, cell_comp, forbidden)
        if bridge is None:
            break
        _apply_bridge(out, bridge)
        _, n_after = out.component_labels()
        if n_after >= n:  # defensive: a bridge must merge something
            logger.warning("bridge application did not reduce component count")
            break
    return out


def _interior_edge_masks(field, threshold):
    return {axis: field.edges[axis] >= threshold for axis in (0, 1)}


def _edge_between(u, w):
    """(axis, edge-array index) of the grid edge joining adjacent nodes."""
    if u[1] == w[1]:
        return 0, (min(u[0], w[0]), u[1])
    return 1, (u[0], min(u[1], w[1]))


def _edge_flank_cells(axis, idx):
    i, j = idx
    if axis == 0:  # runs along x at node row j: cells below/above
        return [((i, j - 1), "N"), ((i, j), "S")]
    return [((i - 1, j), "E"), ((i, j), "W")]


def _terminal_nodes(mesh: CubicalMesh, cell_comp, forbidden):
    """Nodes actually touched by material, labeled by component."""
    out: dict[tuple, int] = {}
    conflicts = set()
    for cell, comp in sorted(cell_comp.items()):
        for corner in CORNERS:
            if not mesh.corner_occupied(cell, corner):
                continue
            node = (cell[0] + corner[0], cell[1] + corner[1])
            if node in forbidden:
                continue
            if node in out and out[node] != comp:
                conflicts.add(node)
            out.setdefault(node, comp)
    return out, conflicts


def _shortest_bridge(mesh, field, threshold, cell_comp, forbidden):
    """Multi-source BFS over grid nodes linked by interior edges.

    Wavefronts start on every node touched by a component and grow one
    interior edge at a time; the first contact between fronts of two
    different components is a shortest bridge.  Returns the node walk.
    """
    interior = _interior_edge_masks(field, threshold)
    node_comp, _conflicts = _terminal_nodes(mesh, cell_comp, forbidden)
    if len(set(node_comp.values())) < 2:
        return None

    def edge_interior(u, w):
        axis, idx = _edge_between(u, w)
        arr = interior[axis]
        return 0 <= idx[0] < arr.shape[0] and 0 <= idx[1] < arr.shape[1] and arr[idx]

    nx, ny = mesh.grid.extents
    state: dict[tuple, tuple[int, tuple | None]] = {}
    queue = deque()
    for node, comp in sorted(node_comp.items(), key=lambda kv: (kv[1], kv[0])):
        state[node] = (comp, None)
        queue.append(node)

    while queue:
        u = queue.popleft()
        comp, _ = state[u]
        i, j = u
        for w in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if not (0 <= w[0] <= nx and 0 <= w[1] <= ny):
                continue
            if w in forbidden or not edge_interior(u, w):
                continue
            if w in state:
                wcomp, _ = state[w]
                if wcomp != comp:
                    left = _trace(state, u)
                    right = _trace(state, w)
                    return left + list(reversed(right))
                continue
            state[w] = (comp, u)
            if w in node_comp and node_comp[w] != comp:
                return _trace(state, w)
            queue.append(w)
    return None


def _trace(state, node):
    path = []
    while node is not None:
        path.append(node)
        node = state[node][1]
    return list(reversed(path))


def _apply_bridge(mesh: CubicalMesh, path):
    """Lay template children along a node walk: the side child of every
    non-material cell flanking each walk edge, plus corner fans at every
    walk node so consecutive pieces and the endpoint components share
    full boundary segments."""
    tpl = mesh.template

    def add(cell, child, tag="bridge"):
        present = mesh.children.setdefault(cell, set())
        if child not in present:
            present.add(child)
            mesh.provenance[(cell, child)] = tag

    for u, w in zip(path, path[1:]):
        axis, idx = _edge_between(u, w)
        for cell, side in _edge_flank_cells(axis, idx):
            if not mesh._in_range(cell):
                continue
            if cell not in mesh.children and mesh.retained[cell]:
                continue  # full cell already provides this boundary
            add(cell, tpl.child_on_side(side))
    for node in path:
        for cell in _cells_around_node(node):
            if not mesh._in_range(cell):
                continue
            if cell not in mesh.children and mesh.retained[cell]:
                continue  # full cell already fans the node
            corner = _corner_in_cell(node, cell)
            for ch in tpl.children_at_corner(corner):
                add(cell, ch)
    _fill_completed_cells(mesh)


def remove_islands(mesh: CubicalMesh, min_cells: int) -> CubicalMesh:
    """Delete components touching fewer than ``min_cells`` parent cells."""
    if min_cells <= 0:
        logger.warning("remove_islands(min_cells=%d) is a no-op", min_cells)
        return mesh.copy()
    out = mesh.copy()
    labels, n = out.component_labels()
    sizes: dict[int, set] = {}
    for (cell, _child), lab in labels.items():
        sizes.setdefault(lab, set()).add(cell)
    doomed = {lab for lab, cells in sizes.items() if len(cells) < min_cells}
    if not doomed:
        return out
    for (cell, child), lab in labels.items():
        if lab not in doomed:
            continue
        if child is None:
            out.retained[cell] = False
        else:
            out.children.get(cell, set()).discard(child)
    for cell in [c for c, present in out.children.items() if not present]:
        del out.children[cell]
        if out._in_range(cell):
            out.retained[cell] = False
    return out


# ---------------------------------------------------------------------------
# End-to-end repair

@dataclass
class RepairReport:
    pinches: list[Pinch]
    components_before: int
    components_after: int
    islands_removed: int
    sizes_before: list[int] = field(default_factory=list)
    sizes_after: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "pinches": [p.to_json() for p in self.pinches],
            "components_before": self.components_before,
            "components_after": self.components_after,
            "component_sizes_before": self.sizes_before,
            "component_sizes_after": self.sizes_after,
            "islands_removed": self.islands_removed,
        }


def repair_mesh(field: VolumeFractionField, vf_threshold: float,
                conflict_policy: str = SEPARATE, join: bool = True,
                min_cells: int = 1, template=None,
                reconcile_conflicts: bool = True):
    """extract -> detect -> classify -> reconcile -> split -> join -> prune.

    Returns (mesh, report).  In 3D the pinch templates are out of scope:
    pinches are detected and classified, the report carries the suggested
    resolutions, and the mesh keeps its plain retained cells.
    """
    mesh = extract_mesh(field, vf_threshold, template=template)
    labels0, before = mesh.pre_repair_labels()
    sizes_before = sorted(
        (int(n) for n in np.bincount(labels0.ravel())[1:] if n), reverse=True)
    pinches = [classify_pinch(p, field, vf_threshold) for p in detect_pinches(mesh)]
    if reconcile_conflicts:
        pinches = resolve_adjacent_conflicts(pinches, conflict_policy)
    islands_removed = 0
    if mesh.dimension == 2:
        repaired = apply_pinch_templates_2d(mesh, pinches)
        if join:
            forbidden = {p.location.index for p in pinches if p.resolution == SEPARATE}
            repaired = join_archipelago(repaired, field, vf_threshold, forbidden)
        if min_cells > 1:
            labels, n0 = repaired.component_labels()
            repaired = remove_islands(repaired, min_cells)
            _, n1 = repaired.component_labels()
            islands_removed = n0 - n1
        mesh = repaired
        _, after = mesh.component_labels()
        sizes_after = sorted((len(cells) for cells in mesh.component_cells().values()),
                             reverse=True)
    else:
        if pinches:
            logger.info("3D: %d pinch(es) reported, geometry unchanged", len(pinches))
        _, after = mesh.pre_repair_labels()
        sizes_after = sizes_before
    return mesh, RepairReport(pinches, int(before), int(after), islands_removed,
                              sizes_before, sizes_after)


# ---------------------------------------------------------------------------
# Export

def export_mesh(mesh: CubicalMesh, path, fmt: str) -> None:
    if fmt == "obj":
        _export_obj(mesh, path)
    elif fmt == "vtk-legacy":
        _export_vtk(mesh, path)
    else:
        raise MeshError(f"unknown mesh format {fmt!r} (expected obj or vtk-legacy)")


def _gather_2d(mesh: CubicalMesh):
    verts: dict[tuple, int] = {}
    faces = []
    tags = []
    for _cell, child, pts, tag in mesh.elements():
        face = []
        for p in pts:
            key = (round(float(p[0]), 12), round(float(p[1]), 12))
            face.append(verts.setdefault(key, len(verts)))
        faces.append(face)
        tags.append(0 if tag == "grid" else 1)
    coords = [k for k, _ in sorted(verts.items(), key=lambda kv: kv[1])]
    return coords, faces, tags


def _export_obj(mesh: CubicalMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vfmesh export\n")
        if mesh.dimension == 2:
            coords, faces, _tags = _gather_2d(mesh)
            for x, y in coords:
                fh.write(f"v {x:.12g} {y:.12g} 0\n")
            for face in faces:
                fh.write("f " + " ".join(str(i + 1) for i in face) + "\n")
        else:
            verts: dict[tuple, int] = {}
            lines = []
            for idx in mesh.material_cells():
                corners = mesh.grid.cell_corners_world(idx)
                ids = []
                for p in corners:
                    key = tuple(round(float(v), 12) for v in p)
                    ids.append(verts.setdefault(key, len(verts)))
                # quad faces of the hex, as in the VTK hexahedron ordering
                for quad in ((0, 1, 3, 2), (4, 5, 7, 6), (0, 1, 5, 4),
                             (2, 3, 7, 6), (0, 2, 6, 4), (1, 3, 7, 5)):
                    lines.append("f " + " ".join(str(ids[q] + 1) for q in quad))
            for key, _ in sorted(verts.items(), key=lambda kv: kv[1]):
                fh.write("v " + " ".join(f"{v:.12g}" for v in key) + "\n")
            for ln in lines:
                fh.write(ln + "\n")


def _export_vtk(mesh: CubicalMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vtk DataFile Version 3.0\nvfmesh\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        if mesh.dimension == 2:
            coords, faces, tags = _gather_2d(mesh)
            fh.write(f"POINTS {len(coords)} double\n")
            for x, y in coords:
                fh.write(f"{x:.12g} {y:.12g} 0\n")
            fh.write(f"CELLS {len(faces)} {5 * len(faces)}\n")
            for face in faces:
                fh.write("4 " + " ".join(str(i) for i in face) + "\n")
            fh.write(f"CELL_TYPES {len(faces)}\n")
            fh.write("\n".join(["9"] * len(faces)) + ("\n" if faces else ""))
            fh.write(f"CELL_DATA {len(faces)}\nSCALARS provenance int 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(str(t) for t in tags) + ("\n" if tags else ""))
        else:
            cells = mesh.material_cells()
            verts: dict[tuple, int] = {}
            hexes = []
            for idx in cells:
                corners = mesh.grid.cell_corners_world(idx)
                order = (0, 1, 3, 2, 4, 5, 7, 6)  # VTK hexahedron ordering
                ids = []
                for q in order:
                    key = tuple(round(float(v), 12) for v in corners[q])
                    ids.append(verts.setdefault(key, len(verts)))
                hexes.append(ids)
            coords = [k for k, _ in sorted(verts.items(), key=lambda kv: kv[1])]
            fh.write(f"POINTS {len(coords)} double\n")
            for p in coords:
                fh.write(" ".join(f"{v:.12g}" for v in p) + "\n")
            fh.write(f"CELLS {len(hexes)} {9 * len(hexes)}\n")
            for ids in hexes:
                fh.write("8 " + " ".join(str(i) for i in ids) + "\n")
            fh.write(f"CELL_TYPES {len(hexes)}\n")
            fh.write("\n".join(["12"] * len(hexes)) + ("\n" if hexes else ""))
            fh.write(f"CELL_DATA {len(hexes)}\nSCALARS provenance int 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(["0"] * len(hexes)) + ("\n" if hexes else ""))


def write_repair_report(report: RepairReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2)
        fh.write("\n")
