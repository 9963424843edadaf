"""Background grid and volume-fraction fields via subgrid sampling.

A uniform lattice (equal cell length per axis, optional rotation and
offset) covers the geometry.  One global sample lattice with spacing
``cell_size / s`` and a half-step inset serves every cell *and* every
lower-dimensional subcell: the fictitious cell centered on a vertex, edge,
or face picks up exactly the nearby quadrant sub-arrays of the neighboring
cells' samples.  With even ``s`` no sample ever lies on a cell boundary,
and each winding number is evaluated once.

Volume fractions are arithmetic means of winding numbers over those
windows; windows that extend past the grid boundary renormalize over the
in-domain samples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometrySoup, min_distance, winding_many

logger = logging.getLogger(__name__)

DEFAULT_MAX_CELLS = 10_000_000
DEFAULT_SAMPLES = {2: 4, 3: 2}


class GridError(ValueError):
    pass


def rotation_matrix_2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotation_matrix_3d(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about an arbitrary axis."""
    u = np.asarray(axis, dtype=float)
    n = np.linalg.norm(u)
    if n == 0:
        raise GridError("rotation axis must be nonzero")
    u = u / n
    K = np.array([[0, -u[2], u[1]], [u[2], 0, -u[0]], [-u[1], u[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


@dataclass(frozen=True)
class SubcellIndex:
    """Addresses a grid entity: kind in {cell, vertex, edge, face}.

    ``axis`` tags the direction an edge runs along, or a face's normal;
    it is None for cells and vertices.
    """

    kind: str
    index: tuple[int, ...]
    axis: int | None = None

    def __post_init__(self):
        if self.kind not in ("cell", "vertex", "edge", "face"):
            raise GridError(f"bad subcell kind {self.kind!r}")
        if self.kind in ("edge", "face") and self.axis is None:
            raise GridError(f"{self.kind} index requires an axis tag")


@dataclass(frozen=True)
class Grid:
    """Uniform background lattice.

    Grid-frame coordinates place node (0, ..., 0) at ``base``; world
    coordinates are ``R @ p_grid``.  ``extents`` counts cells per axis.
    """

    dimension: int
    cell_size: float
    rotation: np.ndarray
    base: np.ndarray
    extents: tuple[int, ...]

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.extents))

    def to_world(self, grid_pts: np.ndarray) -> np.ndarray:
        return np.asarray(grid_pts, dtype=float) @ self.rotation.T

    def to_grid(self, world_pts: np.ndarray) -> np.ndarray:
        return np.asarray(world_pts, dtype=float) @ self.rotation

    def node_grid_coords(self, index) -> np.ndarray:
        return self.base + np.asarray(index, dtype=float) * self.cell_size

    def node_world(self, index) -> np.ndarray:
        return self.to_world(self.node_grid_coords(index))

    def cell_center_world(self, index) -> np.ndarray:
        return self.to_world(self.base + (np.asarray(index, float) + 0.5) * self.cell_size)

    def cell_corners_world(self, index) -> np.ndarray:
        """Corner positions of a cell, CCW in 2D."""
        i = np.asarray(index, dtype=int)
        if self.dimension == 2:
            offs = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])
        else:
            offs = np.array([[a, b, c] for c in (0, 1) for b in (0, 1) for a in (0, 1)])
        return self.to_world(self.base + (i + offs) * self.cell_size)

    def subcell_center_world(self, sub: SubcellIndex) -> np.ndarray:
        i = np.asarray(sub.index, dtype=float)
        if sub.kind == "cell":
            c = i + 0.5
        elif sub.kind == "vertex":
            c = i
        elif sub.kind == "edge":
            c = i.copy()
            c[sub.axis] += 0.5
        else:  # face: normal-axis coordinate sits on the node plane
            c = i + 0.5
            c[sub.axis] -= 0.5
        return self.to_world(self.base + c * self.cell_size)


def build_grid(soup: GeometrySoup, cell_size: float, rotation=0.0, offset=None,
               padding: int = 0, max_cells: int = DEFAULT_MAX_CELLS) -> Grid:
    """Grid covering the soup's (rotated) bounding box plus padding cells.

    ``rotation`` is an angle in 2D or a 3x3 matrix / None in 3D; ``offset``
    shifts the lattice phase, in grid-frame length units.
    """
    if cell_size <= 0:
        raise GridError("cell_size must be positive")
    d = soup.dimension
    if d == 2:
        R = rotation_matrix_2d(float(rotation))
    else:
        if rotation is None or np.isscalar(rotation) and rotation == 0.0:
            R = np.eye(3)
        else:
            R = np.asarray(rotation, dtype=float)
            if R.shape != (3, 3):
                raise GridError("3D rotation must be a 3x3 matrix or None")
    off = np.zeros(d) if offset is None else np.asarray(offset, dtype=float)

    stack = [soup.points_a, soup.points_b]
    if soup.points_c is not None:
        stack.append(soup.points_c)
    g = np.vstack(stack) @ R  # inverse rotation: world -> grid frame
    gmin, gmax = g.min(axis=0), g.max(axis=0)

    # Tiny relief keeps float noise from inflating extents by a whole cell.
    eps = 1e-12 * max(soup.bbox_diagonal / cell_size, 1.0)
    base = off + cell_size * np.floor((gmin - off) / cell_size + eps) - padding * cell_size
    extents = tuple(max(1, int(np.ceil((gmax[a] - base[a]) / cell_size - eps))) + padding
                    for a in range(d))
    total = int(np.prod(extents))
    if total > max_cells:
        raise GridError(f"grid would have {total} cells (cap {max_cells})")
    return Grid(d, float(cell_size), R, base, extents)


# ---------------------------------------------------------------------------
# Sample lattice

def _axis_cuts(grid: Grid, s: int, axis: int, centered_on_nodes: bool):
    """Half-open [lo, hi) index ranges into the global sample lattice.

    Body windows align with cells; node windows center on vertices and get
    clipped to the domain (boundary renormalization happens via counts).
    """
    n = grid.extents[axis]
    if centered_on_nodes:
        lo = np.arange(n + 1) * s - s // 2
        hi = np.arange(n + 1) * s + s // 2
        return np.clip(lo, 0, n * s), np.clip(hi, 0, n * s)
    lo = np.arange(n) * s
    return lo, lo + s


def _check_samples(s: int):
    if s < 2 or s % 2 != 0:
        raise GridError(f"samples per axis must be even and >= 2, got {s}")


def lattice_points_world(grid: Grid, s: int) -> np.ndarray:
    """All global sample points, shape (prod(extents*s), d), C-order."""
    _check_samples(s)
    axes = [grid.base[a] + (np.arange(grid.extents[a] * s) + 0.5) * grid.cell_size / s
            for a in range(grid.dimension)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts_grid = np.stack([m.ravel() for m in mesh], axis=-1)
    return grid.to_world(pts_grid)


def sample_points(grid: Grid, sub: SubcellIndex, s: int) -> np.ndarray:
    """World-space sample points of the (fictitious) cell centered on ``sub``.

    These are exactly the global-lattice points falling in that window, so
    subcell samples coincide with sub-arrays of the adjacent cells' samples.
    """
    _check_samples(s)
    d = grid.dimension
    idx = sub.index
    ranges = []
    for a in range(d):
        if sub.kind == "cell":
            node_window = False
            pos = idx[a]
        elif sub.kind == "vertex":
            node_window = True
            pos = idx[a]
        elif sub.kind == "edge":
            node_window = a != sub.axis
            pos = idx[a]
        else:  # face
            node_window = a == sub.axis
            pos = idx[a]
        if node_window:
            lo, hi = pos * s - s // 2, pos * s + s // 2
        else:
            lo, hi = pos * s, (pos + 1) * s
        lo, hi = max(lo, 0), min(hi, grid.extents[a] * s)
        if lo >= hi:
            raise GridError(f"subcell {sub} has no in-domain samples")
        ranges.append(np.arange(lo, hi))
    mesh = np.meshgrid(*[(r + 0.5) * grid.cell_size / s + grid.base[a]
                         for a, r in enumerate(ranges)], indexing="ij")
    pts_grid = np.stack([m.ravel() for m in mesh], axis=-1)
    return grid.to_world(pts_grid)


# ---------------------------------------------------------------------------
# Volume-fraction field

@dataclass
class VolumeFractionField:
    """Mean winding number for every cell and lower-dimensional subcell.

    Values are finite reals and may exceed [0, 1] for overlapping input.
    ``edges[a]`` holds edges running along axis ``a``; ``faces[a]`` (3D)
    holds faces with normal ``a``.  Immutable once built.
    """

    grid: Grid
    s: int
    cells: np.ndarray
    vertices: np.ndarray
    edges: dict[int, np.ndarray]
    faces: dict[int, np.ndarray] = field(default_factory=dict)
    boundary_hits: int = 0

    @property
    def dimension(self) -> int:
        return self.grid.dimension

    def value(self, sub: SubcellIndex) -> float:
        if sub.kind == "cell":
            return float(self.cells[sub.index])
        if sub.kind == "vertex":
            return float(self.vertices[sub.index])
        if sub.kind == "edge":
            return float(self.edges[sub.axis][sub.index])
        return float(self.faces[sub.axis][sub.index])

    def max_value(self) -> float:
        return float(self.cells.max())

    def dump_csv(self, path) -> None:
        """Audit dump: ``kind,i,j[,k],axis,value`` rows."""
        d = self.dimension
        with open(path, "w", encoding="utf-8") as fh:
            head_idx = "i,j" if d == 2 else "i,j,k"
            fh.write(f"kind,{head_idx},axis,value\n")
            def emit(kind, arr, axis=""):
                for idx in np.ndindex(arr.shape):
                    idx_s = ",".join(str(v) for v in idx)
                    fh.write(f"{kind},{idx_s},{axis},{arr[idx]:.12g}\n")
            emit("cell", self.cells)
            emit("vertex", self.vertices)
            for a, arr in sorted(self.edges.items()):
                emit("edge", arr, a)
            for a, arr in sorted(self.faces.items()):
                emit("face", arr, a)


def compute_field(soup: GeometrySoup, grid: Grid, s: int | None = None,
                  report_boundary: bool = False) -> VolumeFractionField:
    """Evaluate the winding number once per global sample and average.

    Every subcell mean reuses the same lattice values through prefix sums;
    boundary windows renormalize over their in-domain sample counts.
    """
    if soup.dimension != grid.dimension:
        raise GridError("soup and grid dimension mismatch")
    s = DEFAULT_SAMPLES[grid.dimension] if s is None else int(s)
    _check_samples(s)

    pts = lattice_points_world(grid, s)
    w = winding_many(pts, soup)
    boundary_hits = 0
    if report_boundary:
        boundary_hits = int(on_boundary_count(pts, soup))
        if boundary_hits:
            logger.warning("%d sample(s) within on-boundary tolerance", boundary_hits)

    shape = tuple(e * s for e in grid.extents)
    W = w.reshape(shape)
    return _field_from_lattice(grid, s, W, boundary_hits)


def on_boundary_count(pts: np.ndarray, soup: GeometrySoup) -> int:
    return int((min_distance(pts, soup) <= soup.on_boundary_tol).sum())


def _field_from_lattice(grid: Grid, s: int, W: np.ndarray,
                        boundary_hits: int = 0) -> VolumeFractionField:
    d = grid.dimension
    S = _prefix_sum(W)
    body = [_axis_cuts(grid, s, a, centered_on_nodes=False) for a in range(d)]
    node = [_axis_cuts(grid, s, a, centered_on_nodes=True) for a in range(d)]

    def mean(cut_kinds):
        cuts = [node[a] if is_node else body[a] for a, is_node in enumerate(cut_kinds)]
        return _window_means(S, cuts)

    cells = mean([False] * d)
    vertices = mean([True] * d)
    edges = {a: mean([ax != a for ax in range(d)]) for a in range(d)}
    faces = {}
    if d == 3:
        faces = {a: mean([ax == a for ax in range(d)]) for a in range(d)}
    return VolumeFractionField(grid, s, cells, vertices, edges, faces, boundary_hits)


def _prefix_sum(W: np.ndarray) -> np.ndarray:
    S = np.zeros(tuple(n + 1 for n in W.shape))
    S[(slice(1, None),) * W.ndim] = W
    for axis in range(W.ndim):
        np.cumsum(S, axis=axis, out=S)
    return S


def _window_means(S: np.ndarray, cuts) -> np.ndarray:
    """Mean over the outer-product windows [lo_a, hi_a) per axis."""
    d = S.ndim
    los = [c[0] for c in cuts]
    his = [c[1] for c in cuts]
    total = np.zeros(tuple(len(c[0]) for c in cuts))
    # Inclusion-exclusion over window corners.
    for mask in range(2 ** d):
        pick = [his[a] if (mask >> a) & 1 else los[a] for a in range(d)]
        sign = (-1) ** (d - bin(mask).count("1"))
        total += sign * S[np.ix_(*pick)]
    counts = np.ones_like(total)
    for a in range(d):
        c = (his[a] - los[a]).astype(float)
        shape = [1] * d
        shape[a] = len(c)
        counts = counts * c.reshape(shape)
    return total / counts
