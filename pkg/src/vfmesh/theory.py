"""Numerical verification of the gap-resolution regime analysis.

Setting: a uniform square lattice of length ``ell`` overlays two parallel
half-spaces separated by a gap of width ``L`` (centerline the y-axis).  A
cell centered on the centerline intersects one material side in either a
parallelogram or a hexagon depending on the rotation; the closed forms
``area_A1``/``area_A2`` give that intersection area, with the rotation
parametrized by the angle ``theta`` of the cell's lowest vertex on the
circumscribed circle of radius r = sqrt(2) ell / 2 (theta in
[5 pi / 4, 3 pi / 2] by symmetry).

``sweep_gap`` classifies the gap as open or closed over rotations and
lattice offsets at threshold one half, with and without subgrid
anti-aliasing, and reports the (L / ell) bands where the outcome is
ambiguous.  ``nonconvergence_case`` and ``wedge_case`` build the two
refinement pathologies: the two-wedge geometry whose component count
alternates forever under grid refinement, and the small-angle wedge whose
aliasing islands concentrate at a predictable distance from the apex.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import GeometrySoup, make_soup_2d
from .grid import build_grid, compute_field
from .mesher import extract_mesh, repair_mesh

THETA_LO = 5.0 * math.pi / 4.0
THETA_HI = 3.0 * math.pi / 2.0


class RegimeError(ValueError):
    pass


@dataclass(frozen=True)
class GapScenario:
    """One sweep sample: lattice length, gap width, rotation, offset."""

    ell: float
    L: float
    theta: float
    offset: tuple[float, float] = (0.0, 0.0)

    @property
    def r(self) -> float:
        return math.sqrt(2.0) * self.ell / 2.0

    @property
    def phi(self) -> float:
        """Grid rotation: the lowest cell vertex sits at theta = 5pi/4 + phi."""
        return self.theta - THETA_LO


# ---------------------------------------------------------------------------
# Closed-form areas and the independent clipping oracle

def _check_theta(theta: float):
    if not (THETA_LO - 1e-12 <= theta <= THETA_HI + 1e-12):
        raise RegimeError(f"theta={theta} outside [5pi/4, 3pi/2]")


def area_A1(theta: float, L: float, ell: float = 1.0) -> float:
    """Material area of a centered cell when the gap side cuts a parallelogram.

    Valid while L/2 <= -r cos(theta); the boundary enters and leaves the
    cell through opposite edges.
    """
    _check_theta(theta)
    if L < 0:
        raise RegimeError("L must be non-negative")
    r = math.sqrt(2.0) * ell / 2.0
    if L / 2.0 > -r * math.cos(theta) + 1e-12:
        raise RegimeError("parallelogram regime requires L/2 <= -r cos(theta)")
    return r * (L + r * math.cos(theta) + r * math.sin(theta)) / (
        math.cos(theta) + math.sin(theta))


def area_A2(theta: float, L: float, ell: float = 1.0) -> float:
    """Material area of a centered cell when the gap side cuts a corner triangle.

    Valid while L/2 >= -r cos(theta); ill-defined at theta = 5pi/4 where
    the cutting corner degenerates.
    """
    _check_theta(theta)
    if L < 0:
        raise RegimeError("L must be non-negative")
    r = math.sqrt(2.0) * ell / 2.0
    if abs(theta - THETA_LO) < 1e-12:
        raise RegimeError("A2 is ill-defined at theta = 5pi/4")
    if L / 2.0 < -r * math.cos(theta) - 1e-12:
        raise RegimeError("hexagon regime requires L/2 >= -r cos(theta)")
    if L / 2.0 > -r * math.sin(theta) + 1e-12:
        raise RegimeError("gap boundary exits the cell (area is zero) "
                          "when L/2 > -r sin(theta)")
    return -((L / 2.0 + r * math.sin(theta)) ** 2) / math.cos(2.0 * theta)


def clip_polygon_halfplane(poly, normal, offset):
    """Sutherland-Hodgman clip of a polygon to {p . normal <= offset}."""
    n = np.asarray(normal, dtype=float)
    out = []
    pts = [np.asarray(p, dtype=float) for p in poly]
    if not pts:
        return out
    prev = pts[-1]
    prev_in = prev @ n <= offset
    for cur in pts:
        cur_in = cur @ n <= offset
        if cur_in != prev_in:
            t = (offset - prev @ n) / ((cur - prev) @ n)
            out.append(prev + t * (cur - prev))
        if cur_in:
            out.append(cur)
        prev, prev_in = cur, cur_in
    return out


def polygon_area(poly) -> float:
    if len(poly) < 3:
        return 0.0
    v = np.asarray(poly, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def cell_halfspace_area_oracle(theta: float, L: float, ell: float = 1.0) -> float:
    """Exact area of the centered rotated cell inside one material side,
    by polygon clipping (independent of the closed forms)."""
    _check_theta(theta)
    r = math.sqrt(2.0) * ell / 2.0
    corners = [np.array([r * math.cos(theta + k * math.pi / 2.0),
                         r * math.sin(theta + k * math.pi / 2.0)]) for k in range(4)]
    clipped = clip_polygon_halfplane(corners, (1.0, 0.0), -L / 2.0)
    return abs(polygon_area(clipped))


def regime_boundary_L(theta: float, ell: float = 1.0) -> float:
    """Gap width where the parallelogram case hands over to the triangle case."""
    r = math.sqrt(2.0) * ell / 2.0
    return -2.0 * r * math.cos(theta)


# ---------------------------------------------------------------------------
# Regime sweep

@dataclass
class RegimeReport:
    """Per-sample classifications plus ambiguity bands per gap width."""

    ell: float
    s: int
    antialiased: bool
    L_values: np.ndarray
    theta_values: np.ndarray
    offsets: np.ndarray                    # scalar lattice phases along the gap normal
    closed: np.ndarray                     # bool, shape (L, theta, offset)
    rows: list = field(default_factory=list)

    @property
    def step(self) -> float:
        return float(self.L_values[1] - self.L_values[0]) if len(self.L_values) > 1 else 0.0

    def classification(self, li: int) -> str:
        c = self.closed[li]
        if c.all():
            return "always-closed"
        if not c.any():
            return "always-open"
        return "ambiguous"

    def ambiguous_L(self) -> np.ndarray:
        return np.array([L for li, L in enumerate(self.L_values)
                         if self.classification(li) == "ambiguous"])

    def min_open_L(self) -> float:
        opens = [L for li, L in enumerate(self.L_values) if not self.closed[li].all()]
        return min(opens) if opens else math.inf

    def max_closed_L(self) -> float:
        closes = [L for li, L in enumerate(self.L_values) if self.closed[li].any()]
        return max(closes) if closes else -math.inf

    def band_summary(self) -> dict:
        amb = self.ambiguous_L()
        return {
            "ell": self.ell,
            "antialiased": self.antialiased,
            "L_step": self.step,
            "min_open_L": self.min_open_L(),
            "max_closed_L": self.max_closed_L(),
            "ambiguous_min_L": float(amb.min()) if len(amb) else None,
            "ambiguous_max_L": float(amb.max()) if len(amb) else None,
            "n_ambiguous": int(len(amb)),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("L_over_ell,theta,offset_x,offset_y,antialiased,components,classification\n")
            aa = "true" if self.antialiased else "false"
            for li, L in enumerate(self.L_values):
                cls = self.classification(li)
                for ti, theta in enumerate(self.theta_values):
                    phi = theta - THETA_LO
                    for oi, delta in enumerate(self.offsets):
                        comps = 1 if self.closed[li, ti, oi] else 2
                        ox, oy = delta * math.cos(phi), delta * math.sin(phi)
                        fh.write(f"{L / self.ell:.9g},{theta:.9g},{ox:.9g},{oy:.9g},"
                                 f"{aa},{comps},{cls}\n")

    def write_band_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.band_summary(), fh, indent=2)
            fh.write("\n")


def _sample_projection_offsets(phi: float, s: int, ell: float) -> np.ndarray:
    """Sorted projections of the s*s in-cell sample array onto the gap normal."""
    a = (np.arange(s) + 0.5) / s - 0.5
    delta = ell * (a[:, None] * math.cos(phi) + a[None, :] * math.sin(phi))
    return np.sort(delta.ravel())


def _site_vf(proj_sorted: np.ndarray, x0: np.ndarray, L: float) -> np.ndarray:
    """Sampled volume fraction of ell-cells centered at normal-projections x0."""
    s2 = len(proj_sorted)
    hi = np.searchsorted(proj_sorted, (L / 2.0 - x0).ravel(), side="left")
    lo = np.searchsorted(proj_sorted, (-L / 2.0 - x0).ravel(), side="left")
    inside_gap = (hi - lo).reshape(x0.shape)
    return 1.0 - inside_gap / s2


def _mask_edges_typed(masks: np.ndarray, even_sum: np.ndarray):
    """Half-grid steps: 4-neighbors always, diagonals only cell<->vertex.

    ``even_sum[p, q]`` is True where p+q is even (cell and vertex sites);
    a diagonal step is legal exactly between two even-sum sites.
    """
    B, P, Q = masks.shape
    idx = np.arange(B * P * Q, dtype=np.int32).reshape(B, P, Q)
    rows, cols = [], []
    both = masks[:, :-1, :] & masks[:, 1:, :]
    rows.append(idx[:, :-1, :][both])
    cols.append(idx[:, 1:, :][both])
    both = masks[:, :, :-1] & masks[:, :, 1:]
    rows.append(idx[:, :, :-1][both])
    cols.append(idx[:, :, 1:][both])
    diag_ok = even_sum[:-1, :-1]
    both = masks[:, :-1, :-1] & masks[:, 1:, 1:] & diag_ok[None, :, :]
    rows.append(idx[:, :-1, :-1][both])
    cols.append(idx[:, 1:, 1:][both])
    both = masks[:, 1:, :-1] & masks[:, :-1, 1:] & even_sum[1:, :-1][None, :, :]
    rows.append(idx[:, 1:, :-1][both])
    cols.append(idx[:, :-1, 1:][both])
    return np.concatenate(rows), np.concatenate(cols)


def sweep_gap(ell: float = 1.0,
              L_values: np.ndarray | None = None,
              theta_values: np.ndarray | None = None,
              offsets: np.ndarray | None = None,
              s: int = 64,
              with_antialiasing: bool = False,
              window_cells: int = 9) -> RegimeReport:
    """Classify the gap open/closed per (L, theta, offset) at threshold 1/2.

    The two half-spaces make every sampled value a function of the sample's
    projection onto the gap normal, so cell and subcell volume fractions
    come from one sorted projection table per rotation.  Connectivity runs
    on a window of the lattice: plain face-adjacency of interior cells
    without anti-aliasing; with it, the subgrid model where face links
    need an interior shared edge, pinch diagonals need an interior vertex,
    and bridges chain interior edges through interior vertices (the
    half-step site graph with cell-vertex diagonals).
    """
    if L_values is None:
        L_values = np.linspace(0.05, 1.2, 128) * ell
    if theta_values is None:
        theta_values = np.linspace(THETA_LO, THETA_HI, 64)
    if offsets is None:
        offsets = (np.arange(64) + 0.37) / 64.0 * ell
    L_values = np.asarray(L_values, dtype=float)
    theta_values = np.asarray(theta_values, dtype=float)
    offsets = np.asarray(offsets, dtype=float)

    W = window_cells
    half = np.arange(-W, W + 1)          # site coordinates in half-cell units
    p, q = np.meshgrid(half, half, indexing="ij")
    even_sum = (p + q) % 2 == 0
    cell_site = (p % 2 != 0) & (q % 2 != 0)
    odd = half % 2 != 0                  # cell-site rows/columns

    closed = np.zeros((len(L_values), len(theta_values), len(offsets)), dtype=bool)
    for ti, theta in enumerate(theta_values):
        phi = theta - THETA_LO
        proj = _sample_projection_offsets(phi, s, ell)
        base_x0 = ell * (p * math.cos(phi) + q * math.sin(phi)) / 2.0
        cell_x0 = base_x0[np.ix_(odd, odd)]
        for li, L in enumerate(L_values):
            margin = L / 2.0 + 2.0 * ell
            if with_antialiasing:
                x0 = base_x0[None, :, :] + offsets[:, None, None]
                interior = _site_vf(proj, x0, L) >= 0.5
                left = cell_site[None, :, :] & (x0 <= -margin)
                right = cell_site[None, :, :] & (x0 >= margin)
            else:
                x0 = cell_x0[None, :, :] + offsets[:, None, None]
                interior = _site_vf(proj, x0, L) >= 0.5
                left = x0 <= -margin
                right = x0 >= margin
            if not (left.any(axis=(1, 2)).all() and right.any(axis=(1, 2)).all()):
                raise RegimeError("window too small for this gap width")
            trivially_closed = interior.all(axis=(1, 2))
            closed[li, ti] = trivially_closed
            todo = ~trivially_closed
            if todo.any():
                masks = interior[todo]
                if with_antialiasing:
                    edges_fn = lambda m: _mask_edges_typed(m, even_sum)  # noqa: E731
                else:
                    edges_fn = _mask_edges_4
                closed[li, ti, todo] = _connected_sides_anchored(
                    masks, left[todo], right[todo], edges_fn)
    return RegimeReport(ell, s, with_antialiasing, L_values, theta_values,
                        offsets, closed)


def _mask_edges_4(masks: np.ndarray):
    """Face adjacency on a plain cell grid."""
    B, P, Q = masks.shape
    idx = np.arange(B * P * Q, dtype=np.int32).reshape(B, P, Q)
    rows, cols = [], []
    both = masks[:, :-1, :] & masks[:, 1:, :]
    rows.append(idx[:, :-1, :][both])
    cols.append(idx[:, 1:, :][both])
    both = masks[:, :, :-1] & masks[:, :, 1:]
    rows.append(idx[:, :, :-1][both])
    cols.append(idx[:, :, 1:][both])
    return np.concatenate(rows), np.concatenate(cols)


def _connected_sides_anchored(masks, left, right, edges_fn) -> np.ndarray:
    B, P, Q = masks.shape
    n = B * P * Q
    rows, cols = edges_fn(masks)
    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    labels = labels.reshape(B, P, Q)
    out = np.zeros(B, dtype=bool)
    for b in range(B):
        lab_l = np.unique(labels[b][left[b] & masks[b]])
        lab_r = np.unique(labels[b][right[b] & masks[b]])
        out[b] = bool(np.intersect1d(lab_l, lab_r, assume_unique=True).size)
    return out


# ---------------------------------------------------------------------------
# Full-pipeline cross-check for individual gap samples

def gap_soup(L: float, half: float = 20.0) -> GeometrySoup:
    """The two material slabs as explicit CCW rectangles (gap normal = x)."""
    segs = []
    for sign in (-1.0, 1.0):
        cx = sign * (L / 2.0 + half)
        corners = [(cx - half, -half), (cx + half, -half),
                   (cx + half, half), (cx - half, half)]
        for a, b in zip(corners, corners[1:] + corners[:1]):
            segs.append([*a, *b])
    return make_soup_2d(np.array(segs))


def gap_sample_via_pipeline(scn: GapScenario, s: int = 8, window_cells: int = 12):
    """Run the real winding/grid pipeline on one gap sample (no anti-aliasing).

    Returns (closed, field): whether the two sides are face-connected in
    the extracted mesh across the central window, and the field itself.
    """
    soup = gap_soup(scn.L, half=window_cells * 2.0 * scn.ell)
    phi = scn.phi
    delta = scn.offset[0] * math.cos(phi) + scn.offset[1] * math.sin(phi)
    offset_g = (delta * math.cos(phi), delta * math.sin(phi))
    grid = build_grid(soup, scn.ell, rotation=-phi, offset=offset_g, padding=0)
    field = compute_field(soup, grid, s)
    mesh = extract_mesh(field, 0.5)

    centers_x = np.empty(grid.extents)
    for i in range(grid.extents[0]):
        for j in range(grid.extents[1]):
            centers_x[i, j] = grid.cell_center_world((i, j))[0]
    margin = scn.L / 2.0 + 2.0 * scn.ell
    window = np.abs(centers_x) <= window_cells * scn.ell
    labels, _ = mesh.pre_repair_labels()
    lab_l = np.unique(labels[(centers_x <= -margin) & window & mesh.retained])
    lab_r = np.unique(labels[(centers_x >= margin) & window & mesh.retained])
    lab_l = lab_l[lab_l > 0]
    lab_r = lab_r[lab_r > 0]
    closed = bool(np.intersect1d(lab_l, lab_r).size)
    return closed, field


# ---------------------------------------------------------------------------
# Grid-refinement counterexample

def two_wedge_soup(corner_x: float, extent: float = 2.0) -> GeometrySoup:
    """Two triangular material blocks with slopes -3 and +1 meeting at
    (corner_x, 0): the pinch geometry whose corner cell alternates between
    relative position 2/3 (fraction 10/18, closed) and 1/3 (7/18, open)
    under grid halving."""
    c = corner_x
    B = extent
    left = [(c, 0.0), (c - B, 3.0 * B), (c - B, 0.0)]
    right = [(c, 0.0), (c + B, 0.0), (c + B, B)]
    segs = []
    for poly in (left, right):
        for a, b in zip(poly, poly[1:] + poly[:1]):
            segs.append([*a, *b])
    return make_soup_2d(np.array(segs))


def nonconvergence_case(corner_x: float, levels: int, s: int = 8,
                        s_check: int = 32, extent: float = 2.0) -> list[dict]:
    """Pre-repair component counts per refinement level at threshold 1/2.

    Starts from a unit grid with a vertex at the origin and halves the
    cell length per level; also reports the corner cell's sampled volume
    fraction at ``s_check`` samples per axis.
    """
    if levels < 2:
        raise RegimeError("need at least 2 refinement levels")
    soup = two_wedge_soup(corner_x, extent)
    out = []
    for level in range(levels):
        ell = 0.5 ** level
        grid = build_grid(soup, ell)
        f = compute_field(soup, grid, s)
        mesh = extract_mesh(f, 0.5)
        _, b0 = mesh.pre_repair_labels()
        ci = int(math.floor((corner_x - grid.base[0]) / ell))
        cj = int(math.floor((0.0 - grid.base[1]) / ell + 1e-9))
        from .grid import SubcellIndex, sample_points
        from .geometry import winding_many

        pts = sample_points(grid, SubcellIndex("cell", (ci, cj)), s_check)
        corner_vf = float(winding_many(pts, soup).mean())
        rel = (corner_x - (grid.base[0] + ci * ell)) / ell
        out.append({"level": level, "ell": ell, "b0": int(b0),
                    "corner_vf": corner_vf, "corner_rel_x": rel})
    return out


# ---------------------------------------------------------------------------
# Wedge / archipelago case

def wedge_soup(alpha: float, tilt: float = 0.35, length: float | None = None,
               ell: float = 1.0) -> GeometrySoup:
    """Thin material wedge: two rays at angles tilt and tilt+alpha from the
    apex at the origin.  Length extends past the aliasing band."""
    if length is None:
        length = (1.6 / math.tan(alpha) + 5.0) * ell
    a0, a1 = tilt, tilt + alpha
    poly = [(0.0, 0.0),
            (length * math.cos(a0), length * math.sin(a0)),
            (length * math.cos(a1), length * math.sin(a1))]
    segs = [[*a, *b] for a, b in zip(poly, poly[1:] + poly[:1])]
    return make_soup_2d(np.array(segs))


def wedge_case(alpha: float, ell: float = 1.0, s: int = 8, min_cells: int = 3,
               tilt: float = 0.35) -> dict:
    """Archipelago band audit for a wedge of opening angle alpha.

    Pre-repair islands should sit within [1/2, 1] cot(alpha) cells of the
    apex; joining along interior edges and dropping islands below
    ``min_cells`` should leave a single component.
    """
    if not 0 < alpha < math.pi / 2:
        raise RegimeError("alpha must be in (0, pi/2)")
    soup = wedge_soup(alpha, tilt=tilt, ell=ell)
    grid = build_grid(soup, ell, padding=1)
    f = compute_field(soup, grid, s)
    mesh = extract_mesh(f, 0.5)
    labels, n_before = mesh.pre_repair_labels()

    sizes = ndimage.sum_labels(np.ones_like(labels), labels, range(1, n_before + 1))
    main = int(np.argmax(sizes)) + 1 if n_before else 0
    island_dist = []
    for lab in range(1, n_before + 1):
        if lab == main:
            continue
        cells = np.argwhere(labels == lab)
        for idx in cells:
            center = grid.cell_center_world(tuple(idx))
            island_dist.append(float(np.linalg.norm(center)) / ell)

    repaired, report = repair_mesh(f, 0.5, min_cells=min_cells)
    _, n_after = repaired.component_labels()
    cot = 1.0 / math.tan(alpha)
    return {
        "alpha": alpha,
        "cot_alpha": cot,
        "band": (0.5 * cot, 1.0 * cot),
        "components_before": int(n_before),
        "components_after": int(n_after),
        "island_count": int(n_before - (1 if n_before else 0)),
        "island_distances": sorted(island_dist),
        "report": report,
    }


def write_wedge_json(result: dict, path) -> None:
    data = {k: v for k, v in result.items() if k != "report"}
    data["report"] = result["report"].to_json()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
