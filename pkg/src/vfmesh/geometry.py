"""Dirty-geometry input and generalized winding-number queries.

Input geometry is an oriented soup: 2D line segments or 3D triangles that
may be non-watertight, self-intersecting, or overlapping.  The winding
number gives a continuous inside/outside field that is well defined even
for such soups: the sum of signed subtended angles over 2pi in 2D, or
signed solid angles over 4pi in 3D.  Counter-clockwise closed curves and
outward-oriented closed surfaces yield +1 inside.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

# Fraction of the bbox diagonal under which a query point counts as lying
# on the geometry.  Samples are laid out to never touch the geometry; the
# flag exists for robustness reporting only.
ON_BOUNDARY_REL_TOL = 1e-9

# Relative length/area threshold for dropping degenerate elements at parse.
DEGENERACY_REL_TOL = 1e-12


class GeometryError(ValueError):
    """Raised for unreadable, empty, or mixed-dimension geometry input."""


@dataclass(frozen=True)
class Segment2:
    """Oriented 2D segment a -> b."""

    a: tuple[float, float]
    b: tuple[float, float]


@dataclass(frozen=True)
class Triangle3:
    """3D triangle; outward normal implied by vertex order (right-hand rule)."""

    v0: tuple[float, float, float]
    v1: tuple[float, float, float]
    v2: tuple[float, float, float]


@dataclass
class GeometrySoup:
    """Homogeneous element soup with derived bounding box.

    ``points_a``/``points_b`` are (n, 2) endpoint arrays in 2D;
    ``points_a``/``points_b``/``points_c`` are (n, 3) vertex arrays in 3D.
    Immutable after load by convention; winding queries are read-only and
    safe to evaluate concurrently.
    """

    dimension: int
    points_a: np.ndarray
    points_b: np.ndarray
    points_c: np.ndarray | None = None
    dropped: int = 0
    source: str = ""
    _bbox: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise GeometryError(f"unsupported dimension {self.dimension}")
        if len(self.points_a) == 0:
            raise GeometryError("geometry soup has zero valid elements")

    @property
    def n_elements(self) -> int:
        return len(self.points_a)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self._bbox is None:
            stack = [self.points_a, self.points_b]
            if self.points_c is not None:
                stack.append(self.points_c)
            pts = np.vstack(stack)
            self._bbox = (pts.min(axis=0), pts.max(axis=0))
        return self._bbox

    @property
    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    @property
    def on_boundary_tol(self) -> float:
        return ON_BOUNDARY_REL_TOL * self.bbox_diagonal

    @property
    def segments(self) -> list[Segment2]:
        if self.dimension != 2:
            raise GeometryError("segments only defined for 2D soups")
        return [Segment2(tuple(a), tuple(b)) for a, b in zip(self.points_a, self.points_b)]

    @property
    def triangles(self) -> list[Triangle3]:
        if self.dimension != 3:
            raise GeometryError("triangles only defined for 3D soups")
        return [
            Triangle3(tuple(a), tuple(b), tuple(c))
            for a, b, c in zip(self.points_a, self.points_b, self.points_c)
        ]

    def reversed(self) -> "GeometrySoup":
        """Soup with every element's orientation flipped."""
        if self.dimension == 2:
            return GeometrySoup(2, self.points_b.copy(), self.points_a.copy())
        return GeometrySoup(3, self.points_a.copy(), self.points_c.copy(), self.points_b.copy())

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "GeometrySoup":
        """Soup mapped through p -> R p + t."""
        R = np.asarray(rotation, dtype=float)
        t = np.asarray(translation, dtype=float)
        c = None if self.points_c is None else self.points_c @ R.T + t
        return GeometrySoup(self.dimension, self.points_a @ R.T + t, self.points_b @ R.T + t, c)


def make_soup_2d(segments: np.ndarray | list, source: str = "") -> GeometrySoup:
    """Build a 2D soup from an (n, 4) array of x1 y1 x2 y2 rows, dropping degenerates."""
    arr = np.asarray(segments, dtype=float).reshape(-1, 4)
    a, b = arr[:, :2], arr[:, 2:]
    scale = _extent_scale(np.vstack([a, b]))
    keep = np.linalg.norm(b - a, axis=1) > DEGENERACY_REL_TOL * scale
    dropped = int((~keep).sum())
    if dropped:
        logger.warning("dropped %d degenerate segment(s)", dropped)
    if not keep.any():
        raise GeometryError("geometry soup has zero valid elements")
    return GeometrySoup(2, a[keep].copy(), b[keep].copy(), dropped=dropped, source=source)


def make_soup_3d(triangles: np.ndarray | list, source: str = "") -> GeometrySoup:
    """Build a 3D soup from an (n, 3, 3) vertex array, dropping zero-area triangles."""
    arr = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    v0, v1, v2 = arr[:, 0], arr[:, 1], arr[:, 2]
    scale = _extent_scale(arr.reshape(-1, 3))
    areas = 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)
    keep = areas > (DEGENERACY_REL_TOL * scale) ** 2
    dropped = int((~keep).sum())
    if dropped:
        logger.warning("dropped %d degenerate triangle(s)", dropped)
    if not keep.any():
        raise GeometryError("geometry soup has zero valid elements")
    return GeometrySoup(3, v0[keep].copy(), v1[keep].copy(), v2[keep].copy(),
                        dropped=dropped, source=source)


def _extent_scale(points: np.ndarray) -> float:
    if len(points) == 0:
        return 1.0
    span = points.max(axis=0) - points.min(axis=0)
    return max(float(np.linalg.norm(span)), 1.0)


# ---------------------------------------------------------------------------
# File loading

FORMATS = ("seg-text", "obj-lines", "obj-tris", "stl")


def load_geometry(path: str | os.PathLike, fmt: str | None = None) -> GeometrySoup:
    """Parse a geometry file into a soup.

    ``fmt`` is one of ``seg-text`` (lines ``x1 y1 x2 y2``, ``#`` comments),
    ``obj-lines`` (OBJ ``v``/``l`` polylines, consecutive pairs become 2D
    segments), ``obj-tris`` (OBJ ``v``/``f``, polygons fan-triangulated), or
    ``stl`` (binary or ASCII).  When omitted it is guessed from the
    extension (.seg/.txt, .obj by content, .stl).
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise GeometryError(f"cannot read geometry file: {path}")
    if fmt is None:
        fmt = _guess_format(path)
    if fmt == "seg-text":
        return _load_seg_text(path)
    if fmt == "obj-lines":
        return _load_obj(path, want="lines")
    if fmt == "obj-tris":
        return _load_obj(path, want="tris")
    if fmt == "stl":
        return _load_stl(path)
    raise GeometryError(f"unknown geometry format: {fmt!r} (expected one of {FORMATS})")


def _guess_format(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".stl":
        return "stl"
    if ext == ".obj":
        with open(path, "rb") as fh:
            head = fh.read(65536).decode("utf-8", errors="replace")
        for line in head.splitlines():
            if line.startswith("f "):
                return "obj-tris"
            if line.startswith("l "):
                return "obj-lines"
        return "obj-tris"
    return "seg-text"


def _load_seg_text(path: str) -> GeometrySoup:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise GeometryError(f"{path}:{lineno}: expected 'x1 y1 x2 y2', got {line!r}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise GeometryError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise GeometryError(f"{path}: no segments found")
    return make_soup_2d(np.array(rows), source=path)


def _load_obj(path: str, want: str) -> GeometrySoup:
    verts: list[list[float]] = []
    segs: list[list[float]] = []
    tris: list[list[list[float]]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                xyz = [float(p) for p in parts[1:4]] + [0.0] * (4 - len(parts))
                verts.append(xyz[:3])
            elif tag == "l":
                idx = [_obj_index(p, len(verts), path, lineno) for p in parts[1:]]
                for i, j in zip(idx, idx[1:]):
                    segs.append(verts[i][:2] + verts[j][:2])
            elif tag == "f":
                idx = [_obj_index(p, len(verts), path, lineno) for p in parts[1:]]
                for k in range(1, len(idx) - 1):
                    tris.append([verts[idx[0]], verts[idx[k]], verts[idx[k + 1]]])
    if want == "lines":
        if tris and not segs:
            raise GeometryError(f"{path}: has faces but no polylines; use obj-tris")
        if not segs:
            raise GeometryError(f"{path}: no 'l' polylines found")
        return make_soup_2d(np.array(segs), source=path)
    if segs and not tris:
        raise GeometryError(f"{path}: has polylines but no faces; use obj-lines")
    if not tris:
        raise GeometryError(f"{path}: no 'f' faces found")
    return make_soup_3d(np.array(tris), source=path)


def _obj_index(token: str, n_verts: int, path: str, lineno: int) -> int:
    raw = token.split("/", 1)[0]
    try:
        i = int(raw)
    except ValueError as exc:
        raise GeometryError(f"{path}:{lineno}: bad index {token!r}") from exc
    i = i - 1 if i > 0 else n_verts + i
    if not 0 <= i < n_verts:
        raise GeometryError(f"{path}:{lineno}: vertex index {token} out of range")
    return i


def _load_stl(path: str) -> GeometrySoup:
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        header = fh.read(84)
        if len(header) >= 84:
            (count,) = struct.unpack("<I", header[80:84])
            if size == 84 + 50 * count and count > 0:
                data = np.fromfile(fh, dtype=np.uint8, count=50 * count)
                rec = data.reshape(count, 50)
                floats = rec[:, :48].copy().view("<f4").reshape(count, 4, 3)
                return make_soup_3d(floats[:, 1:4].astype(float), source=path)
    # ASCII fallback
    tris, current = [], []
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line in fh:
            parts = line.split()
            if parts[:1] == ["vertex"]:
                current.append([float(p) for p in parts[1:4]])
                if len(current) == 3:
                    tris.append(current)
                    current = []
    if not tris:
        raise GeometryError(f"{path}: no triangles found in STL")
    return make_soup_3d(np.array(tris), source=path)


# ---------------------------------------------------------------------------
# Winding numbers

_CHUNK = 1 << 18  # query points per vectorized block, bounds peak memory


def winding_many(points: np.ndarray, soup: GeometrySoup) -> np.ndarray:
    """Generalized winding number at each query point (vectorized, chunked).

    Naive O(elements) summation per point; values are not clamped, so
    overlapping input can legitimately fall outside [0, 1].
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != soup.dimension:
        raise GeometryError(
            f"query dimension {pts.shape[1]} != soup dimension {soup.dimension}")
    out = np.empty(len(pts))
    step = max(1, _CHUNK // max(1, soup.n_elements))
    for start in range(0, len(pts), step):
        block = pts[start:start + step]
        if soup.dimension == 2:
            out[start:start + step] = _winding_block_2d(block, soup)
        else:
            out[start:start + step] = _winding_block_3d(block, soup)
    return out


def _winding_block_2d(pts: np.ndarray, soup: GeometrySoup) -> np.ndarray:
    a = soup.points_a[None, :, :] - pts[:, None, :]
    b = soup.points_b[None, :, :] - pts[:, None, :]
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    dot = (a * b).sum(axis=-1)
    return np.arctan2(cross, dot).sum(axis=1) / (2.0 * np.pi)


def _winding_block_3d(pts: np.ndarray, soup: GeometrySoup) -> np.ndarray:
    # Van Oosterom & Strackee signed solid angle per triangle.
    a = soup.points_a[None, :, :] - pts[:, None, :]
    b = soup.points_b[None, :, :] - pts[:, None, :]
    c = soup.points_c[None, :, :] - pts[:, None, :]
    la = np.linalg.norm(a, axis=-1)
    lb = np.linalg.norm(b, axis=-1)
    lc = np.linalg.norm(c, axis=-1)
    numer = np.einsum("pnk,pnk->pn", a, np.cross(b, c))
    denom = (la * lb * lc + np.einsum("pnk,pnk->pn", a, b) * lc
             + np.einsum("pnk,pnk->pn", b, c) * la
             + np.einsum("pnk,pnk->pn", c, a) * lb)
    return 2.0 * np.arctan2(numer, denom).sum(axis=1) / (4.0 * np.pi)


def winding_2d(p, soup: GeometrySoup) -> float:
    """Winding number of a 2D soup at one point (signed subtended angle / 2pi)."""
    if soup.dimension != 2:
        raise GeometryError("winding_2d requires a 2D soup")
    return float(winding_many(np.asarray(p, dtype=float)[None, :], soup)[0])


def winding_3d(p, soup: GeometrySoup) -> float:
    """Winding number of a 3D soup at one point (signed solid angle / 4pi)."""
    if soup.dimension != 3:
        raise GeometryError("winding_3d requires a 3D soup")
    return float(winding_many(np.asarray(p, dtype=float)[None, :], soup)[0])


def min_distance(points: np.ndarray, soup: GeometrySoup) -> np.ndarray:
    """Smallest distance from each query point to any soup element."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.full(len(pts), np.inf)
    step = max(1, _CHUNK // max(1, soup.n_elements))
    for start in range(0, len(pts), step):
        block = pts[start:start + step]
        if soup.dimension == 2:
            d = _dist_segments(block, soup.points_a, soup.points_b)
        else:
            d = _dist_triangles(block, soup.points_a, soup.points_b, soup.points_c)
        out[start:start + step] = d
    return out


def on_boundary(points: np.ndarray, soup: GeometrySoup) -> np.ndarray:
    """Boolean mask of query points within the on-boundary tolerance."""
    return min_distance(points, soup) <= soup.on_boundary_tol


def _dist_segments(pts, a, b) -> np.ndarray:
    ab = b - a
    ap = pts[:, None, :] - a[None, :, :]
    denom = (ab * ab).sum(axis=-1)
    denom = np.where(denom == 0.0, 1.0, denom)
    t = np.clip(np.einsum("pnk,nk->pn", ap, ab) / denom, 0.0, 1.0)
    closest = a[None, :, :] + t[..., None] * ab[None, :, :]
    return np.linalg.norm(pts[:, None, :] - closest, axis=-1).min(axis=1)


def _dist_triangles(pts, v0, v1, v2) -> np.ndarray:
    # Closest point via clamped barycentric projection (Ericson-style regions),
    # vectorized over (point, triangle) pairs.
    p = pts[:, None, :]
    ab = (v1 - v0)[None, :, :]
    ac = (v2 - v0)[None, :, :]
    ap = p - v0[None, :, :]
    d1 = np.einsum("pnk,pnk->pn", np.broadcast_arrays(ab, ap)[0], ap)
    d2 = np.einsum("pnk,pnk->pn", np.broadcast_arrays(ac, ap)[0], ap)
    bp = p - v1[None, :, :]
    d3 = np.einsum("pnk,pnk->pn", np.broadcast_arrays(ab, bp)[0], bp)
    d4 = np.einsum("pnk,pnk->pn", np.broadcast_arrays(ac, bp)[0], bp)
    cp = p - v2[None, :, :]
    d5 = np.einsum("pnk,pnk->pn", np.broadcast_arrays(ab, cp)[0], cp)
    d6 = np.einsum("pnk,pnk->pn", np.broadcast_arrays(ac, cp)[0], cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    denom = np.where(denom == 0.0, 1.0, denom)
    v = vb / denom
    w = vc / denom

    # Interior candidate, then clamp to the appropriate edge/vertex region.
    v = np.clip(v, 0.0, 1.0)
    w = np.clip(w, 0.0, 1.0)

    in_vert_a = (d1 <= 0) & (d2 <= 0)
    in_vert_b = (d3 >= 0) & (d4 <= d3)
    in_vert_c = (d6 >= 0) & (d5 <= d6)
    t_ab = np.where(d1 - d3 != 0.0, d1 / np.where(d1 - d3 == 0.0, 1.0, d1 - d3), 0.0)
    in_edge_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    t_ac = np.where(d2 - d6 != 0.0, d2 / np.where(d2 - d6 == 0.0, 1.0, d2 - d6), 0.0)
    in_edge_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t_bc = (d4 - d3) / np.where((d4 - d3) + (d5 - d6) == 0.0, 1.0, (d4 - d3) + (d5 - d6))
    in_edge_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)

    v_final = np.where(in_edge_bc, 1.0 - np.clip(t_bc, 0, 1), v)
    w_final = np.where(in_edge_bc, np.clip(t_bc, 0, 1), w)
    v_final = np.where(in_edge_ac, 0.0, v_final)
    w_final = np.where(in_edge_ac, np.clip(t_ac, 0, 1), w_final)
    v_final = np.where(in_edge_ab, np.clip(t_ab, 0, 1), v_final)
    w_final = np.where(in_edge_ab, 0.0, w_final)
    for mask, (vv, ww) in ((in_vert_a, (0.0, 0.0)), (in_vert_b, (1.0, 0.0)),
                           (in_vert_c, (0.0, 1.0))):
        v_final = np.where(mask, vv, v_final)
        w_final = np.where(mask, ww, w_final)

    closest = v0[None, :, :] + v_final[..., None] * ab + w_final[..., None] * ac
    return np.linalg.norm(p - closest, axis=-1).min(axis=1)
