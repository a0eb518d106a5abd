"""Planar test domains given as simple polygons.

A domain is an open region bounded by a counter-clockwise simple polygon.
All geometric predicates (containment, distance to the boundary, boundary
sampling) are evaluated against the exact edge segments, so there is no
tolerance cascade coming from an approximate boundary representation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

# Points within this distance of an edge count as boundary, hence outside
# the open domain.
BOUNDARY_EPS = 1e-12

PRESETS = ("unit_square", "l_shape", "slit_square", "koch_prefractal")


@dataclass(frozen=True)
class PolygonalDomain:
    """Simple closed polygon, vertices ordered counter-clockwise."""

    vertices: np.ndarray
    name: str = "polygon"
    _edges: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise ParameterError("polygon needs at least 3 planar vertices")
        if not np.all(np.isfinite(verts)):
            raise ParameterError("polygon vertices must be finite")
        object.__setattr__(self, "vertices", verts)
        edges = np.stack([verts, np.roll(verts, -1, axis=0)], axis=1)
        object.__setattr__(self, "_edges", edges)
        if signed_area(verts) <= 0:
            raise ParameterError("polygon must be counter-clockwise (signed area > 0)")
        if not _is_simple(edges):
            raise ParameterError("polygon edges may intersect only at shared endpoints")

    @property
    def edges(self) -> np.ndarray:
        """Edges as an (E, 2, 2) array of segment endpoints."""
        return self._edges

    @property
    def n_edges(self) -> int:
        return len(self.vertices)

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def signed_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def perimeter(dom: PolygonalDomain) -> float:
    d = dom.edges[:, 1] - dom.edges[:, 0]
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def centroid(dom: PolygonalDomain) -> np.ndarray:
    """Area centroid of the polygon."""
    v = dom.vertices
    w = np.roll(v, -1, axis=0)
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    area = cross.sum() / 2.0
    cx = ((v[:, 0] + w[:, 0]) * cross).sum() / (6.0 * area)
    cy = ((v[:, 1] + w[:, 1]) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
        b[..., 1] - a[..., 1]
    ) * (c[..., 0] - a[..., 0])


def _is_simple(edges) -> bool:
    # Pairwise proper-intersection test; adjacent edges share exactly one
    # endpoint and are allowed to touch there only.
    n = len(edges)
    p, q = edges[:, 0], edges[:, 1]
    for i in range(n - 1):
        j = np.arange(i + 1, n)
        a, b = p[i], q[i]
        c, d = p[j], q[j]
        d1 = _orient(a, b, c)
        d2 = _orient(a, b, d)
        d3 = _orient(c, d, a)
        d4 = _orient(c, d, b)
        proper = (d1 * d2 < 0) & (d3 * d4 < 0)
        if proper.any():
            return False
        # Collinear overlap or touching away from the shared vertex.
        touch = (d1 == 0) & _on_segment(a, b, c)
        touch |= (d2 == 0) & _on_segment(a, b, d)
        touch |= (d3 == 0) & _on_segment_many(c, d, a)
        touch |= (d4 == 0) & _on_segment_many(c, d, b)
        if touch.any():
            ok = np.zeros(len(j), dtype=bool)
            ok[0] = True  # successor shares vertex q[i]
            if i == 0:
                ok[-1] = True  # wrap-around predecessor shares p[0]
            bad = touch & ~ok
            if bad.any():
                return False
            # For adjacent edges the only allowed contact is the shared vertex.
            adj = np.where(touch & ok)[0]
            for k in adj:
                jj = j[k]
                shared = q[i] if jj == i + 1 else p[i]
                other = (
                    _on_strict(a, b, p[jj], shared)
                    or _on_strict(a, b, q[jj], shared)
                    or _on_strict(p[jj], q[jj], a, shared)
                    or _on_strict(p[jj], q[jj], b, shared)
                )
                if other:
                    return False
    return True


def _on_segment(a, b, pts):
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    return np.all((pts >= lo) & (pts <= hi), axis=-1)


def _on_segment_many(a, b, pt):
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    return np.all((pt >= lo) & (pt <= hi), axis=-1)


def _on_strict(a, b, pt, shared):
    if np.array_equal(pt, shared):
        return False
    if _orient(a, b, pt) != 0:
        return False
    return bool(_on_segment_many(a, b, pt))


# ---------------------------------------------------------------------------
# presets


def make_domain(preset: str, level: int = 0, side: float = 1.0,
                aperture: float | None = None) -> PolygonalDomain:
    """Build one of the named test domains.

    ``level`` is the prefractal generation (koch_prefractal only) and
    ``side`` the base edge length. ``aperture`` sets the notch opening of
    the slit square (default 1e-3 * side).
    """
    if side <= 0 or not math.isfinite(side):
        raise ParameterError("side must be positive")
    if preset == "unit_square":
        v = side * np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        return PolygonalDomain(v, name="unit_square")
    if preset == "l_shape":
        v = side * np.array(
            [[0, 0], [1, 0], [1, 0.5], [0.5, 0.5], [0.5, 1], [0, 1]], dtype=float
        )
        return PolygonalDomain(v, name="l_shape")
    if preset == "slit_square":
        # Zero-angle slit approximated by a thin triangular notch reaching
        # the center from the top edge; notch domains remain John.
        a = 1e-3 * side if aperture is None else float(aperture)
        if not 0 < a < side / 2:
            raise ParameterError("slit aperture out of range")
        v = np.array(
            [
                [0, 0],
                [side, 0],
                [side, side],
                [side / 2 + a / 2, side],
                [side / 2, side / 2],
                [side / 2 - a / 2, side],
                [0, side],
            ]
        )
        return PolygonalDomain(v, name="slit_square")
    if preset == "koch_prefractal":
        if level < 0 or int(level) != level:
            raise ParameterError("koch_prefractal level must be an integer >= 0")
        return PolygonalDomain(_koch_vertices(int(level), side),
                               name=f"koch_prefractal_{int(level)}")
    raise ParameterError(f"unknown preset {preset!r}")


def _koch_vertices(level: int, side: float) -> np.ndarray:
    # Base triangle, counter-clockwise; outward bumps keep the orientation.
    pts = [0.0 + 0.0j, side + 0.0j, side / 2 + side * math.sqrt(3) / 2 * 1j]
    rot = complex(math.cos(-math.pi / 3), math.sin(-math.pi / 3))
    for _ in range(level):
        nxt = []
        for i, p1 in enumerate(pts):
            p2 = pts[(i + 1) % len(pts)]
            s1 = p1 + (p2 - p1) / 3.0
            s2 = p1 + 2.0 * (p2 - p1) / 3.0
            tip = (s2 - s1) * rot + s1
            nxt.extend([p1, s1, tip, s2])
        pts = nxt
    return np.array([[p.real, p.imag] for p in pts])


# ---------------------------------------------------------------------------
# predicates


def _point_edge_dist_sq(points: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Squared distance of each point to each edge, shape (M, E)."""
    a = edges[:, 0]
    ab = edges[:, 1] - edges[:, 0]
    ap = points[:, None, :] - a[None, :, :]
    denom = (ab * ab).sum(axis=1)
    denom = np.where(denom == 0, 1.0, denom)
    t = (ap * ab[None, :, :]).sum(axis=2) / denom
    t = np.clip(t, 0.0, 1.0)
    diff = ap - t[:, :, None] * ab[None, :, :]
    return (diff * diff).sum(axis=2)


def boundary_distances(dom: PolygonalDomain, points) -> np.ndarray:
    """Distance to the polygon boundary for an (M, 2) array of points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(pts))
    chunk = max(1, 4_000_000 // max(1, dom.n_edges))
    for i in range(0, len(pts), chunk):
        d2 = _point_edge_dist_sq(pts[i : i + chunk], dom.edges)
        out[i : i + chunk] = np.sqrt(d2.min(axis=1))
    return out


def distance_to_boundary(dom: PolygonalDomain, x) -> float:
    """Exact distance of a point to the polygon boundary (0 iff on it)."""
    return float(boundary_distances(dom, np.asarray(x, dtype=float)[None, :])[0])


def contains_many(dom: PolygonalDomain, points, dist=None) -> np.ndarray:
    """Open containment by ray-casting parity; near-boundary points excluded."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    v = dom.vertices
    w = np.roll(v, -1, axis=0)
    inside = np.zeros(len(pts), dtype=bool)
    px, py = pts[:, 0:1], pts[:, 1:2]
    cond = (v[:, 1] > py) != (w[:, 1] > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xin = (w[:, 0] - v[:, 0]) * (py - v[:, 1]) / (w[:, 1] - v[:, 1]) + v[:, 0]
    crossing = cond & (px < xin)
    inside = crossing.sum(axis=1) % 2 == 1
    d = boundary_distances(dom, pts) if dist is None else np.asarray(dist)
    return inside & (d > BOUNDARY_EPS)


def contains(dom: PolygonalDomain, x) -> bool:
    return bool(contains_many(dom, np.asarray(x, dtype=float)[None, :])[0])


def sample_boundary(dom: PolygonalDomain, count: int) -> np.ndarray:
    """Points equispaced in arc length along the boundary, starting at vertex 0."""
    if count < 1:
        raise ParameterError("count must be >= 1")
    e = dom.edges
    seg = e[:, 1] - e[:, 0]
    lens = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    total = cum[-1]
    s = np.arange(count) * (total / count)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lens) - 1)
    t = (s - cum[idx]) / lens[idx]
    return e[idx, 0] + t[:, None] * seg[idx]


def box_inside_domain(dom: PolygonalDomain, lo, hi) -> bool:
    """Whether the closed axis-aligned box [lo, hi] lies inside the open domain.

    True iff all four corners are strictly inside and no polygon edge enters
    the box; boxes touching the boundary are excluded.
    """
    lo = np.asarray(lo, dtype=float)[None, :]
    hi = np.asarray(hi, dtype=float)[None, :]
    return bool(boxes_inside_domain(dom, lo, hi)[0])


def boxes_inside_domain(dom: PolygonalDomain, los, his) -> np.ndarray:
    """Vectorized box_inside_domain over (M, 2) arrays of box corners."""
    los = np.asarray(los, dtype=float)
    his = np.asarray(his, dtype=float)
    M = len(los)
    corners = np.empty((M, 4, 2))
    corners[:, 0] = los
    corners[:, 1] = np.stack([his[:, 0], los[:, 1]], axis=1)
    corners[:, 2] = his
    corners[:, 3] = np.stack([los[:, 0], his[:, 1]], axis=1)
    inside = contains_many(dom, corners.reshape(-1, 2)).reshape(M, 4).all(axis=1)
    out = inside.copy()
    idx = np.where(inside)[0]
    chunk = max(1, 1_000_000 // max(1, dom.n_edges))
    for k in range(0, len(idx), chunk):
        sel = idx[k : k + chunk]
        out[sel] = ~_edges_enter_boxes(dom.edges, los[sel], his[sel])
    return out


def _edges_enter_boxes(edges, los, his) -> np.ndarray:
    """Per box: does any segment have a point strictly inside the open box?"""
    p, q = edges[:, 0], edges[:, 1]
    d = q - p
    M, E = len(los), len(edges)
    t0 = np.zeros((M, E))
    t1 = np.ones((M, E))
    alive = np.ones((M, E), dtype=bool)
    for axis in range(2):
        p0 = p[None, :, axis]
        dd = np.broadcast_to(d[None, :, axis], (M, E))
        for sign, bound in ((-1.0, los[:, axis][:, None]), (1.0, his[:, axis][:, None])):
            num = sign * (bound - p0)
            den = sign * dd
            par = den == 0
            alive &= ~(par & (num < 0))
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(par, 0.0, num / den)
            ent = ~par & (den < 0)
            ext = ~par & (den > 0)
            t0 = np.where(ent, np.maximum(t0, t), t0)
            t1 = np.where(ext, np.minimum(t1, t), t1)
    clipped = alive & (t0 < t1)
    tm = (t0 + t1) / 2.0
    mid = p[None, :, :] + tm[:, :, None] * d[None, :, :]
    strict = np.all((mid > los[:, None, :]) & (mid < his[:, None, :]), axis=2)
    return (clipped & strict).any(axis=1)


# ---------------------------------------------------------------------------
# serialization


def domain_to_json(dom: PolygonalDomain) -> str:
    return json.dumps(
        {"name": dom.name, "vertices": dom.vertices.tolist()}, sort_keys=True
    )


def domain_from_json(text: str) -> PolygonalDomain:
    obj = json.loads(text)
    return PolygonalDomain(np.asarray(obj["vertices"], dtype=float), name=obj["name"])
