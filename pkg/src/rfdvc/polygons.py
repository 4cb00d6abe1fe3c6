"""Mask outlines as integer polygons: boundary tracing, simplification, rasterization."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import MaskSet

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)

# direction -> (dx, dy); y grows downward, so turning right is clockwise on screen
_E, _S, _W, _N = (1, 0), (0, 1), (-1, 0), (0, -1)
# pixel offsets (relative to the vertex) of the front-left / front-right pixels
_FRONT = {
    _E: ((0, -1), (0, 0)),
    _S: ((0, 0), (-1, 0)),
    _W: ((-1, 0), (-1, -1)),
    _N: ((-1, -1), (0, -1)),
}


@dataclass(frozen=True, eq=False)
class Polygon:
    label: int
    vertices: np.ndarray  # (n, 2) int, (x, y) pixel-corner coordinates, implicitly closed

    def __eq__(self, other):
        return (isinstance(other, Polygon) and self.label == other.label
                and np.array_equal(self.vertices, other.vertices))

    __hash__ = None

    def __len__(self):
        return len(self.vertices)


@dataclass(frozen=True)
class PolygonSet:
    polygons: tuple[Polygon, ...] = ()

    def __len__(self):
        return len(self.polygons)

    def __iter__(self):
        return iter(self.polygons)

    def to_bytes(self) -> bytes:
        out = [struct.pack("<H", len(self.polygons))]
        for p in self.polygons:
            out.append(struct.pack("<HH", p.label, len(p.vertices)))
            out.append(np.asarray(p.vertices, dtype="<u2").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PolygonSet":
        (count,) = struct.unpack_from("<H", data, 0)
        pos = 2
        polys = []
        for _ in range(count):
            label, n = struct.unpack_from("<HH", data, pos)
            pos += 4
            verts = np.frombuffer(data, dtype="<u2", count=2 * n, offset=pos).reshape(n, 2)
            pos += 4 * n
            polys.append(Polygon(label, verts.astype(np.int64)))
        if pos != len(data):
            raise ValueError("trailing bytes after polygon set")
        return cls(tuple(polys))

    @property
    def nbytes(self) -> int:
        return 2 + sum(4 + 4 * len(p) for p in self.polygons)

    def rasterize(self, shape: tuple[int, int]) -> np.ndarray:
        out = np.zeros(shape, dtype=bool)
        for p in self.polygons:
            out |= rasterize_polygon(p.vertices, shape)
        return out


def trace_boundary(component: np.ndarray) -> np.ndarray:
    """Outer boundary of one 4-connected component along pixel edges.

    Returns the turning vertices, clockwise on screen, starting at the
    top-left corner of the top-most, left-most pixel.
    """
    h, w = component.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = component
    rows, cols = np.nonzero(component)
    if rows.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    first = np.argmin(rows * (w + 1) + cols)
    start = (int(cols[first]), int(rows[first]))

    def fg(x, y):
        # (x, y) is a pixel column/row in unpadded coordinates
        return padded[y + 1, x + 1]

    x, y = start
    d = _E
    verts = [start]
    while True:
        x, y = x + d[0], y + d[1]
        (lx, ly), (rx, ry) = _FRONT[d]
        right = fg(x + rx, y + ry)
        left = fg(x + lx, y + ly)
        if not right:
            nd = (-d[1], d[0])
        elif left:
            nd = (d[1], -d[0])
        else:
            nd = d
        if (x, y) == start and nd == _E:
            break
        if nd != d:
            verts.append((x, y))
        d = nd
    return np.asarray(verts, dtype=np.int64)


def _rdp(points: np.ndarray, eps: float) -> np.ndarray:
    """Douglas-Peucker on an open chain; endpoints kept."""
    n = len(points)
    if n < 3:
        return points
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    pts = points.astype(np.float64)
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        a, b = pts[i], pts[j]
        seg = b - a
        inner = pts[i + 1:j]
        norm = np.hypot(*seg)
        if norm == 0:
            dist = np.hypot(*(inner - a).T)
        else:
            dist = np.abs(seg[0] * (inner[:, 1] - a[1]) - seg[1] * (inner[:, 0] - a[0])) / norm
        k = int(np.argmax(dist))
        if dist[k] > eps:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return points[keep]


def simplify_closed(verts: np.ndarray, eps: float) -> np.ndarray:
    n = len(verts)
    if n <= 4 or eps <= 0:
        return verts
    d = np.hypot(*(verts - verts[0]).T)
    far = int(np.argmax(d))
    a = _rdp(verts[:far + 1], eps)
    b = _rdp(np.vstack([verts[far:], verts[:1]]), eps)
    out = np.vstack([a[:-1], b[:-1]])
    return out if len(out) >= 3 else verts


def rasterize_polygon(verts: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Even-odd fill sampled at pixel centres; crossings are half-open in y and x."""
    h, w = shape
    out = np.zeros(shape, dtype=bool)
    if len(verts) < 3:
        return out
    v = np.asarray(verts, dtype=np.float64)
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    ylo = max(int(np.floor(v[:, 1].min())), 0)
    yhi = min(int(np.ceil(v[:, 1].max())), h)
    for row in range(ylo, yhi):
        yc = row + 0.5
        hit = (np.minimum(y0, y1) <= yc) & (yc < np.maximum(y0, y1))
        if not hit.any():
            continue
        xs = x0[hit] + (yc - y0[hit]) * (x1[hit] - x0[hit]) / (y1[hit] - y0[hit])
        xs.sort()
        for xa, xb in zip(xs[0::2], xs[1::2]):
            ca = max(int(np.ceil(xa - 0.5)), 0)
            cb = min(int(np.ceil(xb - 0.5)), w)
            if cb > ca:
                out[row, ca:cb] = True
    return out


def _orient(a, b, c):
    return np.sign((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
                   - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))


def is_simple(verts: np.ndarray) -> bool:
    """True if no two non-adjacent edges of the closed ring touch or cross."""
    n = len(verts)
    if n < 4:
        return n == 3 and _orient(verts[0], verts[1], verts[2]) != 0
    p = verts.astype(np.float64)
    q = np.roll(p, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    a, b, c, d = p[i], q[i], p[j], q[j]
    o1, o2, o3, o4 = _orient(a, b, c), _orient(a, b, d), _orient(c, d, a), _orient(c, d, b)
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)

    def on_seg(u, v, w, o):
        # w collinear with u-v and inside its bounding box
        return (o == 0) & (np.minimum(u[:, 0], v[:, 0]) <= w[:, 0]) & (w[:, 0] <= np.maximum(u[:, 0], v[:, 0])) \
            & (np.minimum(u[:, 1], v[:, 1]) <= w[:, 1]) & (w[:, 1] <= np.maximum(u[:, 1], v[:, 1]))

    touch = on_seg(a, b, c, o1) | on_seg(a, b, d, o2) | on_seg(c, d, a, o3) | on_seg(c, d, b, o4)
    return not bool(np.any(proper | touch))


MIN_COVERAGE = 0.98


def simplify_component(component: np.ndarray, eps: float) -> np.ndarray:
    """Trace and simplify, halving ``eps`` until the ring stays simple and covers the component.

    The exact trace (eps = 0) is the last resort.
    """
    exact = trace_boundary(component)
    area = np.count_nonzero(component)
    while eps >= 0.25:
        verts = simplify_closed(exact, eps)
        if len(verts) == len(exact):
            return exact
        covered = np.count_nonzero(rasterize_polygon(verts, component.shape) & component)
        if covered >= MIN_COVERAGE * area and is_simple(verts):
            return verts
        eps /= 2
    return exact


def polygons_from_bitmap(bitmap: np.ndarray, label: int, eps: float) -> list[Polygon]:
    comps, n = ndimage.label(bitmap, structure=FOUR_CONNECTED)
    polys = []
    for i, sl in enumerate(ndimage.find_objects(comps), start=1):
        if sl is None:
            continue
        sub = comps[sl] == i
        verts = simplify_component(sub, eps)
        verts = verts + np.array([sl[1].start, sl[0].start])
        polys.append(Polygon(label, verts))
    return polys


def extract_polygons(masks: MaskSet, poly_epsilon: float = 1.0) -> PolygonSet:
    polys: list[Polygon] = []
    for m in masks:
        polys.extend(polygons_from_bitmap(m.bitmap, m.label, poly_epsilon))
    return PolygonSet(tuple(polys))
