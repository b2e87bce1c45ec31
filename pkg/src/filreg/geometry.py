"""Low-dimensional convex polytopes and the Hausdorff metric.

Every set value in the package (regularizations, minimal maps, Clarke
subdifferentials) is a :class:`ConvexBody`.  Ambient dimensions 1, 2 and 3
use exact vertex enumeration; higher dimensions keep only the points that are
extreme for a fixed quasi-uniform direction set.
"""
from __future__ import annotations

import math
from functools import cached_property

import numpy as np
from scipy.optimize import nnls
from scipy.spatial import ConvexHull, QhullError

MERGE_TOL = 1e-12

_CHUNK = 2048


def _as_points(points, dim=None) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # a flat list is a list of 1-D points unless the caller says otherwise
        arr = arr.reshape(-1, 1) if dim in (None, 1) else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError("points must be a 2-D array of shape (n, dim)")
    return arr


def _lexsort_rows(arr: np.ndarray) -> np.ndarray:
    order = np.lexsort(arr.T[::-1])
    return arr[order]


def _merge_close(arr: np.ndarray) -> np.ndarray:
    """Lexicographically sort and drop points within MERGE_TOL of a kept one."""
    arr = np.unique(arr, axis=0)
    if len(arr) <= 1:
        return arr
    keep = [arr[0]]
    for p in arr[1:]:
        # sorted on the first coordinate, so only the recent tail can be close
        close = False
        for q in reversed(keep):
            if p[0] - q[0] > MERGE_TOL:
                break
            if np.max(np.abs(p - q)) <= MERGE_TOL:
                close = True
                break
        if not close:
            keep.append(p)
    return np.array(keep)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _monotone_chain(pts: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain on lexicographically sorted, distinct points.

    Returns the hull vertices in counter-clockwise order starting from the
    lexicographically smallest point.  Collinear points are dropped.
    """
    n = len(pts)
    if n <= 2:
        return pts.copy()
    eps = MERGE_TOL * max(1.0, float(np.max(np.abs(pts))))

    def flat(o, a, b):
        # a is to the right of o->b, or within eps of the segment o-b
        c = _cross(o, a, b)
        if c <= 0.0:
            return True
        ux, uy = b[0] - o[0], b[1] - o[1]
        t = (a[0] - o[0]) * ux + (a[1] - o[1]) * uy
        L2 = ux * ux + uy * uy
        return c <= eps * np.sqrt(L2) and 0.0 <= t <= L2

    P = pts.tolist()
    lower: list = []
    for p in P:
        while len(lower) >= 2 and flat(lower[-2], lower[-1], p):
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(P):
        while len(upper) >= 2 and flat(upper[-2], upper[-1], p):
            upper.pop()
        upper.append(p)
    ring = lower[:-1] + upper[:-1]
    if len(ring) == 0:
        ring = [P[0]]
    return _drop_slivers(np.array(ring, dtype=float), eps)


def _drop_slivers(ring: np.ndarray, eps: float) -> np.ndarray:
    """Remove ring vertices within eps of the segment joining their neighbours.

    The chain only tests interior points, so the first vertex of each chain
    can survive as a sliver; left in, it leaves edges whose normals round
    to the same angle.
    """
    while len(ring) >= 3:
        prev, nxt = np.roll(ring, 1, axis=0), np.roll(ring, -1, axis=0)
        u = nxt - prev
        L2 = np.sum(u * u, axis=1)
        t = np.clip(np.sum((ring - prev) * u, axis=1) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
        dist = np.linalg.norm(ring - (prev + t[:, None] * u), axis=1)
        bad = np.nonzero(dist <= eps)[0]
        if len(bad) == 0:
            break
        # one at a time keeps the neighbour relation valid
        ring = np.delete(ring, bad[np.argmin(dist[bad])], axis=0)
    return ring


def _affine_frame(pts: np.ndarray):
    """Orthonormal frame of the affine hull: (origin, basis rows, reduced coords)."""
    origin = pts.mean(axis=0)
    centered = pts - origin
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    coords = centered @ vt.T
    extent = coords.max(axis=0) - coords.min(axis=0)
    k = int(np.sum(extent > MERGE_TOL))
    return origin, vt[:k], coords[:, :k]


def _segment_nearest(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Nearest points on segments [a_j, b_j] for query rows x (m, j, dim)."""
    ab = b - a
    denom = np.einsum("...i,...i->...", ab, ab)
    t = np.einsum("...i,...i->...", x - a, ab)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(denom > 0, t / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    return a + t[..., None] * ab


def _triangle_nearest(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Nearest point on triangle abc to p, vectorized (Ericson's region test)."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("...i,...i->...", ab, ap)
    d2 = np.einsum("...i,...i->...", ac, ap)
    bp = p - b
    d3 = np.einsum("...i,...i->...", ab, bp)
    d4 = np.einsum("...i,...i->...", ac, bp)
    cp = p - c
    d5 = np.einsum("...i,...i->...", ab, cp)
    d6 = np.einsum("...i,...i->...", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / np.where(denom != 0, denom, 1.0), 0.0)
        w = np.where(denom != 0, vc / np.where(denom != 0, denom, 1.0), 0.0)
    out = a + v[..., None] * ab + w[..., None] * ac
    # edge and vertex regions: fall back to the closest of the three edges
    inside = (va >= 0) & (vb >= 0) & (vc >= 0) & (denom > 0)
    e1 = _segment_nearest(p, a, b)
    e2 = _segment_nearest(p, b, c)
    e3 = _segment_nearest(p, a, c)
    cands = np.stack([e1, e2, e3], axis=-2)
    dists = np.linalg.norm(cands - p[..., None, :], axis=-1)
    best = np.take_along_axis(cands, np.argmin(dists, axis=-1)[..., None, None], axis=-2)[..., 0, :]
    return np.where(inside[..., None], out, best)


class ConvexBody:
    """A compact convex polytope in R^dim stored by its extreme points.

    Build instances with :func:`hull`; the constructor re-hulls whatever it
    is given so the invariants hold regardless.
    """

    def __init__(self, points, dim: int | None = None):
        arr = _as_points(points, dim)
        if len(arr) == 0:
            raise ValueError("empty point set")
        if not np.all(np.isfinite(arr)):
            raise ValueError("points must be finite")
        verts = _extreme_points(arr)
        verts.setflags(write=False)
        self.vertices = verts
        self.dim = arr.shape[1]

    # construction helpers -------------------------------------------------
    @classmethod
    def point(cls, p) -> "ConvexBody":
        return cls(np.atleast_2d(np.asarray(p, dtype=float)))

    @classmethod
    def segment(cls, lo, hi) -> "ConvexBody":
        return cls([[lo], [hi]])

    @classmethod
    def from_json(cls, data) -> "ConvexBody":
        return cls(np.asarray(data, dtype=float).reshape(len(data), -1))

    def to_json(self) -> list:
        return self.vertices.tolist()

    def __repr__(self) -> str:
        return f"ConvexBody(dim={self.dim}, vertices={self.vertices.tolist()})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConvexBody):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash((self.dim, self.vertices.tobytes()))

    @property
    def is_singleton(self) -> bool:
        return len(self.vertices) == 1

    @cached_property
    def diameter(self) -> float:
        v = self.vertices
        if len(v) == 1:
            return 0.0
        return float(max(np.max(np.linalg.norm(v - p, axis=1)) for p in v))

    @cached_property
    def _ccw(self) -> np.ndarray:
        return _monotone_chain(self.vertices)

    @cached_property
    def _frame(self):
        return _affine_frame(self.vertices)

    @cached_property
    def _hull3(self):
        origin, basis, coords = self._frame
        if basis.shape[0] < 3:
            return None
        return ConvexHull(self.vertices)

    @cached_property
    def _reduced(self) -> "ConvexBody | None":
        """Lower-dimensional copy in affine-hull coordinates (dim 3 only)."""
        origin, basis, coords = self._frame
        if basis.shape[0] == 0:
            return None
        return ConvexBody(coords, dim=basis.shape[0])

    # queries ---------------------------------------------------------------
    def support(self, u) -> float:
        return support(self, u)

    def nearest(self, x) -> np.ndarray:
        return self.nearest_many(np.asarray(x, dtype=float).reshape(1, self.dim))[0]

    def dist(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(self.dim)
        return float(np.linalg.norm(self.nearest(x) - x))

    def dist_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        return np.linalg.norm(self.nearest_many(X) - X, axis=1)

    def contains(self, x, tol: float = 1e-9) -> bool:
        return self.dist(x) <= tol

    def nearest_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        if self.dim == 1:
            return np.clip(X, self.vertices[0, 0], self.vertices[-1, 0])
        if self.dim == 2:
            return np.vstack([self._nearest2(X[i:i + _CHUNK]) for i in range(0, len(X), _CHUNK)]) if len(X) else X.copy()
        if self.dim == 3:
            return self._nearest3(X)
        return self._nearest_qp(X)

    def _nearest2(self, X: np.ndarray) -> np.ndarray:
        ring = self._ccw
        k = len(ring)
        if k == 1:
            return np.repeat(ring, len(X), axis=0)
        a = ring
        b = np.roll(ring, -1, axis=0)
        if k == 2:
            a, b = ring[:1], ring[1:]
        cand = _segment_nearest(X[:, None, :], a[None], b[None])
        d = np.linalg.norm(cand - X[:, None, :], axis=2)
        out = cand[np.arange(len(X)), np.argmin(d, axis=1)]
        if k >= 3:
            e = b - a
            rel = X[:, None, :] - a[None]
            cr = e[None, :, 0] * rel[..., 1] - e[None, :, 1] * rel[..., 0]
            inside = np.all(cr >= 0, axis=1)
            out[inside] = X[inside]
        return out

    def _nearest3(self, X: np.ndarray) -> np.ndarray:
        origin, basis, coords = self._frame
        k = basis.shape[0]
        if k == 0:
            return np.repeat(self.vertices[:1], len(X), axis=0)
        if k < 3:
            red = self._reduced
            y = (X - origin) @ basis.T
            return origin + red.nearest_many(y) @ basis
        hull3 = self._hull3
        out = np.empty_like(X)
        eq = hull3.equations
        tri = self.vertices[hull3.simplices]
        for i in range(0, len(X), 256):
            xs = X[i:i + 256]
            inside = np.all(xs @ eq[:, :3].T + eq[:, 3] <= MERGE_TOL, axis=1)
            p = xs[:, None, :]
            cand = _triangle_nearest(p, tri[None, :, 0], tri[None, :, 1], tri[None, :, 2])
            d = np.linalg.norm(cand - p, axis=2)
            best = cand[np.arange(len(xs)), np.argmin(d, axis=1)]
            best[inside] = xs[inside]
            out[i:i + 256] = best
        return out

    def _nearest_qp(self, X: np.ndarray) -> np.ndarray:
        # min |V^T lam - x| over the simplex; the sum constraint is a heavy row
        V = self.vertices
        w = 1e3 * max(1.0, float(np.max(np.abs(V))))
        A = np.vstack([V.T, w * np.ones(len(V))])
        out = np.empty_like(X)
        for i, x in enumerate(X):
            lam, _ = nnls(A, np.concatenate([x, [w]]))
            lam /= lam.sum()
            out[i] = lam @ V
        return out


def _extreme_points(arr: np.ndarray) -> np.ndarray:
    dim = arr.shape[1]
    if dim == 1:
        lo, hi = float(arr.min()), float(arr.max())
        if hi - lo <= MERGE_TOL:
            return np.array([[lo]])
        return np.array([[lo], [hi]])
    pts = _merge_close(arr)
    if len(pts) == 1:
        return pts
    if dim == 2:
        return _lexsort_rows(_monotone_chain(pts))
    origin, basis, coords = _affine_frame(pts)
    k = basis.shape[0]
    if k == 0:
        return pts[:1]
    if k >= 3:
        try:
            return _lexsort_rows(pts[ConvexHull(coords).vertices])
        except QhullError:
            if k > 3:
                # joggled input only ever keeps extra points, never drops one
                return _lexsort_rows(pts[ConvexHull(coords, qhull_options="QJ").vertices])
            k = 2
            coords = coords[:, :2]
    # keep the original coordinates of the points extreme in the frame
    idx = _extreme_indices(coords)
    return _lexsort_rows(pts[idx])


def _extreme_indices(coords: np.ndarray) -> np.ndarray:
    k = coords.shape[1]
    if k == 1:
        return np.unique([np.argmin(coords[:, 0]), np.argmax(coords[:, 0])])
    order = np.lexsort(coords.T[::-1])
    ring = _monotone_chain(coords[order])
    # map the ring back to indices by exact coordinate match
    lookup = {tuple(c): int(i) for i, c in zip(order, coords[order])}
    return np.unique([lookup[tuple(p)] for p in ring])


# ---------------------------------------------------------------------------
# public operations


def hull(points, dim: int | None = None) -> ConvexBody:
    """Convex hull of a nonempty finite point list."""
    arr = _as_points(points, dim)
    if len(arr) == 0:
        raise ValueError("empty point set")
    return ConvexBody(arr)


def _check_dims(a: ConvexBody, b: ConvexBody) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def support(a: ConvexBody, u) -> float:
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != a.dim:
        raise ValueError(f"dimension mismatch: body {a.dim}, direction {u.shape[0]}")
    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        raise ValueError("zero direction")
    if abs(norm - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    return float(np.max(a.vertices @ u))


def dist_point(a: ConvexBody, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != a.dim:
        raise ValueError(f"dimension mismatch: body {a.dim}, point {x.shape[0]}")
    return a.dist(x)


def excess(a: ConvexBody, b: ConvexBody) -> float:
    """One-sided Hausdorff excess sup_{p in a} dist(p, b)."""
    _check_dims(a, b)
    if a.dim == 1:
        lo_a, hi_a = a.vertices[0, 0], a.vertices[-1, 0]
        lo_b, hi_b = b.vertices[0, 0], b.vertices[-1, 0]
        return float(max(0.0, lo_b - lo_a, hi_a - hi_b))
    if a == b:
        return 0.0
    if a.dim == 2:
        return _hausdorff2(a._ccw, b._ccw, one_sided=True)
    # dist(., b) is convex, so its sup over a sits at a vertex
    return float(np.max(b.dist_many(a.vertices)))


def hausdorff(a: ConvexBody, b: ConvexBody) -> float:
    """Hausdorff distance between two convex bodies of the same dimension.

    Dimension 2 uses the support-function identity on the merged edge-normal
    arcs (linear in the vertex counts).  Higher dimensions take the larger
    excess, each a max of point-to-body distances over vertices.
    """
    _check_dims(a, b)
    if a.dim == 1:
        return float(max(abs(a.vertices[0, 0] - b.vertices[0, 0]),
                         abs(a.vertices[-1, 0] - b.vertices[-1, 0])))
    if a.dim == 2:
        return _hausdorff2(a._ccw, b._ccw)
    return max(excess(a, b), excess(b, a))


_TWO_PI = 2.0 * math.pi


def _normal_arcs(ring: np.ndarray):
    """Sorted outward-normal angles and the vertex active just after each."""
    k = len(ring)
    if k == 1:
        return np.empty(0), np.zeros(1, dtype=int)
    e = np.roll(ring, -1, axis=0) - ring
    if k == 2:
        e = e[:2]
    ang = np.mod(np.arctan2(-e[:, 0], e[:, 1]), _TWO_PI)
    nxt = (np.arange(len(e)) + 1) % k
    order = np.argsort(ang)
    return ang[order], nxt[order]


def _active(angles: np.ndarray, nxt: np.ndarray, theta: np.ndarray) -> np.ndarray:
    if len(angles) == 0:
        return np.zeros(len(theta), dtype=int)
    j = np.searchsorted(angles, theta, side="right") - 1
    return nxt[j]  # j == -1 wraps to the last arc


def _hausdorff2(ra: np.ndarray, rb: np.ndarray, one_sided: bool = False) -> float:
    """max_u |h_a(u) - h_b(u)| (or max_u (h_a - h_b)_+ when one-sided) over unit u."""
    ang_a, nxt_a = _normal_arcs(ra)
    ang_b, nxt_b = _normal_arcs(rb)
    brk = np.unique(np.concatenate([ang_a, ang_b]))
    if len(brk) == 0:
        return float(np.linalg.norm(ra[0] - rb[0]))
    t0 = brk
    t1 = np.concatenate([brk[1:], [brk[0] + _TWO_PI]])
    mid = np.mod(0.5 * (t0 + t1), _TWO_PI)
    # on each arc both supports are attained at fixed vertices: h_a - h_b = w.u
    w = ra[_active(ang_a, nxt_a, mid)] - rb[_active(ang_b, nxt_b, mid)]
    u0 = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    u1 = np.stack([np.cos(t1), np.sin(t1)], axis=1)
    s0, s1 = np.sum(w * u0, axis=1), np.sum(w * u1, axis=1)
    val = np.maximum(s0, s1) if one_sided else np.maximum(np.abs(s0), np.abs(s1))
    wn = np.linalg.norm(w, axis=1)
    dirs = [np.arctan2(w[:, 1], w[:, 0])]
    if not one_sided:
        dirs.append(np.arctan2(-w[:, 1], -w[:, 0]))
    for phi in dirs:
        phi = np.mod(phi, _TWO_PI)
        inside = ((phi > t0) & (phi < t1)) | ((phi + _TWO_PI > t0) & (phi + _TWO_PI < t1))
        val = np.where(inside, np.maximum(val, wn), val)
    return float(max(0.0, np.max(val)))


def union_hull(bodies) -> ConvexBody:
    bodies = list(bodies)
    if not bodies:
        raise ValueError("empty point set")
    return hull(np.vstack([b.vertices for b in bodies]))
