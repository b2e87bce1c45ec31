"""Finite-depth splitting partitions built from fat Cantor sets.

Classes 2..N are unions of fat Cantor sets T placed inside dyadic intervals
U_k; class 1 is the complement (it also owns the reserved sets T_{b(k,1)}).
In R^d the partition is the cylinder lift of the 1-D one through x_1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .fields import CuscoOracle, PointField, SelectionFamily

FRONTIER_TOL = 1e-15


def cantor_pair(k: int, n: int) -> int:
    """Bijection N x N -> N with b(1, 1) = 1."""
    return (k + n - 1) * (k + n - 2) // 2 + n


def dyadic_interval(k: int, window=(0.0, 1.0)) -> tuple[float, float]:
    """k-th interval (1-based) of the level-by-level dyadic enumeration of the window."""
    if k < 1:
        raise ValueError("k must be >= 1")
    level = (k).bit_length() - 1
    j = k - 2 ** level
    lo, hi = window
    w = (hi - lo) / 2 ** level
    return lo + j * w, lo + (j + 1) * w


@dataclass(frozen=True)
class FatCantorSet:
    a: float
    b: float
    r: float
    depth: int
    survivors: np.ndarray = field(repr=False, compare=False)
    removed: np.ndarray = field(repr=False, compare=False)

    @property
    def measure(self) -> float:
        """Measure of the depth-D survivor from the schedule."""
        D = self.depth
        return (self.b - self.a) * (1.0 - self.r * 0.5 * (1.0 - 0.5 ** D))

    @property
    def limit_measure(self) -> float:
        return (self.b - self.a) * (1.0 - self.r / 2.0)

    def membership(self, x) -> np.ndarray:
        """1 = in the depth-D survivor, 0 = out, -1 = frontier (endpoint)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        s, e = self.survivors[:, 0], self.survivors[:, 1]
        j = np.searchsorted(s, x, side="right") - 1
        jj = np.clip(j, 0, len(s) - 1)
        near = (np.abs(x - s[jj]) <= FRONTIER_TOL) | (np.abs(x - e[jj]) <= FRONTIER_TOL)
        jn = np.clip(j + 1, 0, len(s) - 1)
        near |= np.abs(x - s[jn]) <= FRONTIER_TOL
        inside = (j >= 0) & (x > s[jj]) & (x < e[jj])
        out = np.where(inside, 1, 0)
        return np.where(near, -1, out)

    def to_json(self) -> dict:
        return {"base": [self.a, self.b], "r": self.r, "depth": self.depth}


def build_fat_cantor(interval, r: float = 1.0, depth: int = 12) -> FatCantorSet:
    """At step n remove a centered open interval of length (b-a) r 4^-n from every survivor."""
    a, b = (float(v) for v in interval)
    if not 0.0 < r <= 1.0:
        raise ValueError("r must lie in (0, 1]")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if not b > a:
        raise ValueError("empty interval")
    surv = np.array([[a, b]])
    removed = []
    for n in range(1, depth + 1):
        half = 0.5 * (b - a) * r * 4.0 ** (-n)
        mid = 0.5 * (surv[:, 0] + surv[:, 1])
        gaps = np.stack([mid - half, mid + half], axis=1)
        removed.append(gaps)
        left = np.stack([surv[:, 0], gaps[:, 0]], axis=1)
        right = np.stack([gaps[:, 1], surv[:, 1]], axis=1)
        surv = np.stack([left, right], axis=1).reshape(-1, 2)
    rem = np.vstack(removed)
    rem = rem[np.argsort(rem[:, 0])]
    surv.setflags(write=False)
    rem.setflags(write=False)
    return FatCantorSet(a, b, float(r), int(depth), surv, rem)


@dataclass(frozen=True)
class Placement:
    m: int
    k: int
    n: int
    base: tuple


class SplittingPartition:
    """Finite truncation of a splitting partition {A_n}, n = 1..n_cls."""

    def __init__(self, n_cls: int, k_max: int, depth: int, r: float, placements, window=(0.0, 1.0), d: int = 1):
        self.n_cls = n_cls
        self.k_max = k_max
        self.depth = depth
        self.r = r
        self.window = (float(window[0]), float(window[1]))
        self.d = d
        self.placements = tuple(placements)
        self.sets = tuple(build_fat_cantor(p.base, r, depth) for p in self.placements)
        if self.sets:
            starts = np.concatenate([s.survivors[:, 0] for s in self.sets])
            ends = np.concatenate([s.survivors[:, 1] for s in self.sets])
            cls = np.concatenate([np.full(len(s.survivors), p.n) for s, p in zip(self.sets, self.placements)])
            order = np.argsort(starts, kind="stable")
            self._starts, self._ends, self._cls = starts[order], ends[order], cls[order]
        else:
            self._starts = self._ends = np.empty(0)
            self._cls = np.empty(0, dtype=int)
        # U_1 is the whole window
        self.test_boxes = [dyadic_interval(k, self.window) for k in range(1, k_max + 1)]
        self.certificate = self.certify(self.test_boxes)

    # ------------------------------------------------------------------
    @property
    def resolution(self) -> float:
        """Radius r such that every ball B(x, r), x in the window, contains a full U_k."""
        full_level = (self.k_max + 1).bit_length() - 2
        return (self.window[1] - self.window[0]) / 2 ** max(full_level, 0)

    def lift(self, d: int) -> "SplittingPartition":
        out = object.__new__(SplittingPartition)
        out.__dict__.update(self.__dict__)
        out.d = d
        return out

    def is_disjoint(self) -> bool:
        if len(self._starts) == 0:
            return True
        return bool(np.all(self._starts < self._ends) and np.all(self._ends[:-1] < self._starts[1:]))

    def assign_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        x = X.reshape(-1, self.d)[:, 0] if X.ndim == 2 or self.d > 1 else X.reshape(-1)
        if len(self._starts) == 0:
            return np.ones(len(x), dtype=int)
        s, e = self._starts, self._ends
        j = np.searchsorted(s, x, side="right") - 1
        jj = np.clip(j, 0, len(s) - 1)
        inside = (j >= 0) & (x > s[jj] + FRONTIER_TOL) & (x < e[jj] - FRONTIER_TOL)
        return np.where(inside, self._cls[jj], 1)

    def assign(self, x) -> int:
        x = np.asarray(x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("x must be finite")
        return int(self.assign_many(x.reshape(1, self.d))[0])

    def class_measure(self, lo: float, hi: float) -> np.ndarray:
        """Lower bounds of L(A_n ∩ (lo, hi)) for n = 1..n_cls (index n-1)."""
        width = max(0.0, hi - lo)
        out = np.zeros(self.n_cls)
        if len(self._starts):
            seg = np.clip(np.minimum(self._ends, hi) - np.maximum(self._starts, lo), 0.0, None)
            sums = np.bincount(self._cls, weights=seg, minlength=self.n_cls + 1)[1:self.n_cls + 1]
            # each interval length carries one rounding of relative size eps
            slack = 4.0 * np.finfo(float).eps * max(1.0, abs(lo), abs(hi)) * np.bincount(
                self._cls, weights=(seg > 0).astype(float), minlength=self.n_cls + 1)[1:self.n_cls + 1]
            out[:] = sums
            upper_others = np.sum(sums[1:] + slack[1:])
            out[1:] = np.maximum(sums[1:] - slack[1:], 0.0)
            out[0] = max(width - upper_others, 0.0)
        else:
            out[0] = width
        return out

    def box_measure(self, box) -> np.ndarray:
        """Certified lower bounds for a box [(lo_1, hi_1), ..., (lo_d, hi_d)] via the product rule."""
        box = [tuple(map(float, b)) for b in box]
        bounds = self.class_measure(*box[0])
        for lo, hi in box[1:]:
            bounds = bounds * max(0.0, hi - lo)
        return bounds

    def certify(self, boxes) -> np.ndarray:
        return np.array([self.class_measure(lo, hi) for lo, hi in boxes])

    def certificate_ok(self) -> bool:
        return bool(np.all(self.certificate > 0.0))

    def certificate_csv(self) -> str:
        header = "box_lo,box_hi," + ",".join(f"class_{n}" for n in range(1, self.n_cls + 1))
        rows = [header]
        for (lo, hi), row in zip(self.test_boxes, self.certificate):
            rows.append(",".join([repr(lo), repr(hi)] + [repr(float(v)) for v in row]))
        return "\n".join(rows) + "\n"

    # ------------------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "n_cls": self.n_cls, "k_max": self.k_max, "depth": self.depth, "r": self.r,
            "window": list(self.window), "d": self.d,
            "placements": [{"m": p.m, "k": p.k, "n": p.n, "base": list(p.base)} for p in self.placements],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SplittingPartition":
        pl = [Placement(int(p["m"]), int(p["k"]), int(p["n"]), (float(p["base"][0]), float(p["base"][1])))
              for p in data["placements"]]
        return cls(int(data["n_cls"]), int(data["k_max"]), int(data["depth"]), float(data["r"]), pl,
                   tuple(data.get("window", (0.0, 1.0))), int(data.get("d", 1)))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _gaps_within(starts: np.ndarray, ends: np.ndarray, lo: float, hi: float):
    """Open gaps of (lo, hi) minus the closed intervals [starts_i, ends_i]."""
    i0 = np.searchsorted(ends, lo, side="left")
    i1 = np.searchsorted(starts, hi, side="right")
    s, e = starts[i0:i1], ends[i0:i1]
    left = np.concatenate([[lo], e])
    right = np.concatenate([s, [hi]])
    left = np.maximum(left, lo)
    right = np.minimum(right, hi)
    return left, right


def build_splitting(n_cls: int = 8, k_max: int = 32, depth: int = 12, r: float = 1.0,
                    window=(0.0, 1.0), d: int = 1) -> SplittingPartition:
    """Place T_{b(k,n)} inside U_k minus the earlier sets, in order of b(k, n).

    Each set goes into the largest surviving gap of U_k, centered, with base
    length min(gap/2, |U_k| / (4 n_cls)) so that every U_k keeps room for
    all of its classes.
    """
    if n_cls < 1:
        raise ValueError("N_cls must be >= 1")
    if k_max < n_cls:
        raise ValueError("K_max must be >= N_cls")
    if not 0.0 < r <= 1.0:
        raise ValueError("r must lie in (0, 1]")
    placements: list = []
    if n_cls == 1:
        return SplittingPartition(n_cls, k_max, depth, r, placements, window, d)
    grid = sorted((cantor_pair(k, n), k, n) for k in range(1, k_max + 1) for n in range(1, n_cls + 1))
    starts = np.empty(0)
    ends = np.empty(0)
    for m, k, n in grid:
        lo, hi = dyadic_interval(k, window)
        left, right = _gaps_within(starts, ends, lo, hi)
        sizes = right - left
        g = int(np.argmax(sizes))
        size = float(sizes[g])
        cap = (hi - lo) / (4.0 * n_cls)
        length = min(0.5 * size, cap)
        if length <= (hi - lo) * 1e-9:
            raise ValueError("placement budget exhausted: increase K_max/depth")
        center = 0.5 * (left[g] + right[g])
        base = (center - 0.5 * length, center + 0.5 * length)
        T = build_fat_cantor(base, r, depth)
        pos = np.searchsorted(starts, base[0])
        starts = np.insert(starts, pos, T.survivors[:, 0])
        ends = np.insert(ends, pos, T.survivors[:, 1])
        placements.append(Placement(m, k, n, base))
    return SplittingPartition(n_cls, k_max, depth, r, placements, window, d)


# ---------------------------------------------------------------------------
# fields built on a partition


def indicator_field(p: SplittingPartition, cls: int = 2, complement: bool = False, name: str = "") -> PointField:
    """1_{A_cls} (or its complement) as a point-evaluation field on R^d."""

    def fn(X):
        hit = p.assign_many(X) == cls
        if complement:
            hit = ~hit
        return hit.astype(float).reshape(-1, 1)

    spec = {"builtin": "splitting-indicator", "class": cls, "complement": complement, "partition": p.to_json()}
    return PointField(p.d, 1, fn, 1.0, name=name or "splitting-indicator", resolution=p.resolution, spec=spec)


def representing_function(oracle: CuscoOracle, selections: SelectionFamily, p: SplittingPartition) -> PointField:
    """f(x) = f_n(x) on A_n: a single-valued field whose Filippov hull recovers the oracle."""
    if selections.size < p.n_cls:
        raise ValueError(f"need at least {p.n_cls} selections, got {selections.size}")
    if oracle.d != p.d:
        p = p.lift(oracle.d)

    def fn(X):
        cls = p.assign_many(X)
        out = np.empty((len(X), oracle.l))
        for n in np.unique(cls):
            m = cls == n
            out[m] = selections.select(int(n), X[m])
        return out

    return PointField(oracle.d, oracle.l, fn, oracle.bound, name=f"representing({oracle.name})",
                      resolution=p.resolution)
