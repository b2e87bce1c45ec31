"""Bounded measurable fields and cusco maps with explicit null-set structure.

A :class:`PiecewiseField` is a finite list of open polynomial strata
``{g_1 > 0, ..., g_k > 0}`` carrying polynomial values, plus null overrides
(polynomial zero sets or finite point sets) whose values win on the
override set.  Point-evaluation fields (:class:`PointField`) and set-valued
oracles (:class:`CuscoOracle`) cover what polynomials cannot express.
"""
from __future__ import annotations

import json
import json.decoder
import json.scanner
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .geometry import ConvexBody, hull
from .polynomial import Polynomial

NULL_TOL = 1e-9
ADJ_TOL = 1e-9


class FieldSpecError(ValueError):
    """Malformed field spec; ``offset`` is the byte offset of the bad element."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class UncoveredPointError(ValueError):
    pass


@dataclass(frozen=True)
class Stratum:
    guards: tuple
    value: tuple


@dataclass(frozen=True)
class NullStratum:
    """Either the zero set of a nonzero polynomial or a finite point set."""

    zero_of: Polynomial | None = None
    points: tuple | None = None

    def __post_init__(self):
        if (self.zero_of is None) == (self.points is None):
            raise ValueError("null stratum needs exactly one of zero_of / points")
        if self.zero_of is not None and self.zero_of.is_zero:
            raise ValueError("not a null set")
        if self.zero_of is not None and self.zero_of.is_constant:
            # a nonzero constant has an empty zero set: legal but useless
            pass

    @classmethod
    def from_points(cls, pts) -> "NullStratum":
        arr = np.asarray(pts, dtype=float)
        arr = arr.reshape(len(arr), -1)
        return cls(points=tuple(tuple(float(v) for v in p) for p in arr))

    def point_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    def contains(self, X: np.ndarray, tol: float) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.zero_of is not None:
            vals = self.zero_of(X)
            return np.abs(vals) <= tol
        return _match_points(self._sorted_points(), X, tol)

    def _sorted_points(self):
        cache = self.__dict__.get("_sorted")
        if cache is None:
            pts = self.point_array()
            order = np.argsort(pts[:, 0], kind="stable")
            cache = pts[order]
            object.__setattr__(self, "_sorted", cache)
        return cache


def _match_points(pts: np.ndarray, X: np.ndarray, tol: float) -> np.ndarray:
    first = pts[:, 0]
    lo = np.searchsorted(first, X[:, 0] - tol, side="left")
    hi = np.searchsorted(first, X[:, 0] + tol, side="right")
    hit = np.zeros(len(X), dtype=bool)
    for i in np.nonzero(hi > lo)[0]:
        cand = pts[lo[i]:hi[i]]
        hit[i] = bool(np.any(np.max(np.abs(cand - X[i]), axis=1) <= tol))
    return hit


@dataclass(frozen=True)
class NullOverride:
    stratum: NullStratum
    value: tuple


def _eval_value(value: tuple, X: np.ndarray) -> np.ndarray:
    return np.stack([p(X) for p in value], axis=1)


@dataclass(frozen=True)
class PiecewiseField:
    d: int
    l: int
    strata: tuple
    null_overrides: tuple = ()
    bound: float = 1.0
    name: str = ""
    resolution: float = 0.0

    def stratum_index(self, X) -> np.ndarray:
        """Index of the open stratum containing each row of X, -1 if none."""
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        idx = np.full(len(X), -1, dtype=int)
        for k, s in enumerate(self.strata):
            inside = np.ones(len(X), dtype=bool)
            for g in s.guards:
                inside &= g(X) > 0
            idx[(idx < 0) & inside] = k
        return idx

    def evaluate(self, X, null_tol: float = NULL_TOL) -> np.ndarray:
        """Vectorized f(X).  ``null_tol=0`` tests override sets by exact equality."""
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        out = np.full((len(X), self.l), np.nan)
        idx = self.stratum_index(X)
        for k, s in enumerate(self.strata):
            m = idx == k
            if np.any(m):
                out[m] = _eval_value(s.value, X[m])
        covered = idx >= 0
        for ov in self.null_overrides:
            m = ov.stratum.contains(X, null_tol)
            if np.any(m):
                out[m] = _eval_value(ov.value, X[m])
                covered |= m
        if not np.all(covered):
            bad = X[np.argmin(covered)]
            raise UncoveredPointError(f"uncovered point {bad.tolist()}")
        return out

    def sample_values(self, X) -> np.ndarray:
        return self.evaluate(X, null_tol=0.0)

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float).reshape(1, self.d))[0]

    def adjacency(self, X, tol: float = ADJ_TOL) -> np.ndarray:
        """Boolean (n, strata) mask: stratum closure contains the point."""
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        mask = np.ones((len(X), len(self.strata)), dtype=bool)
        for k, s in enumerate(self.strata):
            for g in s.guards:
                mask[:, k] &= g(X) >= -tol
        return mask

    def surfaces(self) -> list:
        """Distinct guard polynomials up to sign and scale, in first-seen order."""
        seen: dict = {}
        for s in self.strata:
            for g in s.guards:
                key = g.canonical()
                if key and key not in seen:
                    seen[key] = g
        return list(seen.values())

    def to_json(self) -> dict:
        spec = {
            "d": self.d,
            "l": self.l,
            "bound": self.bound,
            "strata": [{"guards": [g.to_json() for g in s.guards],
                        "value": [p.to_json() for p in s.value]} for s in self.strata],
            "null_overrides": [_override_json(o) for o in self.null_overrides],
        }
        if self.name:
            spec["name"] = self.name
        return spec


def _override_json(o: NullOverride) -> dict:
    if o.stratum.zero_of is not None:
        out = {"zero_of": o.stratum.zero_of.to_json()}
    else:
        out = {"points": [list(p) for p in o.stratum.points]}
    out["value"] = [p.to_json() for p in o.value]
    return out


@dataclass(frozen=True)
class PointField:
    """A field given only by vectorized point evaluation.

    ``resolution`` is the smallest ball radius at which the field's
    construction is meaningful (finite-depth partitions); Monte Carlo
    engines do not shrink balls below it.
    """

    d: int
    l: int
    fn: Callable
    bound: float
    name: str = ""
    resolution: float = 0.0
    spec: dict | None = field(default=None, compare=False)

    def evaluate(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        return np.asarray(self.fn(X), dtype=float).reshape(len(X), self.l)

    sample_values = evaluate

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float).reshape(1, self.d))[0]

    def to_json(self) -> dict:
        if self.spec is None:
            raise ValueError(f"point field {self.name!r} has no serializable spec")
        return self.spec


# ---------------------------------------------------------------------------
# field operations


def eval_field(f, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    return f(x)


def essential_values(f: PiecewiseField, x, tol: float = ADJ_TOL) -> np.ndarray:
    """Values at x of the open strata whose closure contains x (rows)."""
    x = np.asarray(x, dtype=float).reshape(1, f.d)
    adj = f.adjacency(x, tol)[0]
    vals = [_eval_value(s.value, x)[0] for k, s in enumerate(f.strata) if adj[k]]
    if not vals:
        return np.empty((0, f.l))
    return np.unique(np.array(vals), axis=0)


def essential_vertices_many(f: PiecewiseField, X, tol: float = ADJ_TOL) -> np.ndarray:
    """Stacked essential values over many points (duplicates allowed)."""
    X = np.asarray(X, dtype=float).reshape(-1, f.d)
    adj = f.adjacency(X, tol)
    chunks = [_eval_value(s.value, X[adj[:, k]]) for k, s in enumerate(f.strata) if np.any(adj[:, k])]
    if not chunks:
        return np.empty((0, f.l))
    return np.vstack(chunks)


def _value_tuple(d: int, l: int, new_value) -> tuple:
    if isinstance(new_value, tuple) and new_value and isinstance(new_value[0], Polynomial):
        if len(new_value) != l:
            raise ValueError(f"value has {len(new_value)} components, field has l={l}")
        return new_value
    arr = np.asarray(new_value, dtype=float).reshape(-1)
    if arr.shape[0] != l:
        raise ValueError(f"value has {arr.shape[0]} components, field has l={l}")
    return tuple(Polynomial.constant(d, v) for v in arr)


def _value_bound(value: tuple, stratum: NullStratum, d: int) -> float:
    if stratum.points is not None:
        return float(np.max(np.linalg.norm(_eval_value(value, stratum.point_array()), axis=1)))
    # sup over the unit box is at most the sum of absolute coefficients
    return float(np.linalg.norm([p.abs_coef_sum() for p in value]))


def modify_on_null(f: PiecewiseField, stratum, new_value) -> PiecewiseField:
    """Return f with ``new_value`` on a null stratum (latest override wins)."""
    if isinstance(stratum, Stratum):
        raise ValueError("not a null set")
    if isinstance(stratum, Polynomial):
        if stratum.is_zero:
            raise ValueError("not a null set")
        stratum = NullStratum(zero_of=stratum)
    if not isinstance(stratum, NullStratum):
        stratum = NullStratum.from_points(stratum)
    value = _value_tuple(f.d, f.l, new_value)
    bound = max(f.bound, _value_bound(value, stratum, f.d))
    return replace(f, null_overrides=f.null_overrides + (NullOverride(stratum, value),), bound=bound)


def validate_field(f: PiecewiseField, box, n: int = 100_000, seed: int = 0, tol: float = NULL_TOL) -> dict:
    """Sample-based check of disjointness, coverage and the sup bound on a box."""
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    rng = np.random.default_rng(seed)
    X = lo + (hi - lo) * rng.random((n, f.d))
    inside = np.zeros((n, len(f.strata)), dtype=bool)
    for k, s in enumerate(f.strata):
        inside[:, k] = np.all([g(X) > 0 for g in s.guards], axis=0) if s.guards else True
    count = inside.sum(axis=1)
    uncovered = count == 0
    on_null = np.zeros(n, dtype=bool)
    for ov in f.null_overrides:
        on_null |= ov.stratum.contains(X, tol)
    vals = f.evaluate(X[~uncovered | on_null]) if np.any(~uncovered | on_null) else np.empty((0, f.l))
    report = {
        "disjoint": bool(np.all(count <= 1)),
        "coverage": float(1.0 - uncovered.mean()),
        "uncovered_off_null": int(np.sum(uncovered & ~on_null)),
        "max_norm": float(np.max(np.linalg.norm(vals, axis=1))) if len(vals) else 0.0,
    }
    report["ok"] = (report["disjoint"] and report["coverage"] >= 1 - 1e-3
                    and report["uncovered_off_null"] == 0 and report["max_norm"] <= f.bound + 1e-12)
    return report


# ---------------------------------------------------------------------------
# set-valued oracles


class CuscoOracle:
    """Point -> ConvexBody map with optional vectorized helpers.

    ``exceptional_points`` lists where the map is deliberately enlarged; the
    minimal-map estimator never samples there.
    """

    def __init__(self, d: int, l: int, fn: Callable, bound: float,
                 exceptional_points: Sequence = (), vertices_many: Callable | None = None,
                 project_many: Callable | None = None, name: str = "", spec: dict | None = None):
        self.d = d
        self.l = l
        self.fn = fn
        self.bound = float(bound)
        pts = np.asarray(exceptional_points, dtype=float)
        self.exceptional_points = pts.reshape(-1, d) if pts.size else np.empty((0, d))
        self._vertices_many = vertices_many
        self._project_many = project_many
        self.name = name
        self.spec = spec

    def __call__(self, x) -> ConvexBody:
        return self.fn(np.asarray(x, dtype=float).reshape(self.d))

    def vertices_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        if self._vertices_many is not None:
            return self._vertices_many(X)
        if len(X) == 0:
            return np.empty((0, self.l))
        return np.vstack([self.fn(x).vertices for x in X])

    def project_many(self, X, target) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        target = np.asarray(target, dtype=float).reshape(self.l)
        if self._project_many is not None:
            return self._project_many(X, target)
        out = np.empty((len(X), self.l))
        for i, x in enumerate(X):
            out[i] = self.fn(x).nearest(target)
        return out

    def is_exceptional(self, X, tol: float = 1e-12) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        if len(self.exceptional_points) == 0:
            return np.zeros(len(X), dtype=bool)
        return _match_points(self.exceptional_points[np.argsort(self.exceptional_points[:, 0])], X, tol)

    def to_json(self) -> dict:
        if self.spec is None:
            raise ValueError(f"oracle {self.name!r} has no serializable spec")
        return self.spec

    def __repr__(self):
        return f"CuscoOracle({self.name or 'anonymous'}, d={self.d}, l={self.l})"


def constant_oracle(body: ConvexBody, d: int = 1, name: str = "") -> CuscoOracle:
    V = body.vertices

    def vertices_many(X):
        return np.tile(V, (len(X), 1))

    def project_many(X, target):
        return np.tile(body.nearest(target), (len(X), 1))

    bound = float(np.max(np.linalg.norm(V, axis=1)))
    return CuscoOracle(d, body.dim, lambda x: body, bound, vertices_many=vertices_many,
                       project_many=project_many, name=name or "constant",
                       spec={"builtin": "constant", "d": d, "body": body.to_json()})


def enlarge(oracle: CuscoOracle, where, extra: ConvexBody, name: str = "") -> CuscoOracle:
    """Oracle equal to ``oracle`` except at the points ``where``, enlarged by ``extra``."""
    pts = np.asarray(where, dtype=float).reshape(-1, oracle.d)
    base_fn = oracle.fn

    def fn(x):
        val = base_fn(x)
        if np.any(np.max(np.abs(pts - x), axis=1) <= 1e-12):
            return hull(np.vstack([val.vertices, extra.vertices]))
        return val

    exc = np.vstack([oracle.exceptional_points, pts]) if len(oracle.exceptional_points) else pts
    out = CuscoOracle(oracle.d, oracle.l, fn, max(oracle.bound, float(np.max(np.linalg.norm(extra.vertices, axis=1)))),
                      exceptional_points=exc, name=name or f"{oracle.name}+enlarged")
    base_vm = oracle._vertices_many

    def vertices_many(X):
        hit = out.is_exceptional(X)
        if not np.any(hit):
            return oracle.vertices_many(X) if base_vm is not None else np.vstack([fn(x).vertices for x in X])
        return np.vstack([fn(x).vertices for x in X])

    out._vertices_many = vertices_many
    return out


def check_usc(oracle: CuscoOracle, x, eps: float, deltas=(0.1, 0.01, 1e-3, 1e-4), n: int = 200,
              seed: int = 0) -> float | None:
    """Return the first tested delta whose ball keeps the excess over Phi(x) within eps."""
    x = np.asarray(x, dtype=float).reshape(oracle.d)
    ref = oracle(x)
    rng = np.random.default_rng(seed)
    for delta in deltas:
        dirs = rng.standard_normal((n, oracle.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        X = x + delta * rng.random((n, 1)) ** (1.0 / oracle.d) * dirs
        V = oracle.vertices_many(X)
        if float(np.max(ref.dist_many(V))) <= eps:
            return float(delta)
    return None


# ---------------------------------------------------------------------------
# Castaing-type selections


def dyadic_sequence(n: int, l: int, M: float) -> np.ndarray:
    """First n points of a dense sequence in [-M, M]^l.

    Level 0 is the corner set; level L adds the points of the grid of mesh
    2M/2^L not on a coarser grid, each level in lexicographic order.
    """
    out: list = []
    seen: set = set()
    level = 0
    while len(out) < n:
        steps = 2 ** level
        axis = [-M + 2.0 * M * j / steps for j in range(steps + 1)]
        grids = np.array(np.meshgrid(*([axis] * l), indexing="ij")).reshape(l, -1).T
        for p in grids:
            key = tuple(p)
            if key not in seen:
                seen.add(key)
                out.append(p)
                if len(out) == n:
                    break
        level += 1
    return np.array(out[:n])


@dataclass
class SelectionFamily:
    parent: CuscoOracle
    anchors: np.ndarray  # (N_sel, l) dense-sequence points

    @property
    def size(self) -> int:
        return len(self.anchors)

    def select(self, n: int, X) -> np.ndarray:
        """Value of the n-th selection (1-based) at the rows of X."""
        if not 1 <= n <= self.size:
            raise IndexError(f"selection index {n} outside 1..{self.size}")
        return self.parent.project_many(X, self.anchors[n - 1])

    def values_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(1, self.parent.d)
        return np.vstack([self.select(n, x) for n in range(1, self.size + 1)])


def selections_from_oracle(oracle: CuscoOracle, n_sel: int) -> SelectionFamily:
    if n_sel < 1:
        raise ValueError("N_sel must be at least 1")
    M = max(oracle.bound, 1e-12)
    return SelectionFamily(oracle, dyadic_sequence(n_sel, oracle.l, M))


# ---------------------------------------------------------------------------
# JSON spec parsing with byte offsets


class _PosDict(dict):
    offset: int = 0


class _PosList(list):
    offset: int = 0


def _make_decoder() -> json.JSONDecoder:
    dec = json.JSONDecoder()
    parse_object = json.decoder.JSONObject
    parse_array = json.decoder.JSONArray

    def obj(s_and_end, *args, **kw):
        start = s_and_end[1] - 1
        value, end = parse_object(s_and_end, *args, **kw)
        out = _PosDict(value)
        out.offset = start
        return out, end

    def arr(s_and_end, scan_once, *args, **kw):
        start = s_and_end[1] - 1
        value, end = parse_array(s_and_end, scan_once, *args, **kw)
        out = _PosList(value)
        out.offset = start
        return out, end

    dec.parse_object = obj
    dec.parse_array = arr
    dec.scan_once = json.scanner.py_make_scanner(dec)
    return dec


def loads_spec(text: str):
    """Parse JSON keeping byte offsets of every object/array."""
    try:
        return _make_decoder().decode(text)
    except json.JSONDecodeError as exc:
        raise FieldSpecError(f"invalid JSON: {exc.msg}", len(text[:exc.pos].encode())) from None


def _off(node, text: str | None) -> int | None:
    pos = getattr(node, "offset", None)
    if pos is None or text is None:
        return pos
    return len(text[:pos].encode())


def parse_polynomial(node, d: int, text: str | None = None) -> Polynomial:
    if not isinstance(node, list):
        raise FieldSpecError("polynomial must be a list of terms", _off(node, text))
    terms = []
    for term in node:
        if not isinstance(term, dict) or "exponents" not in term or "coef" not in term:
            raise FieldSpecError("polynomial term needs 'exponents' and 'coef'", _off(term, text))
        exps = term["exponents"]
        coef = term["coef"]
        if not isinstance(exps, list) or len(exps) != d or not all(isinstance(e, int) and e >= 0 for e in exps):
            raise FieldSpecError(f"exponents must be {d} nonnegative integers",
                                 _off(exps if isinstance(exps, list) else term, text))
        if not isinstance(coef, (int, float)) or isinstance(coef, bool):
            raise FieldSpecError("coef must be a number", _off(term, text))
        terms.append((exps, coef))
    return Polynomial.from_terms(d, terms)


def parse_field_spec(node, text: str | None = None) -> PiecewiseField:
    if not isinstance(node, dict):
        raise FieldSpecError("field spec must be a JSON object", _off(node, text))
    for key in ("d", "l", "strata"):
        if key not in node:
            raise FieldSpecError(f"field spec missing '{key}'", _off(node, text))
    d, l = node["d"], node["l"]
    if not (isinstance(d, int) and d >= 1 and isinstance(l, int) and l >= 1):
        raise FieldSpecError("'d' and 'l' must be positive integers", _off(node, text))

    def vec(v):
        if not isinstance(v, list) or len(v) != l:
            raise FieldSpecError(f"value must list {l} polynomials", _off(v, text))
        return tuple(parse_polynomial(p, d, text) for p in v)

    strata = []
    for s in node["strata"]:
        if not isinstance(s, dict) or "guards" not in s or "value" not in s:
            raise FieldSpecError("stratum needs 'guards' and 'value'", _off(s, text))
        strata.append(Stratum(tuple(parse_polynomial(g, d, text) for g in s["guards"]), vec(s["value"])))
    overrides = []
    for o in node.get("null_overrides", []):
        if not isinstance(o, dict) or "value" not in o:
            raise FieldSpecError("null override needs 'value'", _off(o, text))
        if "zero_of" in o:
            poly = parse_polynomial(o["zero_of"], d, text)
            if poly.is_zero:
                raise FieldSpecError("not a null set", _off(o, text))
            ns = NullStratum(zero_of=poly)
        elif "points" in o:
            pts = o["points"]
            if not isinstance(pts, list) or not all(isinstance(p, list) and len(p) == d for p in pts):
                raise FieldSpecError(f"points must be a list of {d}-vectors", _off(pts, text))
            ns = NullStratum(points=tuple(tuple(float(v) for v in p) for p in pts))
        else:
            raise FieldSpecError("null override needs 'zero_of' or 'points'", _off(o, text))
        overrides.append(NullOverride(ns, vec(o["value"])))
    bound = node.get("bound")
    if bound is None:
        bound = 1.0
    return PiecewiseField(d, l, tuple(strata), tuple(overrides), float(bound), name=str(node.get("name", "")))


def field_from_text(text: str):
    """Parse a JSON field spec (piecewise or a ``builtin`` descriptor)."""
    node = loads_spec(text)
    if isinstance(node, dict) and "builtin" in node:
        from . import gallery
        return gallery.from_spec(node)
    return parse_field_spec(node, text)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=None, separators=(",", ":"))
