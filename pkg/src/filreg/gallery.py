"""Named built-in fields and oracles."""
from __future__ import annotations

from functools import lru_cache
from math import gcd

import numpy as np

from .fields import (CuscoOracle, NullOverride, NullStratum, PiecewiseField, PointField, Stratum,
                     constant_oracle, dumps, parse_field_spec)
from .geometry import ConvexBody
from .polynomial import Polynomial as P

RATIONAL_M_MAX = 100
RATIONAL_RADIUS = 2.0

NAMES = ("sign1d", "sign-flow", "relay2d", "phi1", "phi2", "phi3", "rational-scale",
         "splitting-indicator", "rotation2d", "radial2d", "abs-grad2d")


def _const(d, *vals):
    return tuple(P.constant(d, v) for v in vals)


def sign1d(scale: float = 1.0, at_zero: float | None = None, name: str = "sign1d") -> PiecewiseField:
    """scale * sign(x); the value at 0 defaults to +scale (right-continuous)."""
    if at_zero is None:
        at_zero = scale
    x = P.coordinate(1, 0)
    strata = (Stratum((x,), _const(1, scale)), Stratum((x.scaled(-1.0),), _const(1, -scale)))
    ov = (NullOverride(NullStratum(zero_of=x), _const(1, at_zero)),)
    return PiecewiseField(1, 1, strata, ov, max(abs(scale), abs(at_zero)), name=name)


def relay2d() -> PiecewiseField:
    x1, x2 = P.coordinate(2, 0), P.coordinate(2, 1)
    strata = []
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            strata.append(Stratum((x1.scaled(s1), x2.scaled(s2)), _const(2, -s1, -s2)))
    axes = P.from_terms(2, [((1, 1), 1.0)])
    ov = (NullOverride(NullStratum(zero_of=axes), _const(2, 0.0, 0.0)),)
    return PiecewiseField(2, 2, tuple(strata), ov, float(np.sqrt(2.0)), name="relay2d")


def rotation2d() -> PiecewiseField:
    """(x2, -x1); the bound is its sup on [-1, 1]^2."""
    value = (P.coordinate(2, 1), P.coordinate(2, 0, -1.0))
    return PiecewiseField(2, 2, (Stratum((), value),), (), float(np.sqrt(2.0)), name="rotation2d")


def abs_grad2d() -> PiecewiseField:
    x1 = P.coordinate(2, 0)
    strata = (Stratum((x1,), _const(2, 1.0, 0.0)), Stratum((x1.scaled(-1.0),), _const(2, -1.0, 0.0)))
    ov = (NullOverride(NullStratum(zero_of=x1), _const(2, 0.0, 0.0)),)
    return PiecewiseField(2, 2, strata, ov, 1.0, name="abs-grad2d")


def _rationals(m_max: int = RATIONAL_M_MAX, radius: float = RATIONAL_RADIUS) -> dict:
    """{m: sorted nonzero p/m in lowest terms with |p/m| <= radius}."""
    out = {}
    for m in range(1, m_max + 1):
        top = int(np.floor(radius * m))
        ps = [p for p in range(-top, top + 1) if p != 0 and gcd(abs(p), m) == 1]
        out[m] = [p / m for p in ps]
    return out


def rational_scale() -> PiecewiseField:
    """f(p/m) = 1/m on nonzero rationals (truncated), 0 elsewhere."""
    strata = (Stratum((), _const(1, 0.0)),)
    ov = tuple(NullOverride(NullStratum(points=tuple((q,) for q in qs)), _const(1, 1.0 / m))
               for m, qs in _rationals().items())
    return PiecewiseField(1, 1, strata, ov, 1.0, name="rational-scale")


def _radial(X):
    r = np.linalg.norm(X, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = X / r
    out[r[:, 0] == 0.0] = 0.0
    return out


def radial2d() -> PointField:
    return PointField(2, 2, _radial, 1.0, name="radial2d", spec={"builtin": "radial2d"})


def default_partition(n_cls: int = 8, k_max: int = 32, depth: int = 12, r: float = 1.0):
    return _cached_partition(int(n_cls), int(k_max), int(depth), float(r))


@lru_cache(maxsize=8)
def _cached_partition(n_cls, k_max, depth, r):
    from .partition import build_splitting
    return build_splitting(n_cls, k_max, depth, r)


def splitting_indicator(cls: int = 2, complement: bool = False, partition=None, **params) -> PointField:
    """1_{A_cls} of a splitting partition (default build unless one is given)."""
    from .partition import indicator_field
    p = partition if partition is not None else default_partition(**params)
    name = "splitting-indicator" + ("-complement" if complement else "")
    f = indicator_field(p, cls, complement, name=name)
    if partition is None:
        # the default build is deterministic, so parameters are enough to reload it
        f.spec.pop("partition")
        f.spec.update({"n_cls": p.n_cls, "k_max": p.k_max, "depth": p.depth, "r": p.r})
    return f


# ---------------------------------------------------------------------------
# oracles


def _point_oracle(special: ConvexBody, where: np.ndarray, name: str) -> CuscoOracle:
    """{0} everywhere except at the points ``where`` (value ``special``)."""
    zero = ConvexBody.point([0.0])

    def fn(x):
        return special if np.any(np.abs(where - x[0]) <= 1e-12) else zero

    def vertices_many(X):
        hit = np.any(np.abs(X[:, :1] - where[None, :]) <= 1e-12, axis=1)
        if not np.any(hit):
            return np.zeros((len(X), 1))
        return np.vstack([fn(x).vertices for x in X])

    def project_many(X, target):
        return np.vstack([fn(x).nearest(target) for x in X])

    bound = float(np.max(np.abs(special.vertices)))
    return CuscoOracle(1, 1, fn, bound, exceptional_points=where.reshape(-1, 1), vertices_many=vertices_many,
                       project_many=project_many, name=name, spec={"builtin": name})


def phi1() -> CuscoOracle:
    return _point_oracle(ConvexBody.segment(0.0, 1.0), np.array([0.0]), "phi1")


def phi2() -> CuscoOracle:
    return _point_oracle(ConvexBody.segment(-1.0, 1.0), np.array([0.0]), "phi2")


def phi3() -> CuscoOracle:
    """[-1/m, 1/m] at nonzero p/m (m <= 100, |x| <= 2), {0} elsewhere."""
    rat = _rationals()
    qs = np.array(sorted(q for v in rat.values() for q in v))
    inv = {q: 1.0 / m for m, v in rat.items() for q in v}
    zero = ConvexBody.point([0.0])

    def lookup(x0):
        i = int(np.searchsorted(qs, x0))
        for j in (i - 1, i):
            if 0 <= j < len(qs) and abs(qs[j] - x0) <= 1e-12:
                return inv[qs[j]]
        return None

    def fn(x):
        w = lookup(float(x[0]))
        return zero if w is None else ConvexBody.segment(-w, w)

    def vertices_many(X):
        i = np.clip(np.searchsorted(qs, X[:, 0]), 1, len(qs) - 1)
        near = np.minimum(np.abs(qs[i] - X[:, 0]), np.abs(qs[i - 1] - X[:, 0]))
        if not np.any(near <= 1e-12):
            return np.zeros((len(X), 1))
        return np.vstack([fn(x).vertices for x in X])

    def project_many(X, target):
        return np.vstack([fn(x).nearest(target) for x in X])

    return CuscoOracle(1, 1, fn, 1.0, exceptional_points=qs.reshape(-1, 1), vertices_many=vertices_many,
                       project_many=project_many, name="phi3", spec={"builtin": "phi3"})


# ---------------------------------------------------------------------------
# registry


_BUILDERS = {
    "sign1d": sign1d,
    "sign-flow": lambda: sign1d(scale=-1.0, at_zero=0.0, name="sign-flow"),
    "relay2d": relay2d,
    "phi1": phi1,
    "phi2": phi2,
    "phi3": phi3,
    "rational-scale": rational_scale,
    "splitting-indicator": splitting_indicator,
    "rotation2d": rotation2d,
    "radial2d": radial2d,
    "abs-grad2d": abs_grad2d,
}


def names() -> list:
    return list(NAMES)


def get(name: str):
    """Gallery item by name; ``filippov:<name>`` wraps a field as the oracle x -> F_f(x)."""
    if name.startswith("filippov:"):
        from .regularization import filippov_oracle
        f = get(name.split(":", 1)[1])
        if isinstance(f, CuscoOracle):
            raise ValueError(f"{name!r}: filippov: needs a field, got an oracle")
        return filippov_oracle(f)
    if name not in _BUILDERS:
        raise KeyError(f"unknown gallery name {name!r}; known names: {', '.join(NAMES)}")
    return _BUILDERS[name]()


def from_spec(node: dict):
    """Rebuild a ``builtin`` descriptor produced by ``to_json``."""
    kind = node["builtin"]
    if kind == "splitting-indicator":
        from .partition import SplittingPartition
        cls, comp = int(node.get("class", 2)), bool(node.get("complement", False))
        if "partition" in node:
            return splitting_indicator(cls, comp, SplittingPartition.from_json(node["partition"]))
        return splitting_indicator(cls, comp, n_cls=int(node.get("n_cls", 8)), k_max=int(node.get("k_max", 32)),
                                   depth=int(node.get("depth", 12)), r=float(node.get("r", 1.0)))
    if kind == "constant":
        return constant_oracle(ConvexBody.from_json(node["body"]), int(node.get("d", 1)))
    if kind == "filippov":
        from .regularization import filippov_oracle
        inner = node["field"]
        f = from_spec(inner) if "builtin" in inner else parse_field_spec(inner)
        return filippov_oracle(f)
    if kind in _BUILDERS:
        return _BUILDERS[kind]()
    raise KeyError(f"unknown builtin {kind!r}; known names: {', '.join(NAMES)}")


def dump(name: str) -> str:
    return dumps(get(name).to_json())
