"""Field factories shared by the test modules."""
import json

import numpy as np

from filreg.fields import NullOverride, NullStratum, PiecewiseField, Stratum, field_from_text
from filreg.polynomial import Polynomial as P

# criterion id -> (passed, detail); printed at the end of the run
ACCEPTANCE: dict = {}


def record(key: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[key] = (bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")


def const(d, *vals):
    return tuple(P.constant(d, v) for v in vals)


def decoupled_relay() -> PiecewiseField:
    """x1' = 1, x2' = -sign(x2), written as a JSON spec."""
    spec = {
        "d": 2, "l": 2, "bound": 1.5,
        "strata": [
            {"guards": [[{"exponents": [0, 1], "coef": 1}]],
             "value": [[{"exponents": [0, 0], "coef": 1}], [{"exponents": [0, 0], "coef": -1}]]},
            {"guards": [[{"exponents": [0, 1], "coef": -1}]],
             "value": [[{"exponents": [0, 0], "coef": 1}], [{"exponents": [0, 0], "coef": 1}]]},
        ],
        "null_overrides": [{"zero_of": [{"exponents": [0, 1], "coef": 1}],
                            "value": [[{"exponents": [0, 0], "coef": 1}], [{"exponents": [0, 0], "coef": 0}]]}],
    }
    return field_from_text(json.dumps(spec))


def circle_slider() -> PiecewiseField:
    """Outside the unit circle: -x + rot(x); inside: x.  The circle attracts and is traversed at half speed."""
    d = 2
    x1, x2 = P.coordinate(d, 0), P.coordinate(d, 1)
    g = P.from_terms(d, [((2, 0), 1.0), ((0, 2), 1.0), ((0, 0), -1.0)])
    outside = (P.from_terms(d, [((1, 0), -1.0), ((0, 1), -1.0)]), P.from_terms(d, [((1, 0), 1.0), ((0, 1), -1.0)]))
    inside = (x1, x2)
    strata = (Stratum((g,), outside), Stratum((g.scaled(-1.0),), inside))
    return PiecewiseField(d, d, strata, (NullOverride(NullStratum(zero_of=g), const(d, 5.0, 5.0)),), 10.0,
                          name="circle-slider")


def random_piecewise(rng: np.random.Generator) -> PiecewiseField:
    """Two strata split by a random polynomial surface, random affine values, random null overrides."""
    d = int(rng.integers(1, 3))
    l = int(rng.integers(1, 3))
    c = rng.uniform(-0.5, 0.5, d)
    if d == 1 or rng.random() < 0.5:
        n = rng.standard_normal(d)
        terms = [((0,) * d, -float(n @ c))] + [(tuple(int(i == j) for j in range(d)), float(n[i])) for i in range(d)]
    else:
        r = rng.uniform(0.2, 0.8)
        terms = [((0,) * d, float(c @ c - r * r))]
        for i in range(d):
            e2 = tuple(2 if j == i else 0 for j in range(d))
            e1 = tuple(1 if j == i else 0 for j in range(d))
            terms += [(e2, 1.0), (e1, -2.0 * float(c[i]))]
    g = P.from_terms(d, terms)

    def affine():
        return tuple(P.from_terms(d, [((0,) * d, float(rng.uniform(-1, 1)))]
                                  + [(tuple(int(i == j) for j in range(d)), float(rng.uniform(-1, 1)))
                                     for i in range(d)]) for _ in range(l))

    strata = (Stratum((g,), affine()), Stratum((g.scaled(-1.0),), affine()))
    # the surface itself must carry a declared value
    return PiecewiseField(d, l, strata, (NullOverride(NullStratum(zero_of=g), const(d, *rng.uniform(-3, 3, l))),),
                          4.0 * l, name="random")


def surface_point(f: PiecewiseField, rng: np.random.Generator) -> np.ndarray:
    """A point on the first guard's zero set (Newton from a random start)."""
    g = f.strata[0].guards[0]
    x = rng.uniform(-0.5, 0.5, f.d)
    for _ in range(60):
        val = g(x.reshape(1, -1))[0]
        n = g.grad(x.reshape(1, -1))[0]
        if float(n @ n) == 0.0:
            x = x + 0.1
            continue
        x = x - val * n / float(n @ n)
    return x


def segment_oracle(c1: float, c2: float, s: float):
    """Continuous 1-D cusco map x -> [-c1 - s|x|, c2 + sin x]."""
    from filreg.fields import CuscoOracle
    from filreg.geometry import ConvexBody

    def lo(x):
        return -c1 - s * np.abs(x)

    def hi(x):
        return c2 + np.sin(x)

    def fn(x):
        return ConvexBody.segment(lo(x[0]), hi(x[0]))

    def vertices_many(X):
        return np.concatenate([lo(X[:, 0]), hi(X[:, 0])]).reshape(-1, 1)

    return CuscoOracle(1, 1, fn, c1 + c2 + s * 3 + 1, vertices_many=vertices_many, name="segment")


def random_oracle(rng: np.random.Generator):
    """(Phi, exceptional points, probes): a cusco map enlarged at one point, plus probes."""
    from filreg.fields import enlarge
    from filreg.geometry import hull
    from filreg.regularization import filippov_oracle

    if rng.random() < 0.5:
        f = random_piecewise(rng)
        base = filippov_oracle(f)
        probes = [surface_point(f, rng), rng.uniform(-1, 1, f.d)]
    else:
        base = segment_oracle(*rng.uniform(0.1, 1.0, 3))
        probes = [rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1)]
    p = rng.uniform(-1, 1, base.d)
    extra = hull(rng.uniform(-2, 2, (base.l + 1, base.l)))
    phi = enlarge(base, p, extra)
    return phi, p.reshape(1, -1), [p] + probes
