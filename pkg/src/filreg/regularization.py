"""Krasovskii / Filippov regularizations and the minimal map.

Exact engines work structurally on piecewise fields (null overrides are
dropped or kept).  Monte Carlo engines shrink sample hulls over balls
B_delta(x); uniform samples miss any fixed null set almost surely.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import (ADJ_TOL, NULL_TOL, CuscoOracle, PiecewiseField, UncoveredPointError,
                     _eval_value, essential_values, essential_vertices_many, eval_field)
from .geometry import ConvexBody, excess, hausdorff, hull


@dataclass(frozen=True)
class Schedule:
    delta0: float = 0.5
    ratio: float = 0.5
    k_steps: int = 12
    n_samples: int = 4096
    tol_conv: float = 1e-3

    def __post_init__(self):
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if self.k_steps < 1 or self.n_samples < 1:
            raise ValueError("k_steps and n_samples must be >= 1")

    def deltas(self, resolution: float = 0.0) -> list:
        """(step, delta) pairs, dropping radii finer than the field resolution."""
        steps = [(k, self.delta0 * self.ratio ** k) for k in range(self.k_steps)]
        kept = [s for s in steps if s[1] >= resolution * (1 - 1e-12)]
        return kept or steps[:1]

    def to_json(self) -> dict:
        return {"delta0": self.delta0, "ratio": self.ratio, "k_steps": self.k_steps,
                "n_samples": self.n_samples, "tol_conv": self.tol_conv}


DEFAULT_SCHEDULE = Schedule()


@dataclass
class HullEstimate:
    body: ConvexBody
    delta_final: float
    samples_per_delta: int
    converged: bool
    seed: int
    history: list = field(default_factory=list)  # [(delta, ConvexBody)] from coarse to fine

    def to_json(self) -> dict:
        return {
            "body": self.body.to_json(),
            "delta_final": self.delta_final,
            "samples_per_delta": self.samples_per_delta,
            "converged": self.converged,
            "seed": self.seed,
            "deltas": [d for d, _ in self.history],
        }

    def is_monotone(self, tol: float = 1e-9) -> bool:
        bodies = [b for _, b in self.history]
        return all(excess(b1, b0) <= tol for b0, b1 in zip(bodies, bodies[1:]))


def ball_samples(x, delta: float, n: int, seed: int, step: int) -> np.ndarray:
    """n uniform points of the open ball B_delta(x); stream keyed by (seed, step)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    d = len(x)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(step)])))
    if d == 1:
        return x + delta * (2.0 * rng.random((n, 1)) - 1.0)
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random((n, 1)) ** (1.0 / d)
    return x + delta * r * g


def _sample_values(f, X) -> np.ndarray:
    try:
        return f.sample_values(X)
    except Exception as exc:
        for p in X:
            try:
                f.sample_values(p.reshape(1, -1))
            except Exception:
                raise ValueError(f"field evaluation failed at sample point {p.tolist()}: {exc}") from exc
        raise


def _shrinking_hull(values_at, x, schedule: Schedule, seed: int, resolution: float) -> HullEstimate:
    steps = schedule.deltas(resolution)
    vals = [values_at(ball_samples(x, delta, schedule.n_samples, seed, k)) for k, delta in steps]
    # nest backwards: the points of a smaller ball also lie in every larger one
    bodies: list = [None] * len(steps)
    carry = None
    for i in range(len(steps) - 1, -1, -1):
        pts = vals[i] if carry is None else np.vstack([vals[i], carry.vertices])
        bodies[i] = hull(pts)
        carry = bodies[i]
    conv = len(bodies) >= 2 and hausdorff(bodies[-2], bodies[-1]) <= schedule.tol_conv
    return HullEstimate(bodies[-1], steps[-1][1], schedule.n_samples, bool(conv), int(seed),
                        [(delta, b) for (_, delta), b in zip(steps, bodies)])


def filippov_mc(f, x, schedule: Schedule = DEFAULT_SCHEDULE, seed: int = 42) -> HullEstimate:
    """Monte Carlo estimate of F_f(x)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    res = float(getattr(f, "resolution", 0.0))
    return _shrinking_hull(lambda X: _sample_values(f, X), x, schedule, seed, res)


def minimal_map(phi: CuscoOracle, x, schedule: Schedule = DEFAULT_SCHEDULE, seed: int = 42) -> HullEstimate:
    """Monte Carlo estimate of m(Phi)(x): hulls of Phi over sampled balls, exceptional points excluded."""
    x = np.asarray(x, dtype=float).reshape(-1)

    def values_at(X):
        keep = ~phi.is_exceptional(X)
        return phi.vertices_many(X[keep])

    return _shrinking_hull(values_at, x, schedule, seed, float(getattr(phi, "resolution", 0.0)))


def minimal_map_oracle(phi: CuscoOracle, schedule: Schedule = DEFAULT_SCHEDULE, seed: int = 42) -> CuscoOracle:
    """The estimator x -> m(Phi)(x) wrapped as an oracle (no exceptional points)."""
    return CuscoOracle(phi.d, phi.l, lambda x: minimal_map(phi, x, schedule, seed).body, phi.bound,
                       name=f"m({phi.name})")


def filippov_oracle(f, schedule: Schedule = DEFAULT_SCHEDULE, seed: int = 42) -> CuscoOracle:
    """x -> F_f(x); exact for piecewise fields, Monte Carlo otherwise."""
    if isinstance(f, PiecewiseField):
        def fn(x):
            return filippov_exact(f, x)

        def vertices_many(X):
            return essential_vertices_many(f, X)
    else:
        def fn(x):
            return filippov_mc(f, x, schedule, seed).body
        vertices_many = None
    try:
        spec = {"builtin": "filippov", "field": f.to_json()}
    except ValueError:
        spec = None
    return CuscoOracle(f.d, f.l, fn, f.bound, vertices_many=vertices_many, name=f"filippov:{f.name}", spec=spec)


# ---------------------------------------------------------------------------
# exact engines


def filippov_exact(f: PiecewiseField, x, tol: float = ADJ_TOL) -> ConvexBody:
    ev = essential_values(f, x, tol)
    if len(ev) == 0:
        raise UncoveredPointError(f"uncovered point {np.asarray(x, dtype=float).reshape(-1).tolist()}")
    return hull(ev)


def krasovskii_exact(f: PiecewiseField, x, tol: float = ADJ_TOL) -> ConvexBody:
    x = np.asarray(x, dtype=float).reshape(1, f.d)
    pts = [essential_values(f, x, tol), eval_field(f, x[0]).reshape(1, -1)]
    for ov in f.null_overrides:
        # a positive-dimensional override surface through x accumulates at x
        if ov.stratum.zero_of is not None and f.d >= 2 and ov.stratum.contains(x, NULL_TOL)[0]:
            pts.append(_eval_value(ov.value, x))
    return hull(np.vstack(pts))


# ---------------------------------------------------------------------------
# representability


@dataclass
class Verdict:
    probe: np.ndarray
    phi_value: ConvexBody
    m_value: ConvexBody
    gap: float
    representable_here: bool
    converged: bool

    @property
    def status(self) -> str:
        if not self.converged:
            return "inconclusive"
        return "pass" if self.representable_here else "fail"


def is_representable(phi: CuscoOracle, probes, schedule: Schedule = DEFAULT_SCHEDULE, tol: float = 0.02,
                     seed: int = 42):
    """Per-probe verdicts and overall flag (True / False / None when inconclusive)."""
    P = np.asarray(probes, dtype=float).reshape(-1, phi.d)
    if len(P) == 0:
        raise ValueError("probes must be nonempty")
    verdicts = []
    for p in P:
        val = phi(p)
        est = minimal_map(phi, p, schedule, seed)
        gap = excess(val, est.body)
        verdicts.append(Verdict(p, val, est.body, float(gap), bool(gap <= tol), est.converged))
    statuses = {v.status for v in verdicts}
    if "fail" in statuses:
        overall = False
    elif "inconclusive" in statuses:
        overall = None
    else:
        overall = True
    return verdicts, overall


def approx_continuity_test(f, x, eps: float, schedule: Schedule = DEFAULT_SCHEDULE, seed: int = 42) -> np.ndarray:
    """Fraction of sampled x' in B_delta(x) with |f(x') - f(x)| >= eps, per delta."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    fx = np.asarray(f(x), dtype=float).reshape(1, -1)
    out = []
    for k, delta in schedule.deltas(float(getattr(f, "resolution", 0.0))):
        X = ball_samples(x, delta, schedule.n_samples, seed, k)
        V = _sample_values(f, X)
        out.append(float(np.mean(np.linalg.norm(V - fx, axis=1) >= eps)))
    return np.array(out)
