"""Event-driven integration of x' in F_f(x) for piecewise fields.

Inside a stratum the stratum's polynomial is integrated with classical RK4.
Guard crossings are located by bisection on the step fraction.  On a
codimension-1 surface {g = 0} the side limits f+ (g > 0) and f- (g < 0)
decide between crossing, sliding along the surface and leaving it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import PiecewiseField, _eval_value
from .regularization import filippov_exact

GRAZE_TOL = 1e-14
MAX_BISECT = 200


class CodimensionError(ValueError):
    """Raised at intersections of two discontinuity surfaces."""

    def __init__(self, message: str, trajectory: "Trajectory | None" = None):
        super().__init__(message)
        self.trajectory = trajectory


class StiffEventError(RuntimeError):
    def __init__(self, message: str, trajectory: "Trajectory | None" = None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    modes: list
    events: list = field(default_factory=list)  # (t, kind, surface id)
    stats: dict = field(default_factory=dict)

    def switch_times(self, kind: str) -> list:
        return [t for t, k, _ in self.events if k == kind]

    def to_csv(self, header: str = "") -> str:
        d = self.states.shape[1]
        lines = [header.rstrip("\n")] if header else []
        lines.append(",".join(["t"] + [f"x{i + 1}" for i in range(d)] + ["mode"]))
        for t, x, m in zip(self.times, self.states, self.modes):
            lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in x] + [m]))
        return "\n".join(lines) + "\n"


def sliding_field(f_plus, f_minus, grad_g):
    """Tangential convex combination v = lam f+ + (1 - lam) f- on an attracting surface."""
    fp = np.asarray(f_plus, dtype=float).reshape(-1)
    fm = np.asarray(f_minus, dtype=float).reshape(-1)
    n = np.asarray(grad_g, dtype=float).reshape(-1)
    ap, am = float(n @ fp), float(n @ fm)
    den = am - ap
    if abs(den) < GRAZE_TOL:
        raise ValueError("grazing contact")
    lam = am / den
    return lam * fp + (1.0 - lam) * fm, lam


# ---------------------------------------------------------------------------
# geometry of the strata


def _rel_sign(guard, g) -> float:
    a = dict(guard.terms)
    for e, c in sorted(g.terms):
        if c != 0.0 and a.get(e, 0.0) != 0.0:
            return float(np.sign(a[e] * c))
    return 0.0


class _Geometry:
    def __init__(self, f: PiecewiseField):
        if f.d != f.l:
            raise ValueError("integration needs d = l")
        self.f = f
        self.surfaces = f.surfaces()
        keys = [g.canonical() for g in self.surfaces]
        # side[k][s] = +1 / -1 if stratum k has surface s as a guard (with that sign)
        self.side = []
        for st in f.strata:
            row = {}
            for guard in st.guards:
                key = guard.canonical()
                if key in keys:
                    s = keys.index(key)
                    row[s] = _rel_sign(guard, self.surfaces[s])
            self.side.append(row)

    def value(self, k: int, x: np.ndarray) -> np.ndarray:
        return _eval_value(self.f.strata[k].value, x.reshape(1, -1))[0]

    def g(self, s: int, x: np.ndarray) -> float:
        return float(self.surfaces[s](x.reshape(1, -1))[0])

    def grad(self, s: int, x: np.ndarray) -> np.ndarray:
        return self.surfaces[s].grad(x.reshape(1, -1))[0]

    def guard_values(self, k: int, x: np.ndarray) -> np.ndarray:
        gs = self.f.strata[k].guards
        return np.array([float(g(x.reshape(1, -1))[0]) for g in gs]) if gs else np.empty(0)

    def guard_surface(self, k: int, j: int) -> int:
        key = self.f.strata[k].guards[j].canonical()
        return [g.canonical() for g in self.surfaces].index(key)

    def sides(self, s: int, x: np.ndarray, tol: float):
        """Strata adjacent to x on the + and - side of surface s."""
        adj = self.f.adjacency(x.reshape(1, -1), tol)[0]
        plus = [k for k in range(len(self.f.strata)) if adj[k] and self.side[k].get(s) == 1.0]
        minus = [k for k in range(len(self.f.strata)) if adj[k] and self.side[k].get(s) == -1.0]
        if len(plus) != 1 or len(minus) != 1:
            raise ValueError(f"surface {s} does not separate exactly two strata at {x.tolist()}")
        return plus[0], minus[0]


def classify_point(f: PiecewiseField, x, tol: float = 1e-9, _geo: _Geometry | None = None):
    """('regular', stratum) or ('surface', surface id)."""
    geo = _geo or _Geometry(f)
    x = np.asarray(x, dtype=float).reshape(-1)
    near = [s for s in range(len(geo.surfaces)) if abs(geo.g(s, x)) <= tol]
    if len(near) >= 2:
        raise CodimensionError(f"codimension ≥ 2 point at {x.tolist()} (surfaces {near})")
    if near:
        return ("surface", near[0])
    k = int(f.stratum_index(x.reshape(1, -1))[0])
    if k < 0:
        raise ValueError(f"uncovered point {x.tolist()}")
    return ("regular", k)


# ---------------------------------------------------------------------------
# integrator


def _rk4(fun, x, h):
    k1 = fun(x)
    k2 = fun(x + 0.5 * h * k1)
    k3 = fun(x + 0.5 * h * k2)
    k4 = fun(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _bisect(step, crossing, tol_of):
    """Smallest located fraction theta in (0, 1] where crossing(step(theta)) reaches 0."""
    lo, hi = 0.0, 1.0
    y_hi = step(1.0)
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        y = step(mid)
        c = crossing(y)
        if abs(c) <= tol_of(y):
            return mid, y
        if c > 0:
            lo = mid
        else:
            hi, y_hi = mid, y
    return hi, y_hi


class _Integrator:
    def __init__(self, f, x0, T, h_max, tol_event):
        self.geo = _Geometry(f)
        self.f = f
        self.T = float(T)
        self.h = float(h_max) if h_max is not None else 1e-3 * self.T
        self.tol_event = tol_event
        self.t = 0.0
        self.x = np.asarray(x0, dtype=float).reshape(-1).copy()
        self.times = [0.0]
        self.states = [self.x.copy()]
        self.modes = [""]
        self.events = []
        self.stats = {"steps": 0, "events": 0, "bisections": 0}
        self.stalls = 0

    def tol_abs(self, y) -> float:
        return self.tol_event * (1.0 + float(np.linalg.norm(y)))

    def trajectory(self) -> Trajectory:
        return Trajectory(np.array(self.times), np.array(self.states), list(self.modes), list(self.events),
                          dict(self.stats))

    def record(self, t, x, mode):
        if t > self.times[-1]:
            self.times.append(t)
            self.states.append(x.copy())
            self.modes.append(mode)
            self.stalls = 0
        else:
            self.modes[-1] = mode
            self.stalls += 1
            if self.stalls > 50:
                raise StiffEventError(f"stiff event at t={t!r}: no progress", self.trajectory())
        self.t, self.x = t, x.copy()

    def event(self, kind, s):
        self.events.append((self.t, kind, s))
        self.stats["events"] += 1
        self.modes[-1] = f"event:{kind}"

    # -- surface logic ---------------------------------------------------
    def on_surface(self, s, arriving_from=None):
        """Decide the next mode at a point of surface s."""
        geo, x = self.geo, self.x
        tol = 4.0 * self.tol_abs(x)
        for s2 in range(len(geo.surfaces)):
            if s2 != s and abs(geo.g(s2, x)) <= tol:
                raise CodimensionError(f"codimension ≥ 2 point at t={self.t!r}, x={x.tolist()}", self.trajectory())
        kp, km = geo.sides(s, x, tol)
        n = geo.grad(s, x)
        ap, am = float(n @ geo.value(kp, x)), float(n @ geo.value(km, x))
        if ap < -GRAZE_TOL and am > GRAZE_TOL:
            return ("sliding", s, kp, km), "entry"
        if ap >= -GRAZE_TOL and am >= -GRAZE_TOL and max(ap, am) > GRAZE_TOL:
            return ("regular", kp), "crossing"
        if ap <= GRAZE_TOL and am <= GRAZE_TOL and min(ap, am) < -GRAZE_TOL:
            return ("regular", km), "crossing"
        if ap > GRAZE_TOL and am < -GRAZE_TOL:
            # repelling: both sides leave; keep the side of approach, + side at the start
            k = km if arriving_from == -1 else kp
            return ("regular", k), "exit"
        raise ValueError(f"grazing contact at t={self.t!r}, x={x.tolist()}")

    # -- steps -----------------------------------------------------------
    def regular_step(self, k, leaving):
        geo = self.geo
        fun = lambda y: geo.value(k, y)  # noqa: E731
        h = min(self.h, self.T - self.t)
        x0 = self.x
        y = _rk4(fun, x0, h)
        guards = self.f.strata[k].guards
        if not guards:
            return self.record(self.t + h, y, f"regular:{k}")
        start = geo.guard_values(k, x0)
        shift = np.where(np.abs(start) <= 4.0 * self.tol_abs(x0), 2.0 * self.tol_abs(x0), 0.0)
        if leaving is not None:
            for j in range(len(guards)):
                if geo.guard_surface(k, j) == leaving:
                    shift[j] = 2.0 * self.tol_abs(x0)
        crossing = lambda z: float(np.min(geo.guard_values(k, z) + shift))  # noqa: E731
        if crossing(y) > 0:
            return self.record(self.t + h, y, f"regular:{k}")
        self.stats["bisections"] += 1
        theta, z = _bisect(lambda th: _rk4(fun, x0, th * h), crossing, self.tol_abs)
        j = int(np.argmin(np.abs(geo.guard_values(k, z))))
        s = geo.guard_surface(k, j)
        self.record(self.t + theta * h, z, f"regular:{k}")
        return s, -geo.side[k][s]

    def project(self, s, y):
        geo = self.geo
        for _ in range(8):
            gv = geo.g(s, y)
            n = geo.grad(s, y)
            nn = float(n @ n)
            if nn == 0.0 or abs(gv) <= 1e-15 * (1.0 + np.linalg.norm(y)):
                break
            y = y - gv * n / nn
        return y

    def attract(self, s, kp, km, y):
        n = self.geo.grad(s, y)
        return min(-float(n @ self.geo.value(kp, y)), float(n @ self.geo.value(km, y)))

    def sliding_step(self, s, kp, km):
        geo = self.geo

        def fun(y):
            n = geo.grad(s, y)
            fp, fm = geo.value(kp, y), geo.value(km, y)
            ap, am = float(n @ fp), float(n @ fm)
            den = am - ap
            if abs(den) < GRAZE_TOL:
                return 0.5 * (fp + fm)
            lam = am / den
            return lam * fp + (1.0 - lam) * fm

        h = min(self.h, self.T - self.t)
        x0 = self.x
        advance = lambda th: self.project(s, _rk4(fun, x0, th * h))  # noqa: E731
        y = advance(1.0)
        others = [s2 for s2 in range(len(geo.surfaces)) if s2 != s]
        sign0 = {s2: np.sign(geo.g(s2, x0)) for s2 in others}
        for s2 in others:
            if np.sign(geo.g(s2, y)) != sign0[s2] or abs(geo.g(s2, y)) <= 4.0 * self.tol_abs(y):
                # locate the intersection and stop there
                def cross2(z, s2=s2):
                    return sign0[s2] * geo.g(s2, z)
                th, z = _bisect(advance, cross2, self.tol_abs)
                self.record(self.t + th * h, z, f"sliding:{s}")
                raise CodimensionError(f"codimension ≥ 2 point at t={self.t!r}, x={z.tolist()}",
                                       self.trajectory())
        if self.attract(s, kp, km, y) > GRAZE_TOL:
            return self.record(self.t + h, y, f"sliding:{s}")
        self.stats["bisections"] += 1
        th, z = _bisect(advance, lambda z: self.attract(s, kp, km, z), self.tol_abs)
        self.record(self.t + th * h, z, f"sliding:{s}")
        n = geo.grad(s, z)
        ap = float(n @ geo.value(kp, z))
        return ("regular", kp if ap >= -self.tol_abs(z) else km)

    def run(self) -> Trajectory:
        geo = self.geo
        kind, idx = classify_point(self.f, self.x, 4.0 * self.tol_abs(self.x), geo)
        leaving = None
        if kind == "surface":
            mode, tag = self.on_surface(idx)
            self.modes[0] = f"event:{tag}" if tag == "exit" else (
                f"sliding:{idx}" if mode[0] == "sliding" else f"regular:{mode[1]}")
            if tag == "exit":
                self.events.append((0.0, "exit", idx))
            leaving = idx
        else:
            mode = ("regular", idx)
            self.modes[0] = f"regular:{idx}"
        while self.t < self.T:
            self.stats["steps"] += 1
            if mode[0] == "regular":
                out = self.regular_step(mode[1], leaving)
                leaving = None
                if out is not None:
                    s, side = out
                    mode, tag = self.on_surface(s, arriving_from=side)
                    self.event(tag, s)
                    leaving = s
            else:
                _, s, kp, km = mode
                out = self.sliding_step(s, kp, km)
                if out is not None:
                    mode = out
                    self.event("exit", s)
                    leaving = s
            if self.T - self.t <= 1e-15 * max(1.0, self.T):
                break
        return self.trajectory()


def integrate(f: PiecewiseField, x0, T: float, h_max: float | None = None, tol_event: float = 1e-10) -> Trajectory:
    """Filippov solution of x' in F_f(x), x(0) = x0, on [0, T]."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if len(x0) != f.d:
        raise ValueError(f"x0 has dimension {len(x0)}, field has d={f.d}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    if not T > 0:
        raise ValueError("T must be positive")
    return _Integrator(f, x0, T, h_max, tol_event).run()


@dataclass
class ResidualReport:
    max_residual: float
    index: int
    tol: float
    passed: bool


def residual_check(tr: Trajectory, f: PiecewiseField, engine=filippov_exact, tol: float = 1e-2) -> ResidualReport:
    """Distance of central-difference velocities to the Filippov hull at interior grid points."""
    if len(tr.times) < 3:
        raise ValueError("trajectory needs at least 3 points")
    t, X = tr.times, tr.states
    V = (X[2:] - X[:-2]) / (t[2:] - t[:-2])[:, None]
    res = np.array([engine(f, X[i + 1]).dist(V[i]) for i in range(len(V))])
    i = int(np.argmax(res))
    return ResidualReport(float(res[i]), i + 1, float(tol), bool(res[i] <= tol))
