"""Weak curl test, potential reconstruction and Clarke subdifferentials.

A bounded field f on a box is an a.e. gradient of a Lipschitz function iff
its distributional curl vanishes: int f_j d_i psi = int f_i d_j psi for all
test functions psi.  The test family here is a grid of tensor bumps.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .fields import PiecewiseField
from .regularization import DEFAULT_SCHEDULE, Schedule, filippov_exact, filippov_mc

DEFAULT_N = {2: 256, 3: 64}


class NotGradientError(ValueError):
    pass


def _box(box, d: int) -> np.ndarray:
    b = np.asarray(box, dtype=float)
    if b.shape == (2,):
        b = np.tile(b, (d, 1))
    if b.shape != (d, 2) or np.any(b[:, 1] <= b[:, 0]):
        raise ValueError(f"box must be {d} intervals (lo < hi)")
    return b


def _bumps_1d(t: np.ndarray, lo: float, hi: float, m: int):
    """m bumps on overlapping sub-intervals (50% overlap): values and derivatives, shape (m, len(t))."""
    w = 2.0 * (hi - lo) / (m + 1)
    half = 0.5 * w
    centers = lo + half + 0.5 * w * np.arange(m)
    s = (t[None, :] - centers[:, None]) / half
    inside = np.abs(s) < 1.0
    q = np.where(inside, 1.0 - s * s, 1.0)
    val = np.where(inside, np.exp(-1.0 / q), 0.0)
    der = np.where(inside, val * (-2.0 * s / (q * q)) / half, 0.0)
    return val, der


@dataclass
class CurlReport:
    residuals: dict  # {(i, j): value} for i < j, 1-based
    n: int
    m: int
    box: list

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    def matrix(self, d: int) -> np.ndarray:
        R = np.zeros((d, d))
        for (i, j), v in self.residuals.items():
            R[i - 1, j - 1] = R[j - 1, i - 1] = v
        return R

    def to_json(self) -> dict:
        return {
            "residuals": [{"i": i, "j": j, "value": v} for (i, j), v in sorted(self.residuals.items())],
            "max_residual": self.max_residual,
            "grid_n": self.n,
            "family_m": self.m,
            "box": self.box,
        }


def _grid_values(f, b: np.ndarray, n: int):
    d = len(b)
    axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n for lo, hi in b]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([g.reshape(-1) for g in mesh], axis=1)
    F = f.sample_values(X).reshape((n,) * d + (f.l,))
    return axes, F


def curl_residual(f, box, n: int | None = None, m: int = 4) -> CurlReport:
    d = f.d
    if d == 1:
        raise ValueError("Poincaré condition vacuous in 1-D")
    if f.l != d:
        raise ValueError("curl test needs l = d")
    b = _box(box, d)
    n = int(n or DEFAULT_N.get(d, 32))
    axes, F = _grid_values(f, b, n)
    cell = float(np.prod((b[:, 1] - b[:, 0]) / n))
    vals, ders = zip(*[_bumps_1d(t, lo, hi, m) for t, (lo, hi) in zip(axes, b)])
    res = {(i + 1, j + 1): 0.0 for i in range(d) for j in range(i + 1, d)}
    for idx in itertools.product(range(m), repeat=d):
        factors = [vals[k][idx[k]] for k in range(d)]
        psi = _outer(factors)
        norm = float(np.sum(np.abs(psi))) * cell
        if norm == 0.0:
            continue
        dpsi = []
        for i in range(d):
            fi = list(factors)
            fi[i] = ders[i][idx[i]]
            dpsi.append(_outer(fi))
        for i in range(d):
            for j in range(i + 1, d):
                a = float(np.sum(F[..., j] * dpsi[i])) * cell
                c = float(np.sum(F[..., i] * dpsi[j])) * cell
                r = abs(a - c) / norm
                if r > res[(i + 1, j + 1)]:
                    res[(i + 1, j + 1)] = r
    return CurlReport(res, n, m, b.tolist())


def _outer(factors) -> np.ndarray:
    out = factors[0]
    for fac in factors[1:]:
        out = np.multiply.outer(out, fac)
    return out


def poincare_check(f, box, n: int | None = None, m: int = 4, tol: float = 5e-3):
    rep = curl_residual(f, box, n, m)
    return rep.max_residual <= tol, rep


@dataclass
class PotentialGrid:
    box: list
    h: float
    axes: list
    values: np.ndarray
    residual: float
    lipschitz: float

    def to_csv(self, header: str = "") -> str:
        d = len(self.axes)
        lines = [header.rstrip("\n")] if header else []
        lines.append(",".join([f"x{i + 1}" for i in range(d)] + ["phi"]))
        mesh = np.meshgrid(*self.axes, indexing="ij")
        for k in range(self.values.size):
            ix = np.unravel_index(k, self.values.shape)
            lines.append(",".join([repr(float(g[ix])) for g in mesh] + [repr(float(self.values[ix]))]))
        return "\n".join(lines) + "\n"


def reconstruct_potential(f, box, h: float = 1.0 / 64, tol: float = 5e-3) -> PotentialGrid:
    """phi with phi(lower corner) = 0 from trapezoid integrals along axis-monotone staircases."""
    d = f.d
    if f.l != d:
        raise ValueError("potential reconstruction needs l = d")
    b = _box(box, d)
    counts = [int(round((hi - lo) / h)) + 1 for lo, hi in b]
    axes = [np.linspace(lo, hi, c) for (lo, hi), c in zip(b, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([g.reshape(-1) for g in mesh], axis=1)
    F = f.sample_values(X).reshape(tuple(counts) + (d,))
    phis = []
    for order in itertools.permutations(range(d)):
        phi = np.zeros(counts)
        for k, a in enumerate(order):
            comp = F[..., a]
            # later axes of the staircase sit at the lower corner
            sl = tuple(slice(0, 1) if ax in order[k + 1:] else slice(None) for ax in range(d))
            part = cumulative_trapezoid(comp[sl], axes[a], axis=a, initial=0.0)
            phi = phi + part
        phis.append(phi)
    stack = np.stack(phis)
    residual = float(np.max(stack.max(axis=0) - stack.min(axis=0)))
    if residual > 10.0 * tol:
        raise NotGradientError(f"field is not closed at this resolution (path residual {residual:.3g})")
    values = stack.mean(axis=0)
    grads = np.gradient(values, *axes) if d > 1 else [np.gradient(values, axes[0])]
    lip = float(np.max(np.sqrt(sum(g * g for g in grads))))
    return PotentialGrid(b.tolist(), float(h), axes, values, residual, lip)


def clarke_subdiff(f, x, box=None, n: int | None = None, m: int = 4, tol: float = 5e-3,
                   schedule: Schedule = DEFAULT_SCHEDULE, seed: int = 42, check: bool = True):
    """Clarke subdifferential of the potential of f at x, as F_f(x)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if check and f.d >= 2:
        bx = box if box is not None else np.stack([x - 1.0, x + 1.0], axis=1)
        ok, rep = poincare_check(f, bx, n, m, tol)
        if not ok:
            raise NotGradientError(f"not a subdifferential candidate (curl residual {rep.max_residual:.3g})")
    if isinstance(f, PiecewiseField):
        return filippov_exact(f, x)
    return filippov_mc(f, x, schedule, seed).body
