"""Sparse multivariate polynomials with vectorized evaluation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Polynomial:
    """sum_k coef_k * prod_i x_i ** exponents_k[i]."""

    d: int
    terms: tuple  # ((exponents tuple, coef), ...)

    @classmethod
    def constant(cls, d: int, c: float) -> "Polynomial":
        return cls(d, (((0,) * d, float(c)),))

    @classmethod
    def coordinate(cls, d: int, i: int, c: float = 1.0) -> "Polynomial":
        e = [0] * d
        e[i] = 1
        return cls(d, ((tuple(e), float(c)),))

    @classmethod
    def from_terms(cls, d: int, terms) -> "Polynomial":
        merged: dict = {}
        for exps, coef in terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != d:
                raise ValueError(f"exponent vector {exps} does not have length {d}")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            merged[exps] = merged.get(exps, 0.0) + float(coef)
        return cls(d, tuple((e, c) for e, c in merged.items()))

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        out = np.zeros(len(X))
        for exps, coef in self.terms:
            term = np.full(len(X), coef)
            for i, e in enumerate(exps):
                if e:
                    term = term * X[:, i] ** e
            out = out + term
        return out

    def grad(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        out = np.zeros_like(X)
        for exps, coef in self.terms:
            for j, ej in enumerate(exps):
                if ej == 0:
                    continue
                term = np.full(len(X), coef * ej)
                for i, e in enumerate(exps):
                    p = e - 1 if i == j else e
                    if p:
                        term = term * X[:, i] ** p
                out[:, j] += term
        return out

    @property
    def is_zero(self) -> bool:
        return all(c == 0.0 for _, c in self.terms)

    @property
    def is_constant(self) -> bool:
        return all(c == 0.0 or not any(e) for e, c in self.terms)

    def abs_coef_sum(self) -> float:
        return float(sum(abs(c) for _, c in self.terms))

    def scaled(self, s: float) -> "Polynomial":
        return Polynomial(self.d, tuple((e, c * s) for e, c in self.terms))

    def canonical(self) -> tuple:
        """Key identifying the zero set: sorted terms scaled to a positive leading coefficient of size 1."""
        items = sorted((e, c) for e, c in self.terms if c != 0.0)
        if not items:
            return ()
        lead = items[0][1]
        top = max(abs(c) for _, c in items)
        s = (1.0 if lead > 0 else -1.0) / top
        return tuple((e, round(c * s, 12)) for e, c in items)

    def to_json(self) -> list:
        return [{"exponents": list(e), "coef": c} for e, c in self.terms]
