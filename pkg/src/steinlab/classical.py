"""Exact Neyman-Pearson testing for i.i.d. classical distributions.

For ``n`` i.i.d. draws from a distribution on ``d`` letters, the likelihood
ratio between any two i.i.d. hypotheses is constant on each type class (the
set of sequences with a given letter count).  Every permutation-invariant
test problem can therefore be solved over the ``C(n+d-1, d-1)`` type classes
instead of the ``d**n`` sequences, which makes ``n = 20`` and beyond cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import gammaln

from ._kernels import np_fill
from .errors import SolverError, ValidationError


@dataclass(frozen=True)
class ClassicalTestResult:
    beta: float
    value_bits: float
    test: np.ndarray  # acceptance probability per type class
    types: np.ndarray  # (T, d) letter counts
    null_weights: np.ndarray | None = None  # optimal dual mixture over null members
    alt_weights: np.ndarray | None = None  # optimal dual mixture over alternatives

    @property
    def per_copy(self) -> float:
        return self.value_bits / int(self.types[0].sum())


def _compositions(n: int, d: int):
    if d == 1:
        yield (n,)
        return
    for k in range(n, -1, -1):
        for rest in _compositions(n - k, d - 1):
            yield (k,) + rest


@lru_cache(maxsize=64)
def type_classes(n: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Letter-count vectors and the log-size of each type class."""
    if n < 1 or d < 1:
        raise ValidationError("type classes need n >= 1 and d >= 1")
    counts = np.array(list(_compositions(n, d)), dtype=np.int64)
    log_mult = gammaln(n + 1) - np.sum(gammaln(counts + 1), axis=1)
    counts.setflags(write=False)
    log_mult.setflags(write=False)
    return counts, log_mult


def _check_dist(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValidationError(f"{p} is not a probability vector")
    return p


def type_masses(p, n: int) -> np.ndarray:
    """Probability of each type class under ``p`` i.i.d."""
    p = _check_dist(p)
    counts, log_mult = type_classes(n, p.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.log(p)
        # 0 * log 0 = 0
        terms = np.where(counts > 0, counts * logp, 0.0)
    return np.exp(log_mult + terms.sum(axis=1))


def _bits(beta: float) -> float:
    return math.inf if beta <= 0 else -math.log2(beta)


def beta_simple(p, q, n: int, eps: float) -> ClassicalTestResult:
    """Minimum type-II error at type-I error ``eps`` between ``p^n`` and ``q^n``."""
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"eps must lie in (0, 1), got {eps}")
    p, q = _check_dist(p), _check_dist(q)
    if p.size != q.size:
        raise ValidationError("distributions must share an alphabet")
    P, Q = type_masses(p, n), type_masses(q, n)
    beta, test = np_fill(P, Q, 1.0 - eps)
    counts, _ = type_classes(n, p.size)
    return ClassicalTestResult(float(beta), _bits(beta), np.asarray(test), counts)


def beta_composite(nulls: Sequence, alternatives: Sequence, n: int, eps: float) -> ClassicalTestResult:
    """``min_T max_j Q_j(T)`` subject to ``P_x(T) >= 1 - eps`` for every null ``x``.

    Solved as a linear program over type-class acceptance probabilities.
    The returned dual weights give the least-favourable mixtures of nulls and
    alternatives.
    """
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"eps must lie in (0, 1), got {eps}")
    if len(nulls) == 0 or len(alternatives) == 0:
        raise ValidationError("need at least one null and one alternative")
    nulls = [_check_dist(p) for p in nulls]
    alternatives = [_check_dist(q) for q in alternatives]
    d = nulls[0].size
    if any(p.size != d for p in nulls + alternatives):
        raise ValidationError("distributions must share an alphabet")
    P = np.stack([type_masses(p, n) for p in nulls])
    Q = np.stack([type_masses(q, n) for q in alternatives])
    T = P.shape[1]
    # variables: test (T), t ; minimise t
    c = np.zeros(T + 1)
    c[-1] = 1.0
    A_alt = np.hstack([Q, -np.ones((Q.shape[0], 1))])  # Q_j . test - t <= 0
    A_null = np.hstack([-P, np.zeros((P.shape[0], 1))])  # -P_x . test <= -(1-eps)
    A_ub = np.vstack([A_alt, A_null])
    b_ub = np.concatenate([np.zeros(Q.shape[0]), -(1 - eps) * np.ones(P.shape[0])])
    bounds = [(0.0, 1.0)] * T + [(0.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise SolverError("composite Neyman-Pearson LP failed", res.message)
    beta = float(res.fun)
    marg = -np.asarray(res.ineqlin.marginals)
    alt_w = np.clip(marg[: Q.shape[0]], 0, None)
    null_w = np.clip(marg[Q.shape[0]:], 0, None)
    counts, _ = type_classes(n, d)
    return ClassicalTestResult(
        beta,
        _bits(beta),
        np.clip(res.x[:T], 0.0, 1.0),
        counts,
        null_w / null_w.sum() if null_w.sum() > 0 else null_w,
        alt_w / alt_w.sum() if alt_w.sum() > 0 else alt_w,
    )


def relative_entropy_bits(p, q) -> float:
    p, q = _check_dist(p), _check_dist(q)
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    return float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))
