"""Thin helpers around cvxpy: Hermitian variables, trace pairings and a checked solve."""

from __future__ import annotations

import logging

import warnings

import cvxpy as cp
import numpy as np

from . import _config
from .errors import SolverError

log = logging.getLogger(__name__)

_ACCEPT = {cp.OPTIMAL}
_SOFT = {cp.OPTIMAL_INACCURATE}


def is_real(*mats: np.ndarray, tol: float = 1e-14) -> bool:
    return all(float(np.max(np.abs(np.imag(M)), initial=0.0)) <= tol for M in mats)


def herm_var(D: int, real: bool, name: str | None = None) -> cp.Variable:
    if real:
        return cp.Variable((D, D), symmetric=True, name=name)
    return cp.Variable((D, D), hermitian=True, name=name)


def const(M: np.ndarray, real: bool) -> np.ndarray:
    M = 0.5 * (np.asarray(M) + np.asarray(M).conj().T)
    return np.ascontiguousarray(M.real) if real else M


def pair(A: np.ndarray, X, real: bool):
    """Real-valued ``Tr(A X)`` for a constant Hermitian ``A`` and expression ``X``."""
    if real:
        return cp.sum(cp.multiply(np.asarray(A).real, X))
    # Tr(AX) = sum_ij A_ij X_ji = sum(A * X^T); real part only
    return cp.real(cp.sum(cp.multiply(np.asarray(A).T, X)))


def trace(X, real: bool):
    return cp.trace(X) if real else cp.real(cp.trace(X))


def identity(D: int, real: bool) -> np.ndarray:
    return np.eye(D) if real else np.eye(D, dtype=complex)


def partial_transpose(X, dims, systems):
    for s in systems:
        X = cp.partial_transpose(X, list(dims), s)
    return X


def solve(prob: cp.Problem, what: str) -> float:
    """Solve with Clarabel at tight tolerances; fall back to SCS if Clarabel fails."""
    try:
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="Solution may be inaccurate")
            prob.solve(solver=cp.CLARABEL, **_config.SOLVER_OPTIONS)
    except cp.error.SolverError as exc:
        log.warning("%s: Clarabel failed (%s); retrying with SCS", what, exc)
        try:
            prob.solve(solver=cp.SCS, eps=1e-9, max_iters=200000)
        except cp.error.SolverError as exc2:
            raise SolverError(f"{what}: no solver succeeded", str(exc2)) from exc2
    status = prob.status
    if status in _SOFT:
        # Clarabel stalls near 1e-9 relative gap on larger complex instances;
        # that is well inside every tolerance used downstream
        log.debug("%s: solver reported %s", what, status)
    elif status not in _ACCEPT:
        raise SolverError(f"{what}: solver did not reach optimality", status)
    return float(prob.value)


def dual_matrix(constraint) -> np.ndarray:
    Z = np.asarray(constraint.dual_value)
    return 0.5 * (Z + Z.conj().T)
