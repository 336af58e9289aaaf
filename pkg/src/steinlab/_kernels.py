"""Hot numeric kernels.

Each kernel has a pure-numpy implementation and a numba ``@njit`` twin.  The
public names at module level point to the numba version unless
``STEINLAB_DISABLE_NUMBA`` is set (or numba is unavailable), in which case the
numpy path is used.  Both paths are always importable through ``NUMPY`` and
``NUMBA`` so tests and benchmarks can compare them directly.
"""

import logging

import numpy as np

from ._config import numba_enabled

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# numpy reference implementations


def _perm_average_np(X, maps):
    out = np.zeros_like(X)
    for m in maps:
        out += X[np.ix_(m, m)]
    return out / len(maps)


def _np_fill_np(P, Q, need):
    """Neyman-Pearson fill: accept outcomes by decreasing P/Q until P-mass >= need.

    Returns (beta, test) with test[i] in [0, 1]; at most one fractional entry.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.where(Q > 0, P / np.where(Q > 0, Q, 1.0), np.inf)
    # P == 0 outcomes never help; push them to the end
    ratio = np.where(P > 0, ratio, -1.0)
    order = np.argsort(-ratio, kind="stable")
    test = np.zeros(P.shape[0])
    beta = 0.0
    remaining = need
    for i in order:
        if remaining <= 0.0:
            break
        if P[i] <= 0.0:
            break
        if P[i] >= remaining:
            frac = remaining / P[i]
            test[i] = frac
            beta += frac * Q[i]
            remaining = 0.0
            break
        test[i] = 1.0
        beta += Q[i]
        remaining -= P[i]
    return beta, test


def _log_divided_differences_np(lam):
    li = lam[:, None]
    lj = lam[None, :]
    diff = li - lj
    x = diff / lj
    small = np.abs(x) < 1e-8
    with np.errstate(divide="ignore", invalid="ignore"):
        gen = np.log1p(np.where(small, 0.0, x)) / np.where(small, 1.0, diff)
    near = (1.0 - x / 2.0) / lj
    return np.where(small, near, gen)


NUMPY = {
    "perm_average": _perm_average_np,
    "np_fill": _np_fill_np,
    "log_divided_differences": _log_divided_differences_np,
}


# ---------------------------------------------------------------------------
# numba twins

NUMBA = None
try:
    from numba import njit

    @njit(cache=True)
    def _perm_average_nb(X, maps):
        k, dim = maps.shape
        out = np.zeros((dim, dim), dtype=X.dtype)
        for p in range(k):
            m = maps[p]
            for i in range(dim):
                mi = m[i]
                for j in range(dim):
                    out[i, j] += X[mi, m[j]]
        return out / k

    @njit(cache=True)
    def _np_fill_nb(P, Q, need):
        size = P.shape[0]
        ratio = np.empty(size)
        for i in range(size):
            if P[i] <= 0.0:
                ratio[i] = -1.0
            elif Q[i] > 0.0:
                ratio[i] = P[i] / Q[i]
            else:
                ratio[i] = np.inf
        order = np.argsort(-ratio, kind="mergesort")
        test = np.zeros(size)
        beta = 0.0
        remaining = need
        for idx in range(size):
            i = order[idx]
            if remaining <= 0.0 or P[i] <= 0.0:
                break
            if P[i] >= remaining:
                frac = remaining / P[i]
                test[i] = frac
                beta += frac * Q[i]
                remaining = 0.0
                break
            test[i] = 1.0
            beta += Q[i]
            remaining -= P[i]
        return beta, test

    @njit(cache=True)
    def _log_divided_differences_nb(lam):
        d = lam.shape[0]
        out = np.empty((d, d))
        for i in range(d):
            for j in range(d):
                diff = lam[i] - lam[j]
                x = diff / lam[j]
                if abs(x) < 1e-8:
                    out[i, j] = (1.0 - x / 2.0) / lam[j]
                else:
                    out[i, j] = np.log1p(x) / diff
        return out

    NUMBA = {
        "perm_average": _perm_average_nb,
        "np_fill": _np_fill_nb,
        "log_divided_differences": _log_divided_differences_nb,
    }
except ImportError:  # pragma: no cover - numba is a declared dependency
    log.info("numba not importable; using numpy kernels")


def backend_name() -> str:
    return "numba" if (NUMBA is not None and numba_enabled()) else "numpy"


_ACTIVE = NUMBA if backend_name() == "numba" else NUMPY


def perm_average(X: np.ndarray, maps: np.ndarray) -> np.ndarray:
    """Average ``X[m][:, m]`` over the rows ``m`` of the integer array ``maps``."""
    maps = np.ascontiguousarray(maps, dtype=np.int64)
    return _ACTIVE["perm_average"](np.ascontiguousarray(X), maps)


def np_fill(P: np.ndarray, Q: np.ndarray, need: float):
    """Optimal randomized likelihood-ratio test reaching null acceptance ``need``."""
    return _ACTIVE["np_fill"](
        np.ascontiguousarray(P, dtype=np.float64),
        np.ascontiguousarray(Q, dtype=np.float64),
        float(need),
    )


def log_divided_differences(lam: np.ndarray) -> np.ndarray:
    """First divided differences of the natural log on positive eigenvalues ``lam``."""
    return _ACTIVE["log_divided_differences"](np.ascontiguousarray(lam, dtype=np.float64))
