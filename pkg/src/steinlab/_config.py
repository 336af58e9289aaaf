"""Runtime configuration: tolerances, dimension cap and kernel backend selection."""

import os

TOL_HERM = 1e-10
TOL_PSD = 1e-9
TOL_TRACE = 1e-9

DEFAULT_DIM_CAP = 4096

# Clarabel settings used for every SDP; tight enough that reported values
# carry ~1e-10 certificates on desk-scale instances.
SOLVER_OPTIONS = {
    "tol_gap_abs": 1e-10,
    "tol_gap_rel": 1e-10,
    "tol_feas": 1e-10,
    "tol_ktratio": 1e-9,
    "max_iter": 400,
}


def dim_cap() -> int:
    """Maximum total Hilbert-space dimension; ``STEINLAB_DIM_CAP`` overrides."""
    raw = os.environ.get("STEINLAB_DIM_CAP")
    if raw is None:
        return DEFAULT_DIM_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"STEINLAB_DIM_CAP must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ValueError(f"STEINLAB_DIM_CAP must be positive, got {cap}")
    return cap


def numba_enabled() -> bool:
    """False when ``STEINLAB_DISABLE_NUMBA`` is set to a truthy value."""
    flag = os.environ.get("STEINLAB_DISABLE_NUMBA", "").strip().lower()
    return flag not in {"1", "true", "yes", "on"}
