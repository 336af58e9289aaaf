"""Composite quantum hypothesis testing, free-set monotones, blurring and universal distillation."""

from . import blurring, classical, composite, distill, freesets, oneshot, qmat
from ._kernels import backend_name
from .errors import (
    ConvergenceError,
    DimensionCapError,
    InvariantViolation,
    ModelError,
    NotInHullError,
    ShapeMismatchError,
    SolverError,
    SteinlabError,
    ValidationError,
)
from .qmat import DensityOperator, SystemShape, TestEffect

__version__ = "0.1.0"

__all__ = [
    "blurring", "classical", "composite", "distill", "freesets", "oneshot", "qmat",
    "backend_name", "DensityOperator", "SystemShape", "TestEffect",
    "ConvergenceError", "DimensionCapError", "InvariantViolation", "ModelError", "NotInHullError",
    "ShapeMismatchError", "SolverError", "SteinlabError", "ValidationError",
]
