"""Dense multipartite state algebra.

States and tests are immutable dataclasses wrapping a complex matrix together
with the tensor-product structure it lives on.  Everything else in the package
builds on the handful of primitives here: Kronecker powers, partial traces,
factor permutations and the metric quantities (fidelity, purified distance,
trace distance).

All logarithms in the package are base 2.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from . import _config
from .errors import DimensionCapError, ShapeMismatchError, ValidationError

ArrayLike = Union[np.ndarray, Sequence]


@dataclass(frozen=True)
class SystemShape:
    """Ordered local dimensions of a tensor-product space."""

    local_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.local_dims)
        if not dims:
            raise ValidationError("a system shape needs at least one factor")
        if any(d < 1 for d in dims):
            raise ValidationError(f"local dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "local_dims", dims)
        total = int(np.prod(dims, dtype=object))
        cap = _config.dim_cap()
        if total > cap:
            raise DimensionCapError(total, cap)

    @property
    def dim(self) -> int:
        return int(np.prod(self.local_dims))

    @property
    def n_factors(self) -> int:
        return len(self.local_dims)

    def power(self, n: int) -> "SystemShape":
        return SystemShape(self.local_dims * n)

    def __iter__(self):
        return iter(self.local_dims)


def _as_shape(shape) -> SystemShape:
    if isinstance(shape, SystemShape):
        return shape
    if isinstance(shape, (int, np.integer)):
        return SystemShape((int(shape),))
    return SystemShape(tuple(shape))


def check_dim(total: int, what: str = "total dimension") -> None:
    cap = _config.dim_cap()
    if total > cap:
        raise DimensionCapError(total, cap, what)


def _hermitian_part(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def _spectrum(M: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian matrix; diagonal matrices skip the eigensolver."""
    d = np.diagonal(M)
    if np.count_nonzero(M) == np.count_nonzero(d):
        return np.sort(d.real)
    return np.linalg.eigvalsh(M)


class _Operator:
    """Shared construction logic for states and test effects."""

    shape: SystemShape
    matrix: np.ndarray

    def _setup(self, shape, matrix):
        shape = _as_shape(shape)
        M = np.array(matrix, dtype=complex, copy=True)
        if M.ndim != 2 or M.shape != (shape.dim, shape.dim):
            raise ShapeMismatchError(
                f"matrix of shape {M.shape} does not match system dims {shape.local_dims}"
            )
        herm_err = float(np.max(np.abs(M - M.conj().T))) if M.size else 0.0
        if herm_err > _config.TOL_HERM:
            raise ValidationError(f"matrix is not Hermitian (max |M - M^dag| = {herm_err:.3e})")
        M = _hermitian_part(M)
        M.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "matrix", M)
        return M

    @property
    def dims(self) -> tuple[int, ...]:
        return self.shape.local_dims

    @property
    def dim(self) -> int:
        return self.shape.dim

    def eigvalsh(self) -> np.ndarray:
        return _spectrum(self.matrix)

    def is_real(self, tol: float = 1e-14) -> bool:
        return bool(np.max(np.abs(self.matrix.imag), initial=0.0) <= tol)

    def regroup(self, dims) -> "_Operator":
        """Same operator viewed on a different factorisation of the same total space."""
        shape = _as_shape(dims)
        if shape.dim != self.dim:
            raise ShapeMismatchError(f"cannot regroup dimension {self.dim} as {shape.local_dims}")
        return type(self)(shape, self.matrix)


@dataclass(frozen=True, eq=False)
class DensityOperator(_Operator):
    """Hermitian, positive semidefinite, unit-trace matrix on ``shape``."""

    shape: SystemShape
    matrix: np.ndarray

    def __init__(self, shape, matrix):
        M = self._setup(shape, matrix)
        tr = float(np.real(np.trace(M)))
        if abs(tr - 1.0) > _config.TOL_TRACE:
            raise ValidationError(f"trace is {tr!r}, expected 1")
        lo = float(_spectrum(M)[0])
        if lo < -_config.TOL_PSD:
            raise ValidationError(f"matrix is not PSD (min eigenvalue {lo:.3e})")

    @classmethod
    def from_matrix(cls, matrix, dims=None) -> "DensityOperator":
        matrix = np.asarray(matrix)
        if dims is None:
            dims = (matrix.shape[0],)
        return cls(dims, matrix)

    def __repr__(self):
        return f"DensityOperator(dims={self.dims})"


@dataclass(frozen=True, eq=False)
class TestEffect(_Operator):
    """Two-outcome measurement operator ``0 <= E <= 1``."""

    __test__ = False  # not a pytest class

    shape: SystemShape
    matrix: np.ndarray

    def __init__(self, shape, matrix):
        M = self._setup(shape, matrix)
        ev = _spectrum(M) if M.size else np.zeros(0)
        if ev[0] < -_config.TOL_PSD or ev[-1] > 1.0 + _config.TOL_PSD:
            raise ValidationError(
                f"effect spectrum [{ev[0]:.3e}, {ev[-1]:.3e}] is outside [0, 1]"
            )

    @classmethod
    def clipped(cls, shape, matrix) -> "TestEffect":
        """Project a nearly-valid Hermitian matrix onto ``0 <= E <= 1``."""
        H = _hermitian_part(np.asarray(matrix, dtype=complex))
        d = np.diagonal(H)
        if np.count_nonzero(H) == np.count_nonzero(d):
            return cls(shape, np.diag(np.clip(d.real, 0.0, 1.0)).astype(complex))
        w, V = np.linalg.eigh(H)
        w = np.clip(w, 0.0, 1.0)
        return cls(shape, (V * w) @ V.conj().T)

    def __repr__(self):
        return f"TestEffect(dims={self.dims})"


Operator = Union[DensityOperator, TestEffect]


# ---------------------------------------------------------------------------
# matrix-level primitives


def psd_eigh(M: np.ndarray, tol: float = _config.TOL_PSD):
    """Eigendecomposition with eigenvalues clamped at zero.

    Eigenvalues in ``[-tol, 0)`` are treated as numerical drift; anything more
    negative is a hard failure.
    """
    w, V = np.linalg.eigh(_hermitian_part(np.asarray(M, dtype=complex)))
    if w.size and w[0] < -tol:
        raise ValidationError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    return np.clip(w, 0.0, None), V


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    w, V = psd_eigh(M)
    return (V * np.sqrt(w)) @ V.conj().T


def ptrace_matrix(M: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    dims = tuple(dims)
    k = len(dims)
    keep = sorted(keep)
    T = np.asarray(M).reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * k > len(letters):
        raise ValidationError("too many tensor factors for partial trace")
    row = list(letters[:k])
    col = list(letters[k : 2 * k])
    for i in range(k):
        if i not in keep:
            col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, T)
    kd = int(np.prod([dims[i] for i in keep]))
    return res.reshape(kd, kd)


def permute_matrix(M: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """``U_perm M U_perm^dag`` where factor ``k`` is moved to position ``perm[k]``."""
    dims = tuple(dims)
    k = len(dims)
    inv = np.argsort(perm)
    new_dims = tuple(dims[i] for i in inv)
    T = np.asarray(M).reshape(dims + dims)
    axes = list(inv) + [k + i for i in inv]
    D = int(np.prod(dims))
    return T.transpose(axes).reshape(D, D), new_dims


def basis_permutation_map(dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Gather index ``g`` with ``(U_perm M U_perm^dag)[a, b] = M[g[a], g[b]]``."""
    dims = tuple(dims)
    inv = np.argsort(perm)
    D = int(np.prod(dims))
    idx = np.arange(D).reshape(dims)
    return idx.transpose(list(inv)).reshape(D)


def partial_transpose_matrix(M: np.ndarray, dims: Sequence[int], systems: Iterable[int]) -> np.ndarray:
    dims = tuple(dims)
    k = len(dims)
    T = np.asarray(M).reshape(dims + dims)
    axes = list(range(2 * k))
    for s in systems:
        axes[s], axes[k + s] = axes[k + s], axes[s]
    D = int(np.prod(dims))
    return T.transpose(axes).reshape(D, D)


# ---------------------------------------------------------------------------
# operator-level operations


def _check_perm(pi: Sequence[int], k: int) -> list[int]:
    pi = [int(p) for p in pi]
    if sorted(pi) != list(range(k)):
        raise ValidationError(f"{pi} is not a permutation of range({k})")
    return pi


def tensor(*ops: Operator) -> Operator:
    """Kronecker product; result kind follows the first operand."""
    if not ops:
        raise ValidationError("tensor() needs at least one operand")
    dims: tuple[int, ...] = ()
    for op in ops:
        dims += op.dims
    check_dim(int(np.prod(dims)))
    M = ops[0].matrix
    for op in ops[1:]:
        M = np.kron(M, op.matrix)
    return type(ops[0])(SystemShape(dims), M)


def tensor_power(rho: Operator, n: int) -> Operator:
    """``rho`` tensored with itself ``n`` times."""
    if int(n) != n or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    check_dim(rho.dim ** n)
    M = rho.matrix
    for _ in range(n - 1):
        M = np.kron(M, rho.matrix)
    return type(rho)(SystemShape(rho.dims * n), M)


def partial_trace(X: Operator, keep: Iterable[int]) -> Operator:
    """Trace out every factor not listed in ``keep``; kept factors stay in order."""
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValidationError("keep set is empty; the result would be a scalar")
    if keep[0] < 0 or keep[-1] >= X.shape.n_factors:
        raise ValidationError(f"keep indices {keep} out of range for {X.shape.n_factors} factors")
    M = ptrace_matrix(X.matrix, X.dims, keep)
    return type(X)(SystemShape(tuple(X.dims[i] for i in keep)), M)


def permute_systems(X: Operator, pi: Sequence[int]) -> Operator:
    """Conjugate by the unitary moving factor ``k`` to position ``pi[k]``.

    With this convention ``permute_systems(X, p o q) ==
    permute_systems(permute_systems(X, q), p)`` where ``(p o q)[k] = p[q[k]]``.
    """
    pi = _check_perm(pi, X.shape.n_factors)
    M, new_dims = permute_matrix(X.matrix, X.dims, pi)
    return type(X)(SystemShape(new_dims), M)


def _same_shape(a: Operator, b: Operator) -> None:
    if a.dims != b.dims:
        raise ShapeMismatchError(f"shape mismatch: {a.dims} vs {b.dims}")


def fidelity(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Root fidelity ``||sqrt(rho) sqrt(sigma)||_1``."""
    _same_shape(rho, sigma)
    s = np.linalg.svd(psd_sqrt(rho.matrix) @ psd_sqrt(sigma.matrix), compute_uv=False)
    return float(min(1.0, max(0.0, np.sum(s))))


def purified_distance(rho: DensityOperator, sigma: DensityOperator) -> float:
    f = fidelity(rho, sigma)
    return float(np.sqrt(max(0.0, 1.0 - f * f)))


def trace_distance(rho: DensityOperator, sigma: DensityOperator) -> float:
    _same_shape(rho, sigma)
    w = np.linalg.eigvalsh(rho.matrix - sigma.matrix)
    return float(min(1.0, 0.5 * np.sum(np.abs(w))))


def positive_part_trace(X) -> float:
    """Sum of the positive eigenvalues of the Hermitian operator ``X``."""
    M = X.matrix if isinstance(X, _Operator) else np.asarray(X, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError("positive_part_trace needs a square matrix")
    err = float(np.max(np.abs(M - M.conj().T), initial=0.0))
    if err > _config.TOL_HERM * max(1.0, float(np.max(np.abs(M), initial=0.0))):
        raise ValidationError(f"input is not Hermitian (max |X - X^dag| = {err:.3e})")
    w = np.linalg.eigvalsh(_hermitian_part(M))
    return float(np.sum(w[w > 0]))


def von_neumann_entropy(rho: DensityOperator) -> float:
    w = np.clip(np.linalg.eigvalsh(rho.matrix), 0.0, None)
    w = w[w > 0]
    return float(-np.sum(w * np.log2(w)))


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


# ---------------------------------------------------------------------------
# named constructors


def ket0(d: int = 2) -> DensityOperator:
    M = np.zeros((d, d), dtype=complex)
    M[0, 0] = 1.0
    return DensityOperator((d,), M)


def maximally_mixed(dims) -> DensityOperator:
    shape = _as_shape(dims)
    return DensityOperator(shape, np.eye(shape.dim) / shape.dim)


def diagonal(p: ArrayLike, dims=None) -> DensityOperator:
    p = np.asarray(p, dtype=float)
    if np.any(p < -_config.TOL_PSD) or abs(p.sum() - 1.0) > _config.TOL_TRACE:
        raise ValidationError(f"{p} is not a probability vector")
    return DensityOperator(dims if dims is not None else (p.size,), np.diag(np.clip(p, 0.0, None)))


def pure(psi: ArrayLike, dims=None) -> DensityOperator:
    psi = np.asarray(psi, dtype=complex).ravel()
    psi = psi / np.linalg.norm(psi)
    return DensityOperator(dims if dims is not None else (psi.size,), np.outer(psi, psi.conj()))


def max_entangled_vector(d: int) -> np.ndarray:
    v = np.zeros(d * d, dtype=complex)
    v[:: d + 1] = 1.0 / np.sqrt(d)
    return v


def bell_phi_plus(d: int = 2) -> DensityOperator:
    return pure(max_entangled_vector(d), (d, d))


def isotropic(d: int, f: float) -> DensityOperator:
    """``f Phi_+ + (1 - f) (1 - Phi_+) / (d^2 - 1)``; separable iff ``f <= 1/d``."""
    if not 0.0 <= f <= 1.0:
        raise ValidationError(f"isotropic fidelity must lie in [0, 1], got {f}")
    phi = bell_phi_plus(d).matrix
    D = d * d
    return DensityOperator((d, d), f * phi + (1 - f) * (np.eye(D) - phi) / (D - 1))


def werner(d: int, p: float) -> DensityOperator:
    """``p`` times the normalised antisymmetric projector plus ``1 - p`` times the symmetric one."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"Werner weight must lie in [0, 1], got {p}")
    swap =np.eye(d * d)[basis_permutation_map((d, d), (1, 0))]
    P_sym = (np.eye(d * d) + swap) / 2
    P_anti = (np.eye(d * d) - swap) / 2
    return DensityOperator(
        (d, d), p * P_anti / (d * (d - 1) / 2) + (1 - p) * P_sym / (d * (d + 1) / 2)
    )


def gell_mann_basis(d: int) -> list[np.ndarray]:
    """The ``d**2 - 1`` generalized Gell-Mann matrices (traceless, Hermitian)."""
    mats = []
    for j in range(d):
        for k in range(j + 1, d):
            S = np.zeros((d, d), dtype=complex)
            S[j, k] = S[k, j] = 1.0
            mats.append(S)
            A = np.zeros((d, d), dtype=complex)
            A[j, k] = -1j
            A[k, j] = 1j
            mats.append(A)
    for l in range(1, d):
        Dg = np.zeros((d, d), dtype=complex)
        Dg[np.arange(l), np.arange(l)] = 1.0
        Dg[l, l] = -l
        mats.append(Dg * np.sqrt(2.0 / (l * (l + 1))))
    return mats


# ---------------------------------------------------------------------------
# random states


def random_state(dims, rng: np.random.Generator, rank: int | None = None, real: bool = False) -> DensityOperator:
    """Ginibre-distributed mixed state (Hilbert--Schmidt measure for full rank)."""
    shape = _as_shape(dims)
    D = shape.dim
    r = D if rank is None else rank
    G = rng.standard_normal((D, r))
    if not real:
        G = G + 1j * rng.standard_normal((D, r))
    M = G @ G.conj().T
    return DensityOperator(shape, M / np.trace(M).real)


def random_pure(dims, rng: np.random.Generator) -> DensityOperator:
    return random_state(dims, rng, rank=1)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def symmetric_group(n: int) -> list[tuple[int, ...]]:
    return list(itertools.permutations(range(n)))


# ---------------------------------------------------------------------------
# serialization


def to_json_dict(X: Operator) -> dict:
    M = X.matrix
    return {
        "shape": list(X.dims),
        "matrix": [[float(z.real), float(z.imag)] for z in M.ravel()],
    }


def from_json_dict(data: dict, kind=DensityOperator) -> Operator:
    try:
        dims = [int(d) for d in data["shape"]]
        entries = data["matrix"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"state record needs 'shape' and 'matrix' fields: {exc}") from exc
    flat = np.asarray(entries, dtype=float)
    D = int(np.prod(dims))
    if flat.ndim == 3:  # nested rows of [re, im] pairs
        flat = flat.reshape(-1, 2)
    if flat.shape != (D * D, 2):
        raise ValidationError(f"matrix needs {D * D} [re, im] pairs for dims {dims}, got shape {flat.shape}")
    M = (flat[:, 0] + 1j * flat[:, 1]).reshape(D, D)
    return kind(SystemShape(tuple(dims)), M)


def dumps(X: Operator) -> str:
    return json.dumps(to_json_dict(X))


def loads(text: str, kind=DensityOperator) -> Operator:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"not valid JSON: {exc}") from exc
    return from_json_dict(data, kind)


def load_state(path) -> DensityOperator:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def save_state(X: Operator, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(X))
