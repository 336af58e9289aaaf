"""Permutation symmetrisation and the blurring channel.

Blurring appends ``m`` copies of a noise state to an ``n``-copy input,
shuffles all ``n + m`` copies uniformly at random and discards the last
``m``.  Averaging over the full group ``S_{n+m}`` is never needed explicitly:
the ``n`` surviving slots hold ``k`` noise copies with hypergeometric
probability ``C(n,k) C(m,k) / C(n+m,m)``, the input copies that survive form
a uniformly random subset, and their arrangement is uniformly random.  Hence

    blur(X) = sum_k h(k) Sym_n( Tr_{last k}(Sym_n X) (x) N^{(x)k} ),

which only ever touches ``n``-copy operators.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import qmat
from ._kernels import perm_average
from .errors import ShapeMismatchError, ValidationError
from .qmat import DensityOperator

EXACT_GROUP_LIMIT = 720


@dataclass(frozen=True)
class BlurSpec:
    n: int
    delta: float
    noise_state: DensityOperator
    mode: str = "exact"  # "exact" or "monte_carlo"
    samples: int = 10000
    seed: int = 0
    shards: int = 16
    added: int | None = None  # explicit number of noise copies; overrides floor(n delta)

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("n must be positive")
        if self.added is not None:
            if self.added < 0:
                raise ValidationError("added must be nonnegative")
        elif not 0.0 <= self.delta <= 0.5:
            raise ValidationError(f"delta must lie in [0, 1/2], got {self.delta}")
        if self.mode not in ("exact", "monte_carlo"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.samples < 1 or self.shards < 1:
            raise ValidationError("samples and shards must be positive")

    @classmethod
    def with_added(cls, n: int, m: int, noise_state: DensityOperator, **kw) -> "BlurSpec":
        """Spec that appends exactly ``m`` noise copies."""
        return cls(n, m / n, noise_state, added=m, **kw)

    @property
    def m(self) -> int:
        if self.added is not None:
            return int(self.added)
        return int(math.floor(self.n * self.delta + 1e-12))


@dataclass(frozen=True)
class BlurResult:
    state: DensityOperator
    stderr: float  # max entrywise standard error; 0 in exact mode
    mode: str


# ---------------------------------------------------------------------------
# permutations of copies


def _copy_layout(X, copy_dim: int | None) -> tuple[int, int]:
    if copy_dim is None:
        dims = X.dims
        if len(set(dims)) != 1:
            raise ValidationError(f"symmetrisation needs identical factors, got {dims}")
        return dims[0], len(dims)
    n = round(math.log(X.dim) / math.log(copy_dim)) if copy_dim > 1 else 1
    if copy_dim ** n != X.dim:
        raise ShapeMismatchError(f"dimension {X.dim} is not a power of the copy dimension {copy_dim}")
    return copy_dim, n


def _maps(d: int, n: int, perms) -> np.ndarray:
    return np.stack([qmat.basis_permutation_map((d,) * n, p) for p in perms])


def _sym_matrix(M: np.ndarray, d: int, n: int) -> np.ndarray:
    if n == 1:
        return M.copy()
    return perm_average(M, _maps(d, n, itertools.permutations(range(n))))


def symmetrize(X, copy_dim: int | None = None, mode: str = "exact", samples: int = 2000, seed: int = 0):
    """Average of ``U_pi X U_pi^dag`` over permutations of the copies.

    ``copy_dim`` is the dimension of one copy; by default every tensor factor
    is a copy.  Exact mode enumerates ``S_n`` and is limited to ``n! <= 720``;
    Monte Carlo mode averages ``samples`` seeded uniform permutations.
    """
    d, n = _copy_layout(X, copy_dim)
    if mode == "exact":
        if math.factorial(n) > EXACT_GROUP_LIMIT:
            raise ValidationError(f"exact symmetrisation over {n}! permutations exceeds {EXACT_GROUP_LIMIT}")
        M = _sym_matrix(X.matrix, d, n)
    elif mode == "monte_carlo":
        rng = np.random.default_rng(seed)
        perms = [rng.permutation(n) for _ in range(samples)]
        M = perm_average(X.matrix, _maps(d, n, perms))
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    return type(X)(X.shape, 0.5 * (M + M.conj().T))


# ---------------------------------------------------------------------------
# blurring


def hypergeometric_weights(n: int, m: int) -> np.ndarray:
    """``h(k)``: probability that ``k`` of the ``n`` kept slots hold noise."""
    total = math.comb(n + m, m)
    return np.array([math.comb(n, k) * math.comb(m, k) / total for k in range(min(n, m) + 1)])


def _trace_last(M: np.ndarray, d: int, n: int, k: int) -> np.ndarray:
    if k == 0:
        return M
    return qmat.ptrace_matrix(M, (d ** (n - k), d ** k), [0])


def _blur_exact(M: np.ndarray, N: np.ndarray, d: int, n: int, m: int) -> np.ndarray:
    if m == 0:
        return _sym_matrix(M, d, n)
    Ms = _sym_matrix(M, d, n)
    h = hypergeometric_weights(n, m)
    out = np.zeros_like(Ms)
    Npow = np.ones((1, 1), dtype=complex)
    for k, hk in enumerate(h):
        if k > 0:
            Npow = np.kron(Npow, N)
        if hk == 0:
            continue
        if k == n:
            Y = Npow
        else:
            Y = np.kron(_trace_last(Ms, d, n, k), Npow)
        out += hk * Y
    return _sym_matrix(out, d, n)


def _blur_sample_shard(M, N, d, n, m, samples, rng):
    """Sum of ``samples`` single-permutation outputs, grouped to reuse reductions."""
    ks = rng.hypergeometric(m, n, n, size=samples) if m > 0 else np.zeros(samples, dtype=int)
    groups: dict = {}
    for k in ks:
        kept = tuple(sorted(rng.choice(n, size=n - int(k), replace=False)))
        perm = tuple(rng.permutation(n))
        groups.setdefault((int(k), kept), []).append(perm)
    out = np.zeros_like(M)
    for (k, kept), perms in groups.items():
        if k == n:
            Y = np.ones((1, 1), dtype=complex)
        else:
            Y = qmat.ptrace_matrix(M, (d,) * n, list(kept))
        for _ in range(k):
            Y = np.kron(Y, N)
        out += len(perms) * perm_average(Y, _maps(d, n, perms))
    return out


def blur_detail(X: DensityOperator, spec: BlurSpec) -> BlurResult:
    N = spec.noise_state
    d = N.dim
    _, n = _copy_layout(X, d)
    if n != spec.n:
        raise ShapeMismatchError(f"input has {n} copies but BlurSpec expects {spec.n}")
    m = spec.m
    qmat.check_dim(X.dim)
    if spec.mode == "exact":
        if math.factorial(n) > EXACT_GROUP_LIMIT:
            raise ValidationError(f"exact blurring needs n! <= {EXACT_GROUP_LIMIT}; use monte_carlo")
        M = _blur_exact(X.matrix, N.matrix, d, n, m)
        err = 0.0
    else:
        seqs = np.random.SeedSequence(spec.seed).spawn(spec.shards)
        base, extra = divmod(spec.samples, spec.shards)
        shard_means = []
        total = np.zeros_like(X.matrix)
        for i, ss in enumerate(seqs):
            cnt = base + (1 if i < extra else 0)
            if cnt == 0:
                continue
            part = _blur_sample_shard(X.matrix, N.matrix, d, n, m, cnt, np.random.default_rng(ss))
            total += part
            shard_means.append(part / cnt)
        M = total / spec.samples
        if len(shard_means) > 1:
            arr = np.stack(shard_means)
            err = float(np.max(np.abs(arr.std(axis=0, ddof=1))) / math.sqrt(len(shard_means)))
        else:
            err = math.nan
    M = 0.5 * (M + M.conj().T)
    return BlurResult(DensityOperator(X.shape, M / np.trace(M).real), err, spec.mode)


def blur(X: DensityOperator, spec: BlurSpec) -> DensityOperator:
    """Blurred state ``Tr_{last m} E_pi U_pi (X (x) N^{(x)m}) U_pi^dag`` with ``m = floor(n delta)``."""
    return blur_detail(X, spec).state


def blur_weights(n: int, Delta: float) -> np.ndarray:
    """Weight of each ``m = floor(n delta)`` when ``delta`` is uniform on ``(0, Delta]``."""
    if not 0.0 < Delta <= 0.5:
        raise ValidationError(f"Delta must lie in (0, 1/2], got {Delta}")
    m_max = int(math.floor(n * Delta + 1e-12))
    w = np.array([(min((m + 1) / n, Delta) - m / n) / Delta for m in range(m_max + 1)])
    return np.clip(w, 0.0, None)


@dataclass(frozen=True)
class MixtureResult:
    mixture: DensityOperator
    deficit: float | None
    weights: np.ndarray


def blur_mixture(Omega: DensityOperator, Delta: float, noise_state: DensityOperator, M: float = 1.0,
                 reference: DensityOperator | None = None) -> MixtureResult:
    """The delta-average of blurred states as an exact finite sum, plus the deficit
    ``Tr(reference - M * mixture)_+`` when a reference state is supplied."""
    d = noise_state.dim
    _, n = _copy_layout(Omega, d)
    w = blur_weights(n, Delta)
    mix = np.zeros_like(Omega.matrix)
    for m, wm in enumerate(w):
        if wm == 0:
            continue
        mix += wm * blur(Omega, BlurSpec.with_added(n, m, noise_state)).matrix
    mix = DensityOperator(Omega.shape, 0.5 * (mix + mix.conj().T))
    deficit = None
    if reference is not None:
        if reference.dim != Omega.dim:
            raise ShapeMismatchError("reference and Omega live on different spaces")
        deficit = qmat.positive_part_trace(reference.matrix - M * mix.matrix)
    return MixtureResult(mix, deficit, w)


@dataclass
class TrendTable:
    rows: list  # (n, M, deficit)
    monotone_in_M: bool
    nonincreasing_in_n: bool

    def as_dict(self) -> dict:
        return {
            "rows": [{"n": n, "M": M, "deficit": d} for n, M, d in self.rows],
            "monotone_in_M": self.monotone_in_M,
            "nonincreasing_in_n": self.nonincreasing_in_n,
        }


def blur_trend_scan(rho_seq: Sequence[DensityOperator], Omega_seq: Sequence[DensityOperator], Delta: float,
                    M_list: Sequence[float], noise_state: DensityOperator | None = None,
                    tol: float = 1e-12) -> TrendTable:
    """Deficits ``Tr(rho_i^{(x)n_i} - M * mixture_i)_+`` over a sequence of inputs and scales.

    With ``noise_state=None`` each entry blurs with its own ``rho_i`` as noise;
    otherwise one fixed noise state is used throughout.
    """
    if len(rho_seq) != len(Omega_seq):
        raise ValidationError("rho_seq and Omega_seq must have equal length")
    rows = []
    per_n: dict = {}
    for rho, Om in zip(rho_seq, Omega_seq):
        _, n = _copy_layout(Om, rho.dim)
        ref = qmat.tensor_power(rho, n) if n > 1 else rho
        mix = blur_mixture(Om, Delta, rho if noise_state is None else noise_state).mixture
        for M in M_list:
            dft = qmat.positive_part_trace(ref.matrix - M * mix.matrix)
            rows.append((n, float(M), float(dft)))
            per_n.setdefault(n, []).append((float(M), float(dft)))
    mono_M = True
    for vals in per_n.values():
        vals = sorted(vals)
        mono_M &= all(b[1] <= a[1] + tol for a, b in zip(vals, vals[1:]))
    ns = sorted(per_n)
    non_inc = True
    for M in M_list:
        seq = [dict(per_n[n])[float(M)] for n in ns]
        non_inc &= all(b <= a + tol for a, b in zip(seq, seq[1:]))
    return TrendTable(rows, bool(mono_M), bool(non_inc))
