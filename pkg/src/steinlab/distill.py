"""Test-based distillation channels, product-POVM tomography and the universal protocol.

A two-outcome test ``(E, 1 - E)`` on ``n`` input copies becomes a channel
that prepares ``k`` copies of the target on acceptance and a state orthogonal
to them on rejection.  The fidelity of the output with the target power is
exactly the acceptance probability.  The universal protocol spends a fraction
of the copies on tomography, builds a trace-ball null around the estimate and
uses the worst-case test over that ball.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import classical, freesets, oneshot, qmat
from .composite import NullHypothesisSpec
from .errors import ModelError, ValidationError
from .freesets import FreeSetModel, FullModel, MaxMixedModel, PPTModel
from .qmat import DensityOperator, TestEffect

log = logging.getLogger(__name__)

DEFAULT_XI = 0.01
DENSE_CHECK_DIM = 256


# ---------------------------------------------------------------------------
# effects


class DenseEffect:
    """A test effect stored as a full matrix on ``n`` copies."""

    def __init__(self, effect: TestEffect, n: int):
        self.effect = effect
        self.n = int(n)

    @property
    def dim(self) -> int:
        return self.effect.dim

    def expectation(self, X) -> float:
        M = X.matrix if hasattr(X, "matrix") else np.asarray(X)
        return float(np.real(np.sum(self.effect.matrix.T * M)))

    def expectation_iid(self, rho: DensityOperator) -> float:
        return self.expectation(qmat.tensor_power(rho, self.n) if self.n > 1 else rho)

    def support_max(self, model: FreeSetModel) -> tuple[float, DensityOperator]:
        return model.support_max(self.effect.matrix, self.n)

    def padded(self, r: float) -> "DenseEffect":
        M = self.effect.matrix
        return DenseEffect(TestEffect.clipped(self.effect.shape, M + r * (np.eye(M.shape[0]) - M)), self.n)


class TypeClassEffect:
    """A diagonal, permutation-invariant test given by one acceptance probability per type class."""

    def __init__(self, test: np.ndarray, n: int, d: int):
        self.test = np.clip(np.asarray(test, dtype=float), 0.0, 1.0)
        self.n = int(n)
        self.d = int(d)
        counts, _ = classical.type_classes(self.n, self.d)
        if self.test.shape != (counts.shape[0],):
            raise ValidationError("one acceptance probability per type class is required")

    @property
    def dim(self) -> int:
        return self.d ** self.n

    def diagonal(self) -> np.ndarray:
        """Acceptance probability of every basis sequence."""
        qmat.check_dim(self.dim, "type-class effect expansion")
        counts, _ = classical.type_classes(self.n, self.d)
        lookup = {tuple(c): i for i, c in enumerate(counts)}
        seqs = np.array(list(itertools.product(range(self.d), repeat=self.n)))
        hist = np.stack([(seqs == a).sum(axis=1) for a in range(self.d)], axis=1)
        return self.test[[lookup[tuple(h)] for h in hist]]

    def expectation(self, X) -> float:
        M = X.matrix if hasattr(X, "matrix") else np.asarray(X)
        return float(np.real(np.diag(M)) @ self.diagonal())

    def expectation_iid(self, rho: DensityOperator) -> float:
        # only the diagonal of rho matters for a diagonal effect
        p = np.clip(np.real(np.diag(rho.matrix)), 0.0, None)
        return float(classical.type_masses(p / p.sum(), self.n) @ self.test)

    def support_max(self, model: FreeSetModel) -> tuple[float, DensityOperator]:
        if not isinstance(model, MaxMixedModel):
            raise ModelError("type-class effects are only supported against the maximally mixed model")
        # the free set is the single state tau_n; returned lazily to avoid a d^n x d^n matrix
        u = np.ones(self.d) / self.d
        return float(classical.type_masses(u, self.n) @ self.test), None

    def padded(self, r: float) -> "TypeClassEffect":
        return TypeClassEffect(self.test + r * (1.0 - self.test), self.n, self.d)


def _wrap_effect(effect, n: int):
    if isinstance(effect, (DenseEffect, TypeClassEffect)):
        return effect
    if isinstance(effect, TestEffect):
        return DenseEffect(effect, n)
    raise ValidationError(f"unsupported effect type {type(effect).__name__}")


# ---------------------------------------------------------------------------
# the channel


@dataclass
class DistillationChannel:
    effect: object  # DenseEffect or TypeClassEffect
    rate: float
    n: int
    target: DensityOperator
    padding: float = 0.0

    @property
    def out_copies(self) -> int:
        return int(math.floor(self.rate * self.n + 1e-12))

    @property
    def out_dims(self) -> tuple[int, ...]:
        return self.target.dims * self.out_copies

    def target_power(self) -> np.ndarray:
        k = self.out_copies
        return qmat.tensor_power(self.target, k).matrix if k > 1 else (
            self.target.matrix if k == 1 else np.ones((1, 1), dtype=complex))

    def complement(self) -> np.ndarray:
        """Normalised projector onto the orthogonal complement of the target power's support."""
        T = self.target_power()
        D = T.shape[0]
        w, V = np.linalg.eigh(T)
        keep = w > 1e-12
        if keep.sum() >= D:
            return T  # full-rank target: no complement exists, reuse the target
        Pi = (V[:, keep]) @ V[:, keep].conj().T
        return (np.eye(D) - Pi) / (D - int(keep.sum()))

    def output_from_acceptance(self, a: float) -> DensityOperator:
        a = min(max(float(a), 0.0), 1.0)
        M = a * self.target_power() + (1.0 - a) * self.complement()
        if self.out_copies == 0:
            return DensityOperator((1,), np.ones((1, 1)))
        return DensityOperator(self.out_dims, M)

    def apply(self, X) -> DensityOperator:
        """Output ``Tr[E X] target^k + Tr[(1 - E) X] complement`` for an ``n``-copy input."""
        if X.dim != self.effect.dim:
            raise ValidationError(f"input dimension {X.dim} does not match the effect ({self.effect.dim})")
        return self.output_from_acceptance(self.effect.expectation(X))

    def apply_iid(self, rho: DensityOperator) -> DensityOperator:
        return self.output_from_acceptance(self.effect.expectation_iid(rho))

    def output_fidelity_iid(self, rho: DensityOperator) -> float:
        """Overlap of the output with a pure target power; equals the acceptance probability."""
        return self.effect.expectation_iid(rho)


def build_distillation_channel(effect, R: float, n: int, target: DensityOperator,
                               padding: float = 0.0) -> DistillationChannel:
    if R < 0:
        raise ValidationError("rate must be nonnegative")
    if n < 1:
        raise ValidationError("n must be positive")
    eff = _wrap_effect(effect, n)
    if padding:
        eff = eff.padded(padding)
    ch = DistillationChannel(eff, float(R), int(n), target, float(padding))
    qmat.check_dim(target.dim ** ch.out_copies, "distillation output")
    return ch


def output_model(model: FreeSetModel, target: DensityOperator) -> FreeSetModel:
    """Free-set model of the same kind on the target's space."""
    if isinstance(model, MaxMixedModel):
        return freesets.max_mixed(target.dims)
    if isinstance(model, FullModel):
        return freesets.full(target.dims)
    if isinstance(model, PPTModel):
        if len(target.dims) != 2:
            raise ModelError("PPT outputs need a bipartite target")
        return freesets.ppt(*target.dims)
    raise ModelError(f"no output model for {type(model).__name__}")


def singleton_padding(effect, model: FreeSetModel, R: float, n: int, target: DensityOperator) -> float:
    """Padding ``r`` that raises the free acceptance exactly to ``1 / D_out``.

    Needed when the free set is a single state: the output on that state is
    then exactly maximally mixed.
    """
    eff = _wrap_effect(effect, n)
    s, _ = eff.support_max(model)
    k = int(math.floor(R * n + 1e-12))
    goal = 1.0 / target.dim ** k
    if s >= goal or s >= 1.0:
        return 0.0
    return (goal - s) / (1.0 - s)


@dataclass
class NonGenerationCertificate:
    passed: bool
    support_max: float
    threshold: float
    threshold_ok: bool
    outputs_free: bool
    worst_robustness: float
    checked_states: int
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def check_resource_nongenerating(channel: DistillationChannel, model: FreeSetModel, trials: int = 20,
                                 seed: int = 0, tol: float = 1e-9) -> NonGenerationCertificate:
    """Check ``sup_free Tr[E sigma] <= 2^{-R n}`` and that free inputs give free outputs."""
    s, sigma_star = channel.effect.support_max(model)
    threshold = 2.0 ** (-channel.rate * channel.n)
    # a padded channel is judged against its own acceptance level
    if channel.padding:
        threshold = max(threshold, 1.0 / channel.target.dim ** channel.out_copies)
    thr_ok = bool(s <= threshold + tol)
    k = channel.out_copies
    notes = []
    if k == 0:
        notes.append("no output copies; the output is the trivial state")
        return NonGenerationCertificate(thr_ok, float(s), threshold, thr_ok, True, 1.0, 0, notes)
    out_model = output_model(model, channel.target)
    rng = np.random.default_rng(seed)
    if sigma_star is None:
        # singleton free set: the attaining state is the only free input
        outputs = [channel.output_from_acceptance(s)]
    else:
        outputs = [channel.apply(sigma_star)]
        if channel.effect.dim <= DENSE_CHECK_DIM:
            outputs += [channel.apply(model.random_free(channel.n, rng)) for _ in range(trials)]
        else:
            notes.append("input space too large for random free inputs; checked the attaining state only")
    free, worst = True, 1.0
    for out in outputs:
        m = out_model.membership_check(out, k, tol=1e-7)
        free &= bool(m)
        rg = freesets.generalized_robustness(out, out_model, k).value
        worst = max(worst, rg)
    return NonGenerationCertificate(bool(thr_ok and free), float(s), threshold, thr_ok, bool(free),
                                    float(worst), len(outputs), notes)


# ---------------------------------------------------------------------------
# tomography


def pauli_povm(n_qubits: int = 1) -> list[np.ndarray]:
    """Product of the six-outcome single-qubit Pauli POVM ``{(1 +- P)/6}``."""
    paulis = [np.array([[0, 1], [1, 0]], complex), np.array([[0, -1j], [1j, 0]]), np.diag([1.0 + 0j, -1.0])]
    single = [(np.eye(2) + s * P) / 6 for P in paulis for s in (1, -1)]
    out = single
    for _ in range(n_qubits - 1):
        out = [np.kron(a, b) for a in out for b in single]
    return out


def computational_povm(d: int) -> list[np.ndarray]:
    out = []
    for i in range(d):
        M = np.zeros((d, d), complex)
        M[i, i] = 1
        out.append(M)
    return out


@dataclass(frozen=True)
class TomographySpec:
    povm: tuple  # effects on one copy
    mu: float
    estimator: str = "linear_inversion_projected"
    diagonal_only: bool = False  # reconstruct within diagonal operators
    bootstrap: int = 200
    level: float = 0.95

    def __post_init__(self):
        povm = tuple(np.asarray(M, dtype=complex) for M in self.povm)
        if not povm:
            raise ValidationError("empty POVM")
        D = povm[0].shape[0]
        S = sum(povm)
        if np.max(np.abs(S - np.eye(D))) > 1e-10:
            raise ValidationError("POVM effects do not sum to the identity")
        for M in povm:
            if np.linalg.eigvalsh(0.5 * (M + M.conj().T))[0] < -1e-10:
                raise ValidationError("POVM effect is not positive")
        if not 0.0 < self.mu < 1.0:
            raise ValidationError(f"mu must lie in (0, 1), got {self.mu}")
        if self.estimator != "linear_inversion_projected":
            raise ValidationError(f"unknown estimator {self.estimator!r}")
        object.__setattr__(self, "povm", povm)

    @property
    def dim(self) -> int:
        return self.povm[0].shape[0]

    @classmethod
    def pauli(cls, n_qubits: int, mu: float, **kw) -> "TomographySpec":
        return cls(tuple(pauli_povm(n_qubits)), mu, **kw)

    @classmethod
    def computational(cls, d: int, mu: float, **kw) -> "TomographySpec":
        return cls(tuple(computational_povm(d)), mu, diagonal_only=True, **kw)

    def probabilities(self, rho: DensityOperator) -> np.ndarray:
        p = np.array([np.real(np.sum(M.T * rho.matrix)) for M in self.povm])
        p = np.clip(p, 0.0, None)
        return p / p.sum()


def _hermitian_basis(d: int, diagonal_only: bool) -> list[np.ndarray]:
    if diagonal_only:
        return [np.diag(np.eye(d)[i]).astype(complex) for i in range(d)]
    return [np.eye(d, dtype=complex) / math.sqrt(d)] + [G / math.sqrt(2) for G in qmat.gell_mann_basis(d)]


def project_to_states(M: np.ndarray) -> np.ndarray:
    """Nearest unit-trace PSD matrix in Frobenius norm (eigenvalue projection onto the simplex)."""
    M = 0.5 * (M + M.conj().T)
    w, V = np.linalg.eigh(M)
    u = np.sort(w)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, len(u) + 1)
    rho = np.nonzero(u - (css - 1) / j > 0)[0][-1]
    theta = (css[rho] - 1) / (rho + 1)
    lam = np.clip(w - theta, 0.0, None)
    return (V * lam) @ V.conj().T


def _inversion_matrix(spec: TomographySpec) -> tuple[np.ndarray, list[np.ndarray]]:
    B = _hermitian_basis(spec.dim, spec.diagonal_only)
    A = np.array([[np.real(np.trace(M @ b)) for b in B] for M in spec.povm])
    if np.linalg.matrix_rank(A, tol=1e-10) < len(B):
        raise ValidationError("the POVM is not informationally complete for this state space")
    return A, B


def _linear_inversion(freqs: np.ndarray, A: np.ndarray, B: list[np.ndarray]) -> np.ndarray:
    coef, *_ = np.linalg.lstsq(A, freqs, rcond=None)
    return sum(c * b for c, b in zip(coef, B))


@dataclass(frozen=True)
class TomographyResult:
    estimate: DensityOperator
    ball_radius: float
    empirical_radius: float
    level: float
    shots: int


def tomography_estimate(counts, spec: TomographySpec, dims=None, eps_ball: float | None = None,
                        seed: int = 0) -> TomographyResult:
    """Linear inversion from outcome frequencies followed by projection onto states.

    ``counts`` may hold integers or exact probabilities.  The reported
    empirical radius is the ``level`` quantile of the trace distance between
    bootstrap re-estimates and the estimate.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (len(spec.povm),):
        raise ValidationError(f"expected {len(spec.povm)} outcome counts, got shape {counts.shape}")
    if np.any(counts < 0) or counts.sum() <= 0:
        raise ValidationError("counts must be nonnegative with a positive total")
    A, B = _inversion_matrix(spec)
    total = counts.sum()
    freqs = counts / total
    est = project_to_states(_linear_inversion(freqs, A, B))
    dims = dims if dims is not None else (spec.dim,)
    estimate = DensityOperator(dims, est)
    integral = np.allclose(counts, np.round(counts)) and total >= 1
    if integral and spec.bootstrap > 0:
        rng = np.random.default_rng(seed)
        dists = []
        for _ in range(spec.bootstrap):
            f = rng.multinomial(int(round(total)), freqs) / total
            E = project_to_states(_linear_inversion(f, A, B))
            dists.append(0.5 * np.sum(np.abs(np.linalg.eigvalsh(E - est))))
        emp = float(np.quantile(dists, spec.level))
    else:
        emp = 0.0
    radius = emp if eps_ball is None else float(eps_ball)
    return TomographyResult(estimate, radius, emp, spec.level, int(round(total)) if integral else 0)


def conditional_state(sigma: DensityOperator, effect: np.ndarray, copy: int, copy_dim: int) -> DensityOperator | None:
    """State of the other copies after outcome ``effect`` on copy ``copy``; ``None`` at zero probability."""
    n = round(math.log(sigma.dim) / math.log(copy_dim))
    dims = (copy_dim,) * n
    ops = [np.eye(copy_dim)] * n
    ops[copy] = effect
    K = ops[0]
    for o in ops[1:]:
        K = np.kron(K, o)
    sq = qmat.psd_sqrt(0.5 * (K + K.conj().T))
    post = sq @ sigma.matrix @ sq
    p = float(np.real(np.trace(post)))
    if p <= 1e-14:
        return None
    rest = qmat.ptrace_matrix(post, dims, [i for i in range(n) if i != copy]) / p
    local = sigma.dims[: len(sigma.dims) // n] * (n - 1)
    return DensityOperator(local, rest)


# ---------------------------------------------------------------------------
# universal protocol


class HiddenSource:
    """Owns the unknown state; the protocol sees it only through measurement outcomes."""

    def __init__(self, state: DensityOperator, seed: int = 0):
        self.__state = state
        self._rng = np.random.default_rng(seed)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.__state.dims

    def measure(self, spec: TomographySpec, copies: int) -> np.ndarray:
        """Outcome counts of ``copies`` independent single-copy measurements."""
        return self._rng.multinomial(copies, spec.probabilities(self.__state))

    # evaluation side: the simulator applies the channel to the physical copies
    def run_channel(self, channel: DistillationChannel) -> tuple[DensityOperator, float]:
        a = channel.effect.expectation_iid(self.__state)
        return channel.output_from_acceptance(a), a


@dataclass
class ProtocolReport:
    n_used: int
    n_tomography: int
    estimate: DensityOperator
    ball_radius: float
    empirical_radius: float
    inner_value: float
    rate: float
    out_copies: int
    achieved_rate: float
    output_fidelity: float
    robustness_of_free_output: float
    certificate: NonGenerationCertificate
    engine: str
    seed: int
    target_cost: float
    counts: list

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("estimate", "certificate")}
        d["estimate"] = qmat.to_json_dict(self.estimate)
        d["certificate"] = self.certificate.as_dict()
        return d


def achievable_rate_bound(stein_value: float, mu: float, xi: float, target_cost: float) -> float:
    """``(1 - mu) (stein_value - xi) / target_cost``, floored at zero."""
    if target_cost <= 0:
        raise ValidationError("target cost must be positive")
    return max(0.0, (1.0 - mu) * (stein_value - xi) / target_cost)


def target_cost(target: DensityOperator, model: FreeSetModel, n_max: int = 2) -> float:
    """Per-copy resource content of the target against the output free set."""
    out = output_model(model, target)
    if isinstance(out, MaxMixedModel):
        return math.log2(target.dim) - qmat.von_neumann_entropy(target)
    vals = freesets.regularized_scan(target, out, n_max)
    return min(v for _, v in vals)


def default_tomography(model: FreeSetModel, mu: float) -> TomographySpec:
    d = model.base_shape.dim
    if isinstance(model, MaxMixedModel):
        # the purity engine only needs the spectrum in the computational basis
        return TomographySpec.computational(d, mu)
    nq = round(math.log2(d))
    if 2 ** nq != d:
        raise ModelError("default tomography needs qubit systems; pass a TomographySpec")
    return TomographySpec.pauli(nq, mu)


def run_protocol(source, model: FreeSetModel, target: DensityOperator, mu: float, eps_ball: float, n: int,
                 seed: int = 0, eps: float = 0.3, xi: float = DEFAULT_XI, tomography: TomographySpec | None = None,
                 net_size: int = 26, cost: float | None = None) -> ProtocolReport:
    """Tomography on ``floor(mu n)`` copies, worst-case test over the ball, channel on the rest."""
    m = int(math.floor(mu * n + 1e-12))
    if m < 1:
        raise ValidationError(f"floor(mu n) = {m}; at least one tomography copy is needed")
    n_test = n - m
    if n_test < 1:
        raise ValidationError("no copies left for distillation")
    spec = tomography or default_tomography(model, mu)
    counts = source.measure(spec, m)
    tomo = tomography_estimate(counts, spec, dims=model.base_shape.local_dims, eps_ball=eps_ball, seed=seed)
    classical_path = isinstance(model, MaxMixedModel) and spec.diagonal_only
    null = NullHypothesisSpec.ball(tomo.estimate, tomo.ball_radius, diagonal=classical_path, size=net_size)
    d = model.base_shape.dim
    if classical_path:
        probs = [np.real(np.diag(s.matrix)) for s in null.states]
        res = classical.beta_composite(probs, [np.ones(d) / d], n_test, eps)
        beta, effect = res.beta, TypeClassEffect(res.test, n_test, d)
        engine = "classical"
    else:
        powers = [qmat.tensor_power(s, n_test) if n_test > 1 else s for s in null.states]
        res = oneshot.dh_eps_composite(powers, model, n_test, eps, check_minimax=False)
        beta, effect = res.beta, DenseEffect(res.effect, n_test)
        engine = "sdp"
    inner = (-math.log2(beta) if beta > 0 else math.inf) / n_test
    c = target_cost(target, model) if cost is None else float(cost)
    R = max(0.0, (inner - xi) / c) if math.isfinite(inner) else 0.0
    pad = singleton_padding(effect, model, R, n_test, target) if isinstance(model, MaxMixedModel) else 0.0
    channel = build_distillation_channel(effect, R, n_test, target, padding=pad)
    cert = check_resource_nongenerating(channel, model, seed=seed)
    _, fid = source.run_channel(channel)
    k = channel.out_copies
    return ProtocolReport(n, m, tomo.estimate, tomo.ball_radius, tomo.empirical_radius, inner, R, k, k / n,
                          float(fid), cert.worst_robustness, cert, engine, seed, c, [int(x) for x in counts])


def universal_distill_sim(true_state_hidden: DensityOperator, model: FreeSetModel, target: DensityOperator,
                          mu: float, eps_ball: float, n: int, seed: int = 0, **kw) -> ProtocolReport:
    """Simulate the universal protocol against a hidden source holding ``true_state_hidden``."""
    return run_protocol(HiddenSource(true_state_hidden, seed), model, target, mu, eps_ball, n, seed=seed, **kw)
