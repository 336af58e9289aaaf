"""Free-state families and the resource monotones defined relative to them.

A model describes a whole sequence of free sets, one for each number of copies
``n``, through four primitives: membership, linear maximisation
(``support_max``), a cone description used inside larger SDPs, and a
designated full-rank free state ``tau`` with ``tau >= c_lower * 1``.

Shipped families:

* ``PPTModel`` - states with positive partial transpose across the cut
  A_1...A_n | B_1...B_n (equal to the separable set for two qubits).
* ``MaxMixedModel`` - the purity theory, where the only free state is 1/D.
* ``HullModel`` - convex hull of n-fold products of fixed generators.
* ``FullModel`` - every state is free.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog, minimize_scalar

from . import _sdp, qmat
from ._kernels import log_divided_differences
from .errors import ConvergenceError, ModelError, ShapeMismatchError, ValidationError
from .qmat import DensityOperator, SystemShape

log = logging.getLogger(__name__)

LN2 = math.log(2.0)

# compiled PPT support problems keyed by (dA, dB, n, real); re-solving a
# parametrised problem skips cvxpy's canonicalisation
_PPT_CACHE: dict = {}


@dataclass(frozen=True)
class RobustnessCertificate:
    value: float
    witness_sigma: DensityOperator
    dual_witness: np.ndarray

    @property
    def log2(self) -> float:
        return math.log2(self.value)


@dataclass(frozen=True)
class MembershipResult:
    member: bool
    violation: float

    def __bool__(self):
        return self.member


@dataclass(frozen=True)
class RelEntropyResult:
    value: float
    sigma: DensityOperator
    gap: float
    iterations: int


# ---------------------------------------------------------------------------
# model hierarchy


class FreeSetModel:
    """Base class; subclasses fill in the primitives for one family."""

    kind: str = "abstract"
    base_shape: SystemShape
    c_lower: float

    # -- helpers ----------------------------------------------------------
    def dims(self, n: int) -> tuple[int, ...]:
        return self.base_shape.local_dims * n

    def dim(self, n: int) -> int:
        return self.base_shape.dim ** n

    def _matrix(self, X, n: int) -> np.ndarray:
        M = X.matrix if isinstance(X, qmat._Operator) else np.asarray(X, dtype=complex)
        D = self.dim(n)
        qmat.check_dim(D)
        if M.shape != (D, D):
            raise ShapeMismatchError(
                f"operator of size {M.shape} does not match {n} copies of {self.base_shape.local_dims}"
            )
        return M

    def tau(self, n: int = 1) -> DensityOperator:
        """Designated full-rank free state on ``n`` copies (a product of single-copy taus)."""
        t = self._tau1()
        return qmat.tensor_power(t, n) if n > 1 else t

    def _state(self, M: np.ndarray, n: int) -> DensityOperator:
        M = 0.5 * (M + M.conj().T)
        w, V = np.linalg.eigh(M)
        w = np.clip(w, 0.0, None)
        M = (V * w) @ V.conj().T
        return DensityOperator(self.dims(n), M / np.trace(M).real)

    # -- primitives subclasses provide ---------------------------------------
    def _tau1(self) -> DensityOperator:
        raise NotImplementedError

    def membership_check(self, sigma, n: int = 1, tol: float = 1e-8) -> MembershipResult:
        raise NotImplementedError

    def support_max(self, X, n: int = 1) -> tuple[float, DensityOperator]:
        raise NotImplementedError

    def robust_constraints(self, E, t, n: int, real: bool):
        """Constraints encoding ``sup_{sigma in S_n} Tr(sigma E) <= t`` for a cvxpy ``E``.

        Returns ``(constraints, recover)`` where ``recover()`` reads the optimal
        free state off the constraint duals after the problem has been solved.
        """
        raise NotImplementedError

    def robustness_cone(self, Y, n: int, real: bool):
        """Constraints placing the cvxpy matrix ``Y`` in the cone generated by ``S_n``."""
        raise NotImplementedError

    def random_free(self, n: int, rng: np.random.Generator) -> DensityOperator:
        raise NotImplementedError

    def to_config(self) -> dict:
        return {"kind": self.kind, "base_dims": list(self.base_shape.local_dims), "c_lower": self.c_lower}

    # -- generic monotones --------------------------------------------------
    def generalized_robustness(self, rho, n: int = 1) -> RobustnessCertificate:
        return generalized_robustness(rho, self, n)


@dataclass(frozen=True, eq=False)
class FullModel(FreeSetModel):
    base_shape: SystemShape
    kind: str = field(default="full", init=False)

    @property
    def c_lower(self) -> float:
        return 1.0 / self.base_shape.dim

    def _tau1(self):
        return qmat.maximally_mixed(self.base_shape)

    def membership_check(self, sigma, n=1, tol=1e-8):
        self._matrix(sigma, n)
        return MembershipResult(True, 0.0)

    def support_max(self, X, n=1):
        M = self._matrix(X, n)
        w, V = np.linalg.eigh(0.5 * (M + M.conj().T))
        v = V[:, -1]
        return float(w[-1]), DensityOperator(self.dims(n), np.outer(v, v.conj()))

    def robust_constraints(self, E, t, n, real):
        D = self.dim(n)
        con = t * _sdp.identity(D, real) - E >> 0
        return [con], lambda: self._state(_sdp.dual_matrix(con), n)

    def robustness_cone(self, Y, n, real):
        return [Y >> 0]

    def random_free(self, n, rng):
        return qmat.random_state(self.dims(n), rng)


@dataclass(frozen=True, eq=False)
class MaxMixedModel(FreeSetModel):
    base_shape: SystemShape
    kind: str = field(default="maxmixed", init=False)

    @property
    def c_lower(self) -> float:
        return 1.0 / self.base_shape.dim

    def _tau1(self):
        return qmat.maximally_mixed(self.base_shape)

    def membership_check(self, sigma, n=1, tol=1e-8):
        M = self._matrix(sigma, n)
        D = M.shape[0]
        dist = float(np.sum(np.abs(np.linalg.eigvalsh(M - np.eye(D) / D))))
        return MembershipResult(dist <= tol, dist)

    def support_max(self, X, n=1):
        M = self._matrix(X, n)
        D = M.shape[0]
        return float(np.trace(M).real / D), qmat.maximally_mixed(self.dims(n))

    def robust_constraints(self, E, t, n, real):
        D = self.dim(n)
        con = t >= _sdp.trace(E, real) / D
        return [con], lambda: qmat.maximally_mixed(self.dims(n))

    def robustness_cone(self, Y, n, real):
        D = self.dim(n)
        y = cp.Variable(nonneg=True)
        return [Y == y * _sdp.identity(D, real)]

    def random_free(self, n, rng):
        return qmat.maximally_mixed(self.dims(n))


@dataclass(frozen=True, eq=False)
class PPTModel(FreeSetModel):
    """Each copy is a bipartite system A (dim ``dA``) and B (dim ``dB``)."""

    dA: int
    dB: int
    kind: str = field(default="ppt", init=False)

    @property
    def base_shape(self) -> SystemShape:
        return SystemShape((self.dA, self.dB))

    @property
    def c_lower(self) -> float:
        return 1.0 / (self.dA * self.dB)

    def a_systems(self, n: int) -> list[int]:
        return [2 * k for k in range(n)]

    def _tau1(self):
        return qmat.maximally_mixed(self.base_shape)

    def partial_transpose(self, M: np.ndarray, n: int) -> np.ndarray:
        return qmat.partial_transpose_matrix(M, self.dims(n), self.a_systems(n))

    def membership_check(self, sigma, n=1, tol=1e-8):
        M = self._matrix(sigma, n)
        lo = min(np.linalg.eigvalsh(M)[0], np.linalg.eigvalsh(self.partial_transpose(M, n))[0])
        viol = float(max(0.0, -lo))
        return MembershipResult(viol <= tol, viol)

    def _ppt_constraints(self, S, n):
        return [S >> 0, _sdp.partial_transpose(S, self.dims(n), self.a_systems(n)) >> 0]

    def _support_problem(self, n: int, real: bool):
        key = (self.dA, self.dB, n, real)
        if key not in _PPT_CACHE:
            D = self.dim(n)
            S = _sdp.herm_var(D, real)
            C = cp.Parameter((D, D)) if real else cp.Parameter((D, D), complex=True)
            obj = cp.sum(cp.multiply(C, S)) if real else cp.real(cp.sum(cp.multiply(C, S)))
            prob = cp.Problem(cp.Maximize(obj), self._ppt_constraints(S, n) + [_sdp.trace(S, real) == 1])
            _PPT_CACHE[key] = (prob, C, S)
        return _PPT_CACHE[key]

    def support_max(self, X, n=1):
        M = self._matrix(X, n)
        real = _sdp.is_real(M)
        prob, C, S = self._support_problem(n, real)
        H = _sdp.const(M, real)
        C.value = H if real else np.ascontiguousarray(H.T)
        val = _sdp.solve(prob, "PPT support function")
        return val, self._state(np.asarray(S.value), n)

    def robust_constraints(self, E, t, n, real):
        D = self.dim(n)
        B = _sdp.herm_var(D, real)
        BG = _sdp.partial_transpose(B, self.dims(n), self.a_systems(n))
        con = t * _sdp.identity(D, real) - E - BG >> 0
        return [con, B >> 0], lambda: self._state(_sdp.dual_matrix(con), n)

    def robustness_cone(self, Y, n, real):
        return self._ppt_constraints(Y, n)

    def random_free(self, n, rng):
        # mixtures of product pure states are separable, hence PPT
        k = int(rng.integers(1, 5))
        w = rng.dirichlet(np.ones(k))
        M = np.zeros((self.dim(n), self.dim(n)), dtype=complex)
        for wi in w:
            P = np.ones((1, 1), dtype=complex)
            for _ in range(n):
                P = np.kron(P, qmat.random_pure((self.dA,), rng).matrix)
                P = np.kron(P, qmat.random_pure((self.dB,), rng).matrix)
            M += wi * P
        # small admixture of tau keeps samples in the interior
        lam = float(rng.uniform(0.0, 0.5))
        M = (1 - lam) * M + lam * np.eye(self.dim(n)) / self.dim(n)
        return DensityOperator(self.dims(n), M)

    def to_config(self) -> dict:
        cfg = super().to_config()
        cfg["bipartition"] = [self.dA, self.dB]
        return cfg


@dataclass(frozen=True, eq=False)
class HullModel(FreeSetModel):
    """``S_n`` is the convex hull of all n-fold products of the generators.

    Partial traces and factor permutations of such products are again products
    of generators, so the family is closed under both by construction.
    """

    generators: tuple[DensityOperator, ...]
    kind: str = field(default="hull", init=False)

    def __post_init__(self):
        if not self.generators:
            raise ValidationError("a hull model needs at least one generator")
        dims = self.generators[0].dims
        if any(g.dims != dims for g in self.generators):
            raise ShapeMismatchError("hull generators must share one shape")
        object.__setattr__(self, "generators", tuple(self.generators))

    @property
    def base_shape(self) -> SystemShape:
        return self.generators[0].shape

    @property
    def c_lower(self) -> float:
        return float(max(0.0, np.linalg.eigvalsh(self._tau1().matrix)[0]))

    def _tau1(self):
        M = sum(g.matrix for g in self.generators) / len(self.generators)
        return DensityOperator(self.base_shape, M)

    def products(self, n: int) -> list[np.ndarray]:
        qmat.check_dim(self.dim(n))
        out = []
        for combo in itertools.product(self.generators, repeat=n):
            P = combo[0].matrix
            for g in combo[1:]:
                P = np.kron(P, g.matrix)
            out.append(P)
        return out

    def _real_vectors(self, mats) -> np.ndarray:
        return np.stack([np.concatenate([m.real.ravel(), m.imag.ravel()]) for m in mats], axis=1)

    def hull_lp(self, M: np.ndarray, n: int):
        """Minimum l1 residual of ``M`` against convex combinations of products."""
        P = self.products(n)
        A = self._real_vectors(P)
        b = np.concatenate([M.real.ravel(), M.imag.ravel()])
        m, k = A.shape
        # variables: w (k), r+ (m), r- (m); minimise sum r
        c = np.concatenate([np.zeros(k), np.ones(2 * m)])
        A_eq = np.hstack([A, np.eye(m), -np.eye(m)])
        A_eq = np.vstack([A_eq, np.concatenate([np.ones(k), np.zeros(2 * m)])])
        b_eq = np.concatenate([b, [1.0]])
        res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status != 0:
            raise ModelError(f"hull LP failed: {res.message}")
        return float(res.fun), res.x[:k], P

    def membership_check(self, sigma, n=1, tol=1e-8):
        M = self._matrix(sigma, n)
        resid, _, _ = self.hull_lp(M, n)
        return MembershipResult(resid <= tol, resid)

    def support_max(self, X, n=1):
        M = self._matrix(X, n)
        P = self.products(n)
        vals = [float(np.real(np.sum(M.T * p))) for p in P]
        i = int(np.argmax(vals))
        return vals[i], DensityOperator(self.dims(n), P[i])

    def robust_constraints(self, E, t, n, real):
        P = self.products(n)
        cons = [t >= _sdp.pair(_sdp.const(p, real), E, real) for p in P]

        def recover():
            w = np.array([max(0.0, float(c.dual_value)) for c in cons])
            if w.sum() <= 0:
                w = np.ones(len(P))
            return self._state(sum(wi * p for wi, p in zip(w, P)), n)

        return cons, recover

    def robustness_cone(self, Y, n, real):
        P = self.products(n)
        w = cp.Variable(len(P), nonneg=True)
        return [Y == sum(w[i] * _sdp.const(p, real) for i, p in enumerate(P))]

    def random_free(self, n, rng):
        P = self.products(n)
        w = rng.dirichlet(np.ones(len(P)))
        return DensityOperator(self.dims(n), sum(wi * p for wi, p in zip(w, P)))

    def to_config(self) -> dict:
        cfg = super().to_config()
        cfg["generators"] = [qmat.to_json_dict(g) for g in self.generators]
        return cfg


# ---------------------------------------------------------------------------
# construction helpers


def ppt(dA: int = 2, dB: int = 2) -> PPTModel:
    return PPTModel(dA, dB)


def max_mixed(d) -> MaxMixedModel:
    return MaxMixedModel(qmat._as_shape(d))


def full(d) -> FullModel:
    return FullModel(qmat._as_shape(d))


def hull(generators) -> HullModel:
    return HullModel(tuple(generators))


def model_from_config(cfg: dict) -> FreeSetModel:
    try:
        kind = str(cfg["kind"]).lower()
    except (KeyError, TypeError) as exc:
        raise ValidationError("model config needs a 'kind' field") from exc
    if kind == "ppt":
        dA, dB = cfg.get("bipartition", cfg.get("base_dims", [2, 2]))
        return PPTModel(int(dA), int(dB))
    if kind in ("maxmixed", "max_mixed", "purity"):
        return max_mixed(cfg.get("base_dims", [2]))
    if kind == "full":
        return full(cfg.get("base_dims", [2]))
    if kind == "hull":
        gens = cfg.get("generators")
        if not gens:
            raise ValidationError("hull model config needs generators")
        return hull([qmat.from_json_dict(g) for g in gens])
    raise ValidationError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# monotones


def membership_check(sigma, model: FreeSetModel, n: int = 1, tol: float = 1e-8) -> MembershipResult:
    return model.membership_check(sigma, n, tol)


def support_max(X, model: FreeSetModel, n: int = 1) -> tuple[float, DensityOperator]:
    """``max_{sigma in S_n} Tr(sigma X)`` together with an attaining free state."""
    return model.support_max(X, n)


def generalized_robustness(rho, model: FreeSetModel, n: int = 1) -> RobustnessCertificate:
    """``min{s : rho <= s sigma, sigma free}`` as ``min Tr Y, Y >= rho, Y in cone(S_n)``."""
    M = model._matrix(rho, n)
    D = M.shape[0]
    if isinstance(model, FullModel):
        return RobustnessCertificate(1.0, DensityOperator(model.dims(n), M), np.eye(D) / D)
    if isinstance(model, MaxMixedModel):
        w, V = np.linalg.eigh(M)
        v = V[:, -1]
        return RobustnessCertificate(
            float(max(1.0, D * w[-1])), qmat.maximally_mixed(model.dims(n)), np.outer(v, v.conj())
        )
    real = _sdp.is_real(M)
    Y = _sdp.herm_var(D, real)
    dom = Y - _sdp.const(M, real) >> 0
    prob = cp.Problem(cp.Minimize(_sdp.trace(Y, real)), [dom] + model.robustness_cone(Y, n, real))
    try:
        val = _sdp.solve(prob, "generalized robustness")
    except Exception as exc:
        raise ModelError(f"robustness SDP failed; the model may have empty interior ({exc})") from exc
    val = max(1.0, val)
    Yv = np.asarray(Y.value)
    sigma = model._state(Yv, n)
    return RobustnessCertificate(float(val), sigma, _sdp.dual_matrix(dom))


def dmax_to_set(rho, model: FreeSetModel, n: int = 1) -> float:
    return math.log2(generalized_robustness(rho, model, n).value)


# ---------------------------------------------------------------------------
# relative entropy of resource via Frank-Wolfe


def _rel_entropy_fn(rho_M: np.ndarray):
    w = np.clip(np.linalg.eigvalsh(rho_M), 0.0, None)
    w = w[w > 1e-300]
    neg_entropy = float(np.sum(w * np.log2(w)))

    def f(S: np.ndarray) -> float:
        lam, U = np.linalg.eigh(S)
        lam = np.clip(lam, 1e-300, None)
        R = U.conj().T @ rho_M @ U
        return neg_entropy - float(np.real(np.sum(np.diag(R) * np.log2(lam))))

    return f


def log_derivative(S: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Frechet derivative of the natural log at ``S > 0`` applied to ``H``."""
    lam, U = np.linalg.eigh(0.5 * (S + S.conj().T))
    if lam[0] <= 0:
        raise ValidationError("log derivative needs a positive definite point")
    Gam = log_divided_differences(lam)
    return U @ (Gam * (U.conj().T @ H @ U)) @ U.conj().T


def _metric_direction(S: np.ndarray, G: np.ndarray, model: FreeSetModel, n: int, real: bool) -> np.ndarray:
    """Minimiser over the free set of the local model ``Tr G Y + q(Y - S) / 2``.

    ``q`` is the Kubo-Mori quadratic form ``sum_ij Gamma_ij |(U^dag H U)_ij|^2``
    at ``S``, i.e. the exact Hessian of the relative entropy when ``rho = S``.
    It is a cheap, well-scaled stand-in for Newton's method that keeps every
    trial point inside the free set.
    """
    lam, U = np.linalg.eigh(S)
    Gam = log_divided_differences(lam) / LN2
    D = S.shape[0]
    Y = _sdp.herm_var(D, real)
    Uc = U.real if real else U
    H = Uc.conj().T @ (Y - _sdp.const(S, real)) @ Uc
    if real:
        quad = cp.sum(cp.multiply(Gam, cp.square(H)))
    else:
        quad = cp.sum(cp.multiply(Gam, cp.square(cp.real(H)) + cp.square(cp.imag(H))))
    obj = _sdp.pair(_sdp.const(G, real), Y, real) + 0.5 * quad
    cons = model.robustness_cone(Y, n, real) + [_sdp.trace(Y, real) == 1]
    _sdp.solve(cp.Problem(cp.Minimize(obj), cons), "relative entropy metric step")
    return np.asarray(Y.value) - S


def rel_entropy_to_set(
    rho,
    model: FreeSetModel,
    n: int = 1,
    tol: float = 1e-6,
    max_iters: int = 5000,
    tau_weight: float = 1e-6,
    method: str = "metric",
) -> RelEntropyResult:
    """``min_{sigma in S_n} D(rho || sigma)`` by Frank-Wolfe with a certified gap.

    Every iteration computes the Frank-Wolfe gap ``Tr G (sigma - s)``, with
    ``G`` the gradient and ``s`` the linear minimiser from ``support_max``.
    The gap bounds the suboptimality, so the true value lies in
    ``[value - gap, value]``.  The step itself depends on ``method``:

    * ``"vanilla"``: classic line search toward ``s``;
    * ``"corrective"``: re-optimise weights over all atoms found so far;
    * ``"metric"`` (default): a variable-metric step solved over the free set
      (see ``_metric_direction``), falling back to the corrective step if
      that solve fails.
    """
    if method not in ("metric", "corrective", "vanilla"):
        raise ValidationError(f"unknown method {method!r}")
    M = model._matrix(rho, n)
    real = _sdp.is_real(M) and _sdp.is_real(model.tau(n).matrix)
    f = _rel_entropy_fn(M)
    tau = model.tau(n).matrix
    if np.linalg.eigvalsh(tau)[0] <= 0:
        raise ModelError("the model's designated free state is not full rank")
    # mixing in tau whenever the iterate drifts toward the boundary keeps the
    # log derivative finite; mixing unconditionally would floor the gap at
    # roughly tau_weight * |Tr G (tau - sigma)|
    floor = tau_weight * float(np.linalg.eigvalsh(tau)[0])
    atoms = [tau]
    weights = np.array([1.0])
    S = tau.copy()
    best = f(S)
    gap = np.inf
    for it in range(1, max_iters + 1):
        G = -log_derivative(S, M) / LN2
        smax, s_state = model.support_max(-G, n)
        gap = float(np.real(np.sum(G.T * S)) + smax)
        if gap <= tol:
            return RelEntropyResult(max(0.0, best), DensityOperator(model.dims(n), S), max(gap, 0.0), it)
        s_mat = s_state.matrix
        step = None
        if method == "metric":
            try:
                step = _metric_direction(S, G, model, n, real)
            except Exception as exc:  # solver trouble: fall back to the corrective step
                log.debug("metric step failed (%s); using corrective step", exc)
        if step is not None:
            res = minimize_scalar(lambda g: f(S + g * step), bounds=(0.0, 1.0), method="bounded",
                                  options={"xatol": 1e-12})
            t = 1.0 if f(S + step) <= res.fun else float(res.x)
            S = S + t * step
            atoms, weights = [tau, S], np.array([0.0, 1.0])
        elif method == "vanilla":
            D_dir = s_mat - S
            res = minimize_scalar(lambda g: f(S + g * D_dir), bounds=(0.0, 1.0), method="bounded",
                                  options={"xatol": 1e-12})
            S = S + float(res.x) * D_dir
        else:
            # atom 0 is tau and is never pruned; it carries the interior mixing
            atoms.append(s_mat)
            weights = _corrective_weights(f, atoms, np.append(weights * 0.5, 0.5), M, inner_tol=0.1 * tol)
            keep = weights > 1e-12
            keep[0] = True
            atoms = [a for a, k in zip(atoms, keep) if k]
            weights = weights[keep] / weights[keep].sum()
            S = np.tensordot(weights, np.stack(atoms), axes=1)
        S = 0.5 * (S + S.conj().T)
        if np.linalg.eigvalsh(S)[0] < floor:
            S = (1 - tau_weight) * S + tau_weight * tau
            weights = (1 - tau_weight) * weights
            weights[0] += tau_weight
        best = f(S)
    raise ConvergenceError("Frank-Wolfe did not reach the requested gap", best, gap, max_iters)


def _corrective_weights(f, atoms, w0, M, inner_tol=1e-11, inner_iters=400):
    """Minimise ``f(sum_i w_i A_i)`` over the simplex by pairwise Frank-Wolfe.

    On a finite atom set this converges linearly, so the outer loop only pays
    for oracle calls that genuinely enlarge the active set.
    """
    k = len(atoms)
    w = np.asarray(w0, dtype=float).copy()
    if k == 1:
        return np.ones(1)
    stack = np.stack(atoms)
    for _ in range(inner_iters):
        S = np.tensordot(w, stack, axes=1)
        G = -log_derivative(S, M) / LN2
        g = np.real(np.einsum("ij,kji->k", G, stack))
        toward = int(np.argmin(g))
        active = np.flatnonzero(w > 0)
        away = int(active[np.argmax(g[active])])
        if g[away] - g[toward] <= inner_tol:
            break
        d = stack[toward] - stack[away]
        cap = w[away]
        res = minimize_scalar(lambda t: f(S + t * d), bounds=(0.0, cap), method="bounded",
                              options={"xatol": 1e-14 * max(1.0, cap)})
        t = float(res.x)
        if f(S + cap * d) <= res.fun:
            t = cap
        w[toward] += t
        w[away] -= t
        if w[away] < 1e-15:
            w[away] = 0.0
    return w / w.sum()


def regularized_scan(rho, model: FreeSetModel, n_max: int, tol: float = 1e-6) -> list[tuple[int, float]]:
    """Per-copy values ``D(rho^{(x)n} || S_n) / n`` for ``n = 1..n_max``.

    The sequence ``n D_n`` is subadditive, so the per-copy values converge to
    their infimum (Fekete); at finite ``n`` they are upper bounds on the limit.
    """
    if isinstance(rho, DensityOperator):
        base = rho
    else:
        base = DensityOperator(model.base_shape, rho)
    out = []
    for n in range(1, n_max + 1):
        qmat.check_dim(base.dim ** n)
        r = rel_entropy_to_set(qmat.tensor_power(base, n), model, n, tol=tol)
        out.append((n, r.value / n))
    return out


# ---------------------------------------------------------------------------
# axiom checker


@dataclass
class AxiomReport:
    model: str
    n_max: int
    results: dict = field(default_factory=dict)  # axiom name -> {"passed", "trials", "worst"}

    @property
    def all_passed(self) -> bool:
        return all(r["passed"] for r in self.results.values())

    def as_dict(self) -> dict:
        return {"model": self.model, "n_max": self.n_max, "all_passed": self.all_passed, "axioms": self.results}


def axioms_check(model: FreeSetModel, n_max: int = 2, trials: int = 50, seed: int = 0, tol: float = 1e-7) -> AxiomReport:
    """Randomised checks of convexity, a full-rank free state, and closure under
    partial traces, tensor products and permutations of copies."""
    rng = np.random.default_rng(seed)
    rep = AxiomReport(model.kind, n_max)

    def record(name, worst, count):
        rep.results[name] = {"passed": bool(worst <= tol), "trials": count, "worst": float(worst)}

    # 1 convexity
    worst, count = 0.0, 0
    for t in range(trials):
        n = 1 + t % n_max
        a, b = model.random_free(n, rng), model.random_free(n, rng)
        lam = rng.uniform()
        mix = DensityOperator(model.dims(n), lam * a.matrix + (1 - lam) * b.matrix)
        worst = max(worst, model.membership_check(mix, n, tol).violation)
        count += 1
    record("convexity", worst, count)

    # 2 full-rank free state with certified lower bound
    worst, count = 0.0, 0
    try:
        for n in range(1, n_max + 1):
            tau = model.tau(n)
            lo = float(np.linalg.eigvalsh(tau.matrix)[0])
            c_n = model.c_lower ** n
            bad = 0.0
            if lo <= 0 or model.c_lower <= 0:
                bad = 1.0
            else:
                bad = max(0.0, c_n - lo)
                bad = max(bad, model.membership_check(tau, n, tol).violation)
            worst = max(worst, bad)
            count += 1
    except (ValidationError, ModelError):
        worst = 1.0
    record("full_rank_free_state", worst, count)

    # 3 partial trace closure (drop one whole copy)
    worst, count = 0.0, 0
    if n_max >= 2:
        for t in range(trials):
            n = 2 + t % (n_max - 1)
            s = model.random_free(n, rng)
            k = int(rng.integers(n))
            nb = model.base_shape.n_factors
            keep = [i for i in range(n * nb) if i // nb != k]
            red = qmat.partial_trace(s, keep)
            worst = max(worst, model.membership_check(red, n - 1, tol).violation)
            count += 1
    record("partial_trace", worst, count)

    # 4 tensor-product closure
    worst, count = 0.0, 0
    if n_max >= 2:
        for t in range(trials):
            n = 2 + t % (n_max - 1)
            k = int(rng.integers(1, n))
            a, b = model.random_free(k, rng), model.random_free(n - k, rng)
            prod = qmat.tensor(a, b)
            worst = max(worst, model.membership_check(prod, n, tol).violation)
            count += 1
    record("tensor_product", worst, count)

    # 5 permutation closure (permute whole copies)
    worst, count = 0.0, 0
    if n_max >= 2:
        for t in range(trials):
            n = 2 + t % (n_max - 1)
            s = model.random_free(n, rng)
            cp_perm = rng.permutation(n)
            nb = model.base_shape.n_factors
            pi = [int(cp_perm[i // nb]) * nb + i % nb for i in range(n * nb)]
            worst = max(worst, model.membership_check(qmat.permute_systems(s, pi), n, tol).violation)
            count += 1
    record("permutation", worst, count)
    return rep
