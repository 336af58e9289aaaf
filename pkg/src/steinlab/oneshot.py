"""One-shot divergences and the scalar constants that appear in their bounds.

All values are in bits.  The SDP-based quantities return primal and dual
values so each number carries a two-sided certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog, minimize_scalar

from . import _sdp, qmat
from ._kernels import np_fill
from .errors import InvariantViolation, ShapeMismatchError, SolverError, ValidationError
from .qmat import DensityOperator, TestEffect

SUPPORT_TOL = 1e-9


@dataclass(frozen=True)
class HypothesisTestResult:
    value_bits: float
    beta: float
    effect: TestEffect
    attaining_sigma: DensityOperator | None = None
    certificate_gap: float = 0.0
    dual_value: float | None = None
    minimax_gap: float | None = None
    attaining_rho: DensityOperator | None = None

    def as_dict(self) -> dict:
        return {
            "value_bits": self.value_bits,
            "beta": self.beta,
            "certificate_gap": self.certificate_gap,
        }


def _bits(beta: float) -> float:
    return math.inf if beta <= 0 else -math.log2(beta)


def _pair_check(rho, sigma):
    if rho.dim != sigma.dim:
        raise ShapeMismatchError(f"shape mismatch: {rho.dims} vs {sigma.dims}")


def _check_eps(eps, name="eps"):
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"{name} must lie in (0, 1), got {eps}")


def _support_split(sigma: np.ndarray):
    w, V = np.linalg.eigh(sigma)
    cut = SUPPORT_TOL
    return w, V, w > cut


def _outside_support(rho: np.ndarray, V: np.ndarray, on: np.ndarray) -> bool:
    K = V[:, ~on]
    if K.shape[1] == 0:
        return False
    leak = float(np.real(np.trace(K.conj().T @ rho @ K)))
    return leak > SUPPORT_TOL


# ---------------------------------------------------------------------------
# plain divergences


def umegaki(rho: DensityOperator, sigma: DensityOperator) -> float:
    """``Tr rho (log rho - log sigma)``, or ``inf`` when supp rho is not inside supp sigma."""
    _pair_check(rho, sigma)
    w, V, on = _support_split(sigma.matrix)
    if _outside_support(rho.matrix, V, on):
        return math.inf
    r = np.clip(np.linalg.eigvalsh(rho.matrix), 0.0, None)
    r = r[r > 0]
    neg_s = float(np.sum(r * np.log2(r)))
    R = V[:, on].conj().T @ rho.matrix @ V[:, on]
    cross = float(np.real(np.sum(np.diag(R) * np.log2(w[on]))))
    return neg_s - cross


def dmax(rho: DensityOperator, sigma: DensityOperator) -> float:
    """``log ||sigma^{-1/2} rho sigma^{-1/2}||_inf`` on the support of sigma."""
    _pair_check(rho, sigma)
    w, V, on = _support_split(sigma.matrix)
    if _outside_support(rho.matrix, V, on):
        return math.inf
    Vs = V[:, on] / np.sqrt(w[on])
    top = float(np.linalg.eigvalsh(Vs.conj().T @ rho.matrix @ Vs)[-1])
    return math.log2(top) if top > 0 else -math.inf


# ---------------------------------------------------------------------------
# hypothesis testing


def _is_diagonal(M: np.ndarray, tol: float = 1e-13) -> bool:
    off = M - np.diag(np.diag(M))
    return float(np.max(np.abs(off), initial=0.0)) <= tol


def _joint_basis(rho: np.ndarray, sigma: np.ndarray):
    """A common eigenbasis for commuting inputs, or ``None``."""
    if _is_diagonal(rho) and _is_diagonal(sigma):
        return None, True
    comm = rho @ sigma - sigma @ rho
    if np.max(np.abs(comm)) > 1e-12:
        return None, False
    _, U = np.linalg.eigh(rho + (math.sqrt(5) - 1) / 2 * sigma)
    for M in (rho, sigma):
        if not _is_diagonal(U.conj().T @ M @ U, 1e-10):
            return None, False
    return U, True


def dh_eps(rho: DensityOperator, sigma: DensityOperator, eps: float, force_sdp: bool = False) -> HypothesisTestResult:
    """``-log min{Tr sigma E : 0 <= E <= 1, Tr rho E >= 1 - eps}``.

    Commuting pairs are solved exactly by the Neyman-Pearson construction in
    their common eigenbasis; otherwise an SDP is solved and its dual
    ``(1 - eps) mu - Tr Y`` is reported alongside.
    """
    _check_eps(eps)
    _pair_check(rho, sigma)
    R, S = rho.matrix, sigma.matrix
    if not force_sdp:
        U, commuting = _joint_basis(R, S)
        if commuting:
            if U is None:
                p, q = np.real(np.diag(R)), np.real(np.diag(S))
            else:
                p = np.real(np.diag(U.conj().T @ R @ U))
                q = np.real(np.diag(U.conj().T @ S @ U))
            beta, test = np_fill(np.clip(p, 0, None), np.clip(q, 0, None), 1.0 - eps)
            if U is None:
                E = np.diag(test).astype(complex)
            else:
                E = (U * test) @ U.conj().T
            return HypothesisTestResult(_bits(beta), float(beta), TestEffect.clipped(rho.shape, E),
                                        sigma, 0.0, float(beta))
    return _dh_sdp(rho, sigma, eps)


def _dh_sdp(rho, sigma, eps):
    R, S = rho.matrix, sigma.matrix
    real = _sdp.is_real(R, S)
    D = R.shape[0]
    E = _sdp.herm_var(D, real)
    c_null = _sdp.pair(_sdp.const(R, real), E, real) >= 1 - eps
    c_top = _sdp.identity(D, real) - E >> 0
    prob = cp.Problem(cp.Minimize(_sdp.pair(_sdp.const(S, real), E, real)), [E >> 0, c_top, c_null])
    beta = _sdp.solve(prob, "hypothesis testing SDP")
    # for any mu >= 0 the best Y is (mu rho - sigma)_+, so this is a valid lower bound
    mu = max(float(c_null.dual_value), 0.0)
    dual = (1 - eps) * mu - qmat.positive_part_trace(mu * R - S)
    beta = max(beta, 0.0)
    return HypothesisTestResult(_bits(beta), beta, TestEffect.clipped(rho.shape, np.asarray(E.value)),
                                sigma, abs(beta - dual), dual)


def _null_states(null) -> list[DensityOperator]:
    states = list(getattr(null, "states", null))
    if not states:
        raise ValidationError("the null hypothesis is empty")
    return states


def dh_eps_composite(null, model, n: int, eps: float, check_minimax: bool = True) -> HypothesisTestResult:
    """Worst case over a finite null and over the free set ``S_n`` of ``model``.

    Solves ``min t`` subject to ``sup_{sigma in S_n} Tr sigma E <= t`` (with the
    inner supremum dualised by the model), ``Tr rho_x E >= 1 - eps`` for every
    null member, and ``0 <= E <= 1``.  The constraint duals give a saddle
    point ``(rho*, sigma*)`` in the convex hulls; with ``check_minimax`` the
    simple-null value ``dh_eps(rho*, sigma*)`` is recomputed and must match.
    """
    from .freesets import MaxMixedModel

    _check_eps(eps)
    states = _null_states(null)
    D = model.dim(n)
    mats = [model._matrix(s, n) for s in states]
    if isinstance(model, MaxMixedModel) and all(_is_diagonal(M) for M in mats):
        res = _composite_maxmixed_lp(states, mats, model, n, eps)
    else:
        res = _composite_sdp(states, mats, model, n, eps)
    if check_minimax:
        simple = dh_eps(res.attaining_rho, res.attaining_sigma, eps)
        gap = abs(simple.beta - res.beta)
        tol = 1e-6 * max(1.0, res.beta)
        if gap > max(tol, 1e-6):
            raise InvariantViolation(f"minimax mismatch: composite beta {res.beta!r} vs saddle {simple.beta!r}")
        res = HypothesisTestResult(res.value_bits, res.beta, res.effect, res.attaining_sigma,
                                   res.certificate_gap, res.dual_value, gap, res.attaining_rho)
    return res


def _mix(states, weights, dims):
    w = np.clip(np.asarray(weights, dtype=float), 0, None)
    if w.sum() <= 0:
        w = np.ones(len(states))
    w = w / w.sum()
    M = sum(wi * s for wi, s in zip(w, states))
    M = 0.5 * (M + M.conj().T)
    return DensityOperator(dims, M / np.trace(M).real)


def _composite_maxmixed_lp(states, mats, model, n, eps):
    D = mats[0].shape[0]
    P = np.stack([np.real(np.diag(M)) for M in mats])
    # variables: e (D), t
    c = np.zeros(D + 1)
    c[-1] = 1.0
    A_ub = np.vstack([
        np.concatenate([np.ones(D) / D, [-1.0]])[None, :],
        np.hstack([-P, np.zeros((P.shape[0], 1))]),
    ])
    b_ub = np.concatenate([[0.0], -(1 - eps) * np.ones(P.shape[0])])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(0, 1)] * D + [(0, None)], method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise SolverError("composite LP failed", res.message)
    beta = float(res.fun)
    lam = -np.asarray(res.ineqlin.marginals)[1:]
    rho_star = _mix(mats, lam, model.dims(n))
    effect = TestEffect.clipped(model.dims(n), np.diag(res.x[:D]))
    return HypothesisTestResult(_bits(beta), beta, effect, qmat.maximally_mixed(model.dims(n)),
                                0.0, beta, None, rho_star)


def _composite_sdp(states, mats, model, n, eps):
    D = mats[0].shape[0]
    real = _sdp.is_real(*mats) and _sdp.is_real(model.tau(n).matrix)
    E = _sdp.herm_var(D, real)
    t = cp.Variable()
    robust, recover = model.robust_constraints(E, t, n, real)
    nulls = [_sdp.pair(_sdp.const(M, real), E, real) >= 1 - eps for M in mats]
    c_top = _sdp.identity(D, real) - E >> 0
    prob = cp.Problem(cp.Minimize(t), robust + nulls + [E >> 0, c_top])
    beta = max(_sdp.solve(prob, "composite hypothesis testing SDP"), 0.0)
    lam = np.clip(np.array([float(c.dual_value) for c in nulls]), 0.0, None)
    sigma_star = recover()
    # weak duality against the fixed saddle sigma*: (1 - eps) sum(lam) - Tr(sum lam rho - sigma*)_+
    agg = sum(l * M for l, M in zip(lam, mats))
    dual = (1 - eps) * lam.sum() - qmat.positive_part_trace(agg - sigma_star.matrix)
    rho_star = _mix(mats, lam, model.dims(n))
    effect = TestEffect.clipped(model.dims(n), np.asarray(E.value))
    return HypothesisTestResult(_bits(beta), beta, effect, sigma_star, abs(beta - dual), dual, None, rho_star)


# ---------------------------------------------------------------------------
# smooth max-relative entropies


def dmax_eps_purified(rho: DensityOperator, sigma: DensityOperator, eps: float) -> float:
    """``min log t`` over normalised ``omega`` with purified distance ``<= eps`` and ``omega <= t sigma``.

    The fidelity constraint ``F(rho, omega) >= sqrt(1 - eps^2)`` is imposed
    through the block form ``[[rho, X], [X^dag, omega]] >= 0, Re Tr X >= f``.
    """
    _check_eps(eps)
    _pair_check(rho, sigma)
    R, S = rho.matrix, sigma.matrix
    real = _sdp.is_real(R, S)
    D = R.shape[0]
    Z = _sdp.herm_var(2 * D, real)
    X = Z[:D, D:]
    omega = Z[D:, D:]
    t = cp.Variable()
    f = math.sqrt(1.0 - eps * eps)
    cons = [
        Z >> 0,
        Z[:D, :D] == _sdp.const(R, real),
        _sdp.trace(omega, real) == 1,
        t * _sdp.const(S, real) - omega >> 0,
        (cp.trace(X) if real else cp.real(cp.trace(X))) >= f,
    ]
    val = _sdp.solve(cp.Problem(cp.Minimize(t), cons), "smooth max-relative entropy SDP")
    if val <= 0:
        raise SolverError("smooth max-relative entropy SDP returned a nonpositive scale", str(val))
    return math.log2(val)


def dtilde_max(rho: DensityOperator, sigma: DensityOperator, zeta: float, tol: float = 1e-9) -> float:
    """``inf{lam : Tr(rho - 2^lam sigma)_+ <= zeta}`` by bisection on ``[-60, 60]``."""
    _check_eps(zeta, "zeta")
    _pair_check(rho, sigma)
    R, S = rho.matrix, sigma.matrix

    def ok(lam):
        return qmat.positive_part_trace(R - 2.0 ** lam * S) <= zeta

    lo, hi = -60.0, 60.0
    if not ok(hi):
        return math.inf
    if ok(lo):
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# scalar constants


def f2_binary_fidelity(p: float, q: float) -> float:
    """``(sqrt(pq) + sqrt((1-p)(1-q)))^2``."""
    for v in (p, q):
        if not 0.0 <= v <= 1.0:
            raise ValidationError(f"arguments must lie in [0, 1], got {v}")
    return (math.sqrt(p * q) + math.sqrt((1 - p) * (1 - q))) ** 2


def g_continuity(x: float) -> float:
    """``(x+1) log(x+1) - x log x`` in bits, with ``g(0) = 0``."""
    if x < 0:
        raise ValidationError(f"g is defined for x >= 0, got {x}")
    if x == 0:
        return 0.0
    return (x + 1) * math.log2(x + 1) - x * math.log2(x)


def g_simplified(eps: float, delta: float) -> float:
    """Closed-form upper bound ``27 eps (1 - eps) (1 - eps + delta) / delta^3`` on G."""
    return 27.0 * eps * (1 - eps) * (1 - eps + delta) / delta ** 3


@dataclass(frozen=True)
class GConstant:
    value: float
    nu_star: float
    simplified: float


def G_constant(eps: float, delta: float, tol: float = 1e-10) -> GConstant:
    """``inf_{0 < nu < delta} (1-eps) F2(eps-delta, 1-eps+nu) / (nu (delta-nu)^2)``."""
    if not (0.0 < delta < eps < 1.0):
        raise ValidationError(f"need 0 < delta < eps < 1, got eps={eps}, delta={delta}")

    def h(nu):
        return (1 - eps) * f2_binary_fidelity(eps - delta, 1 - eps + nu) / (nu * (delta - nu) ** 2)

    grid = np.linspace(0, delta, 402)[1:-1]
    vals = np.array([h(v) for v in grid])
    i = int(np.argmin(vals))
    i = min(max(i, 1), len(grid) - 2)
    res = minimize_scalar(h, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden",
                          tol=tol)
    nu = float(res.x)
    if not 0 < nu < delta:  # pragma: no cover - bracket keeps us inside
        nu = float(grid[i])
    value = float(h(nu))
    simple = g_simplified(eps, delta)
    if value > simple * (1 + 1e-12):
        raise InvariantViolation(f"G({eps}, {delta}) = {value} exceeds its closed-form bound {simple}")
    return GConstant(value, nu, simple)
