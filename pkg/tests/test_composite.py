import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinlab import classical, composite, freesets, oneshot, qmat
from steinlab.composite import Ensemble, NullHypothesisSpec
from steinlab.errors import NotInHullError, ShapeMismatchError, ValidationError


def _random_ensemble(rng, k, d=2, rank=None):
    w = rng.dirichlet(np.ones(k))
    return Ensemble(tuple(w), tuple(qmat.random_state(d, rng, rank=rank) for _ in range(k)))


# ---------------------------------------------------------------- ensembles

def test_ensemble_validation():
    s = qmat.maximally_mixed(2)
    with pytest.raises(ValidationError):
        Ensemble((0.5, 0.6), (s, s))
    with pytest.raises(ValidationError):
        Ensemble((1.0,), (s, s))
    with pytest.raises(ShapeMismatchError):
        Ensemble.uniform([s, qmat.maximally_mixed(3)])
    e = Ensemble.from_pairs([(0.25, qmat.ket0()), (0.75, s)])
    assert len(e) == 2
    assert np.allclose(e.mixture().matrix, np.diag([0.625, 0.375]))


def test_ball_net_stays_inside(rng):
    c = qmat.random_state(2, rng)
    null = NullHypothesisSpec.ball(c, 0.1)
    assert len(null.net) == 27  # center plus 26 perturbations
    assert all(qmat.trace_distance(s, c) <= 0.1 + 1e-9 for s in null.net)
    diag = NullHypothesisSpec.ball(qmat.diagonal([0.9, 0.1]), 0.1, diagonal=True)
    assert all(np.allclose(s.matrix, np.diag(np.diag(s.matrix))) for s in diag.net)
    with pytest.raises(ValidationError):
        NullHypothesisSpec("ball", (qmat.ket0(),), qmat.pure([0, 1]), 0.1)


# ---------------------------------------------------------------- Caratheodory

def test_caratheodory_identical_members_collapse():
    s = qmat.diagonal([0.3, 0.7])
    ens = composite.caratheodory_decompose(s, [s, s, s])
    assert len(ens) == 1
    assert composite.reconstruction_residual(ens, s) < 1e-12


def test_caratheodory_vertex_is_singleton(rng):
    src = [qmat.random_state(2, rng) for _ in range(5)]
    ens = composite.caratheodory_decompose(src[2], src)
    assert composite.reconstruction_residual(ens, src[2]) < 1e-9
    assert len(ens) <= 4


def test_caratheodory_outside_hull():
    with pytest.raises(NotInHullError):
        composite.caratheodory_decompose(qmat.pure([1, 1]), [qmat.ket0(), qmat.pure([0, 1])])


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.integers(5, 12))
def test_caratheodory_member_count_is_affine_bound(seed, k):
    rng = np.random.default_rng(seed)
    src = [qmat.random_state(2, rng) for _ in range(k)]
    w = rng.dirichlet(np.ones(k))
    rho = qmat.DensityOperator((2,), sum(wi * s.matrix for wi, s in zip(w, src)))
    ens = composite.caratheodory_decompose(rho, src)
    assert len(ens) <= 4  # real dimension 3 of qubit states, plus one
    assert composite.reconstruction_residual(ens, rho) < 1e-9


def test_symmetric_dimension_oracle():
    # count multisets of size n from d^2 basis elements by brute force
    import itertools
    for d, n in [(2, 2), (2, 3), (3, 2)]:
        count = sum(1 for _ in itertools.combinations_with_replacement(range(d * d), n))
        assert composite.symmetric_operator_dim(d, n) == count
    assert composite.schur_weyl_count_bound(2, 2) == pytest.approx(9.0)


# ---------------------------------------------------------------- Uhlmann

def test_uhlmann_singleton(rng):
    rho, om = qmat.random_state(2, rng), qmat.random_state(2, rng)
    res = composite.uhlmann_decompose(Ensemble((1.0,), (rho,)), om)
    assert res.residual < 1e-10
    assert np.allclose(res.decomposition.mixture().matrix, om.matrix, atol=1e-10)


def test_uhlmann_orthogonal_support():
    ens = Ensemble.uniform([qmat.ket0(), qmat.pure([0, 1])])
    res = composite.uhlmann_decompose(ens, qmat.maximally_mixed(2))
    assert res.target == pytest.approx(1.0)
    assert res.residual < 1e-10


@pytest.mark.parametrize("k", [2, 3, 5])
def test_uhlmann_attains_and_dominates(rng, k):
    ens = _random_ensemble(rng, k, d=3)
    om = qmat.random_state(3, rng)
    res = composite.uhlmann_decompose(ens, om)
    assert res.residual < 1e-8
    assert np.allclose(res.decomposition.mixture().matrix, om.matrix, atol=1e-9)
    # any other decomposition of omega cannot beat the mixture fidelity
    for _ in range(10):
        alt = _random_ensemble(rng, k, d=3)
        # rescale alt into a valid decomposition of omega by mixing towards omega itself
        q = np.array(alt.weights)
        parts = [qmat.DensityOperator((3,), 0.5 * s.matrix + 0.5 * om.matrix) for s in alt.states]
        corr = om.matrix - sum(qi * p.matrix for qi, p in zip(q, parts))
        parts = [qmat.DensityOperator((3,), p.matrix + corr) if np.linalg.eigvalsh(p.matrix + corr)[0] > 0 else None
                 for p in parts]
        if any(p is None for p in parts):
            continue
        s = sum(math.sqrt(p * qi) * qmat.fidelity(r, w) for p, qi, r, w in zip(ens.weights, q, ens.states, parts))
        assert s <= res.target + 1e-9


# ---------------------------------------------------------------- quasi-concavity

def test_penalty_constants():
    _, weak = composite.dh_penalty("weak_converse", 0.2, 1, kappa=0.5)
    assert weak == pytest.approx(math.log2(200))
    d, strong = composite.dh_penalty("strong_converse", 0.5, 1, kappa=0.5)
    assert d == pytest.approx(0.25)
    assert strong == pytest.approx(math.log2(1.5 / 0.0625))
    with pytest.raises(ValidationError):
        composite.dh_penalty("strong_converse", 0.3, 1, kappa=0.5)
    with pytest.raises(ValidationError):
        composite.dh_penalty("G", 0.3, 1, delta=0.4)
    dG, pen = composite.dh_penalty("G", 0.3, 4, delta=0.15)
    assert pen == pytest.approx(2 + math.log2(oneshot.G_constant(0.3, 0.15).value))


def test_dh_all_skips_out_of_range_variants(rng):
    ens = _random_ensemble(rng, 3)
    reps = composite.check_quasiconcavity_dh(ens, qmat.maximally_mixed(2), 0.3)
    assert {r.name for r in reps} == {"dh_G", "dh_simplified", "dh_weak_converse"}
    with pytest.raises(ValidationError):
        composite.check_quasiconcavity_dh(ens, qmat.maximally_mixed(2), 0.3, variant="strong_converse")


def test_quasiconcavity_random(rng):
    sigma = qmat.random_state(2, rng)
    for _ in range(5):
        ens = _random_ensemble(rng, 3)
        assert composite.check_quasiconcavity_dmax(ens, sigma, 0.2, 0.1).passed
        for r in composite.check_quasiconcavity_dh(ens, qmat.maximally_mixed(2), 0.5):
            assert r.passed, r.as_dict()


def test_dmax_smoothing_saturates():
    ens = Ensemble.uniform([qmat.ket0(), qmat.pure([0, 1])])
    rep = composite.check_quasiconcavity_dmax(ens, qmat.maximally_mixed(2), 0.6, 0.4)
    assert rep.lhs == 0.0 and rep.passed


def test_conversions(rng):
    for _ in range(5):
        rho, sigma = qmat.random_state(2, rng), qmat.random_state(2, rng)
        assert composite.check_datta_renner(rho, sigma, 0.3).passed
        assert composite.check_dh_dmax_duality(rho, sigma, 0.2).passed


# ---------------------------------------------------------------- continuity

@pytest.mark.parametrize("n", [1, 2])
def test_continuity_purity(rng, n):
    m = freesets.max_mixed(2)
    for _ in range(3):
        rho, om = qmat.random_state(2, rng), qmat.random_state(2, rng)
        rep = composite.continuity_check(rho, om, m, n)
        assert rep.passed, rep.as_dict()


def test_continuity_zero_distance(rng):
    rho = qmat.random_state(2, rng)
    rep = composite.continuity_check(rho, rho, freesets.max_mixed(2), 1)
    assert rep.lhs == pytest.approx(0.0, abs=1e-9) and rep.rhs == pytest.approx(0.0)


# ---------------------------------------------------------------- scans

def test_scan_classical_singleton_matches_simple():
    null = NullHypothesisSpec.finite([qmat.diagonal([0.9, 0.1])])
    tab = composite.stein_scan(null, freesets.max_mixed(2), 20, [0.3], n_list=[10, 20])
    assert tab.engine == "classical"
    for row in tab.rows:
        ref = classical.beta_simple([0.9, 0.1], [0.5, 0.5], row.n, 0.3).value_bits / row.n
        assert row.value_per_copy == pytest.approx(ref, abs=1e-9)
        assert row.simple_per_copy == pytest.approx(ref, abs=1e-9)
        assert row.bound_ok
    assert tab.target == pytest.approx(1 - qmat.binary_entropy(0.9), abs=1e-9)


def test_scan_composite_below_simple():
    null = NullHypothesisSpec.ball(qmat.diagonal([0.9, 0.1]), 0.1, diagonal=True, size=6)
    tab = composite.stein_scan(null, freesets.max_mixed(2), 8, [0.3], n_list=[4, 8])
    for row in tab.rows:
        assert row.value_per_copy <= row.simple_per_copy + 1e-9
        assert row.bound_ok


def test_scan_parallel_matches_serial():
    null = NullHypothesisSpec.finite([qmat.diagonal([0.8, 0.2]), qmat.diagonal([0.9, 0.1])])
    a = composite.stein_scan(null, freesets.max_mixed(2), 4, [0.2, 0.4])
    b = composite.stein_scan(null, freesets.max_mixed(2), 4, [0.2, 0.4], jobs=2)
    assert a.as_dict() == b.as_dict()


def test_scan_ppt_bell_bracket():
    null = NullHypothesisSpec.finite([qmat.bell_phi_plus()])
    tab = composite.stein_scan(null, freesets.ppt(), 1, [0.1], target_n=1)
    assert tab.engine == "sdp"
    assert tab.target == pytest.approx(1.0, abs=1e-4)
    row = tab.rows[0]
    assert row.bound_ok
    # one copy: (1 - eps) times the Phi+ projector, and PPT overlap with Phi+ is at most 1/2
    assert row.value_per_copy == pytest.approx(-math.log2(0.9 / 2), abs=1e-4)
    with pytest.raises(ValidationError):
        composite.stein_scan(null, freesets.ppt(), 1, [0.1], engine="classical")
