import math

import numpy as np
import pytest

from steinlab import classical, distill, freesets, oneshot, qmat
from steinlab.distill import HiddenSource, TomographySpec, TypeClassEffect
from steinlab.errors import ValidationError
from steinlab.qmat import TestEffect


def _projector_effect(state):
    return TestEffect(state.shape, state.matrix)


# ---------------------------------------------------------------- channel

def test_output_fidelity_equals_acceptance(rng):
    phi = qmat.bell_phi_plus()
    E = TestEffect((2, 2), 0.7 * phi.matrix + 0.1 * np.eye(4))
    ch = distill.build_distillation_channel(E, 1.0, 1, phi)
    rho = qmat.random_state((2, 2), rng)
    out = ch.apply(rho)
    acc = float(np.real(np.trace(E.matrix @ rho.matrix)))
    assert qmat.fidelity(out, phi) ** 2 == pytest.approx(acc, abs=1e-9)
    assert ch.output_fidelity_iid(rho) == pytest.approx(acc)
    assert np.allclose(ch.apply_iid(rho).matrix, out.matrix)


def test_zero_effect_is_free():
    phi = qmat.bell_phi_plus()
    ch = distill.build_distillation_channel(TestEffect((2, 2), np.zeros((4, 4))), 1.0, 1, phi)
    cert = distill.check_resource_nongenerating(ch, freesets.ppt())
    assert cert.passed and cert.support_max == pytest.approx(0.0)


def test_projector_with_too_high_rate_fails():
    phi = qmat.bell_phi_plus()
    ok = distill.check_resource_nongenerating(
        distill.build_distillation_channel(_projector_effect(phi), 1.0, 1, phi), freesets.ppt())
    assert ok.passed
    assert ok.support_max == pytest.approx(0.5, abs=1e-6)
    bad = distill.check_resource_nongenerating(
        distill.build_distillation_channel(_projector_effect(phi), 2.0, 1, phi), freesets.ppt())
    assert not bad.threshold_ok and not bad.passed


def test_hypothesis_test_effect_passes():
    phi = qmat.bell_phi_plus()
    res = oneshot.dh_eps_composite([phi], freesets.ppt(), 1, 0.1)
    ch = distill.build_distillation_channel(res.effect, 1.0, 1, phi)
    cert = distill.check_resource_nongenerating(ch, freesets.ppt(), trials=10)
    assert cert.passed, cert.as_dict()
    assert cert.worst_robustness == pytest.approx(1.0, abs=1e-5)


def test_zero_rate_gives_trivial_output():
    ch = distill.build_distillation_channel(TestEffect((2,), np.eye(2)), 0.0, 1, qmat.ket0())
    assert ch.out_copies == 0
    assert ch.apply_iid(qmat.ket0()).dim == 1
    with pytest.raises(ValidationError):
        distill.build_distillation_channel(TestEffect((2,), np.eye(2)), -1.0, 1, qmat.ket0())


def test_type_class_effect_matches_dense():
    n, d = 4, 2
    res = classical.beta_composite([[0.9, 0.1]], [[0.5, 0.5]], n, 0.2)
    te = TypeClassEffect(res.test, n, d)
    dense = distill.DenseEffect(TestEffect((2,) * n, np.diag(te.diagonal())), n)
    rho = qmat.diagonal([0.7, 0.3])
    assert te.expectation_iid(rho) == pytest.approx(dense.expectation_iid(rho))
    s, _ = te.support_max(freesets.max_mixed(2))
    assert s == pytest.approx(res.beta)


def test_singleton_padding_hits_output_floor():
    n, d = 6, 2
    res = classical.beta_composite([[0.95, 0.05]], [[0.5, 0.5]], n, 0.2)
    te = TypeClassEffect(res.test, n, d)
    target = qmat.ket0()
    R = 0.5
    pad = distill.singleton_padding(te, freesets.max_mixed(2), R, n, target)
    ch = distill.build_distillation_channel(te, R, n, target, padding=pad)
    s, _ = ch.effect.support_max(freesets.max_mixed(2))
    assert s == pytest.approx(1 / 2 ** ch.out_copies)
    cert = distill.check_resource_nongenerating(ch, freesets.max_mixed(2))
    assert cert.passed, cert.as_dict()
    assert np.allclose(ch.output_from_acceptance(s).matrix, np.eye(8) / 8)


# ---------------------------------------------------------------- tomography

def test_povms_are_complete():
    for spec in (TomographySpec.pauli(1, 0.2), TomographySpec.pauli(2, 0.2)):
        distill._inversion_matrix(spec)
    spec = TomographySpec.computational(3, 0.2)
    assert spec.diagonal_only
    with pytest.raises(ValidationError):
        distill._inversion_matrix(TomographySpec(spec.povm, 0.2))


def test_exact_probabilities_reconstruct(rng):
    rho = qmat.random_state(2, rng)
    spec = TomographySpec.pauli(1, 0.2)
    est = distill.tomography_estimate(spec.probabilities(rho), spec)
    assert qmat.trace_distance(est.estimate, rho) < 1e-10
    assert est.shots == 0


def test_equal_counts_give_maximally_mixed():
    spec = TomographySpec.pauli(1, 0.2, bootstrap=0)
    est = distill.tomography_estimate(np.full(6, 5), spec)
    assert np.allclose(est.estimate.matrix, np.eye(2) / 2)


def test_bell_tomography_accuracy():
    phi = qmat.bell_phi_plus()
    spec = TomographySpec.pauli(2, 0.2, bootstrap=50)
    counts = HiddenSource(phi, seed=7).measure(spec, 10_000)
    est = distill.tomography_estimate(counts, spec, dims=(2, 2), seed=7)
    assert qmat.trace_distance(est.estimate, phi) <= 0.05
    assert 0 < est.empirical_radius < 0.2


def test_projection_is_onto_states(rng):
    M = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    P = distill.project_to_states(M)
    assert np.trace(P).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(P)[0] >= -1e-12
    rho = qmat.random_state(3, rng).matrix
    assert np.allclose(distill.project_to_states(rho), rho)


def test_conditional_states_stay_free(rng):
    m = freesets.ppt()
    povm = distill.pauli_povm(2)
    for _ in range(3):
        sigma = m.random_free(2, rng)
        for E in povm[:6]:
            c = distill.conditional_state(sigma, E, 0, 4)
            if c is not None:
                assert m.membership_check(c, 1)
    tau2 = qmat.maximally_mixed([2, 2])
    c = distill.conditional_state(tau2, np.diag([1.0, 0.0]), 1, 2)
    assert np.allclose(c.matrix, np.eye(2) / 2)
    assert distill.conditional_state(qmat.tensor(qmat.ket0(), qmat.ket0()), np.diag([0.0, 1.0]), 0, 2) is None


# ---------------------------------------------------------------- protocol

def test_rate_bound_examples():
    assert distill.achievable_rate_bound(1.0, 0.0, 0.0, 1.0) == pytest.approx(1.0)
    assert distill.achievable_rate_bound(0.531, 0.25, 0.01, 1.0) == pytest.approx(0.39075)
    assert distill.achievable_rate_bound(0.005, 0.25, 0.01, 1.0) == 0.0
    with pytest.raises(ValidationError):
        distill.achievable_rate_bound(1.0, 0.1, 0.0, 0.0)


class _FakeSource:
    """Exposes nothing but the measurement and evaluation hooks."""

    def __init__(self, state, seed):
        self._inner = HiddenSource(state, seed)
        self.calls = []

    def measure(self, spec, copies):
        self.calls.append(("measure", copies))
        return self._inner.measure(spec, copies)

    def run_channel(self, channel):
        self.calls.append(("run_channel", channel.n))
        return self._inner.run_channel(channel)


def test_protocol_only_touches_source_interface():
    src = _FakeSource(qmat.diagonal([0.9, 0.1]), 0)
    rep = distill.run_protocol(src, freesets.max_mixed(2), qmat.ket0(), 0.25, 0.1, 16, seed=0)
    assert src.calls == [("measure", 4), ("run_channel", 12)]
    assert rep.n_tomography == 4 and rep.engine == "classical"
    assert rep.certificate.passed


def test_protocol_free_input_gives_zero_rate():
    rep = distill.universal_distill_sim(qmat.maximally_mixed(2), freesets.max_mixed(2), qmat.ket0(), 0.25, 0.1, 16)
    assert rep.achieved_rate == 0.0
    assert rep.certificate.passed


def test_protocol_is_seed_deterministic():
    a = distill.universal_distill_sim(qmat.diagonal([0.9, 0.1]), freesets.max_mixed(2), qmat.ket0(), 0.25, 0.1, 16, seed=3)
    b = distill.universal_distill_sim(qmat.diagonal([0.9, 0.1]), freesets.max_mixed(2), qmat.ket0(), 0.25, 0.1, 16, seed=3)
    assert a.as_dict() == b.as_dict()


def test_protocol_bell_reports_certificate():
    rep = distill.universal_distill_sim(qmat.bell_phi_plus(), freesets.ppt(), qmat.bell_phi_plus(), 0.34, 0.1, 3,
                                        net_size=4, cost=1.0)
    assert rep.engine == "sdp"
    assert rep.certificate.passed
    assert rep.n_tomography == 1


def test_protocol_needs_tomography_copies():
    with pytest.raises(ValidationError):
        distill.universal_distill_sim(qmat.ket0(), freesets.max_mixed(2), qmat.ket0(), 0.05, 0.1, 4)


def test_target_cost_purity():
    assert distill.target_cost(qmat.ket0(), freesets.max_mixed(2)) == pytest.approx(1.0)
    assert distill.target_cost(qmat.diagonal([0.9, 0.1]), freesets.max_mixed(2)) == pytest.approx(
        1 - qmat.binary_entropy(0.9))
