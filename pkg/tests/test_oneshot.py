import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from steinlab import classical, freesets, oneshot, qmat
from steinlab.errors import ValidationError


def test_dh_of_state_with_itself(rng):
    for eps in (0.1, 0.5, 0.9):
        r = qmat.random_state(3, rng)
        assert oneshot.dh_eps(r, r, eps).value_bits == pytest.approx(-math.log2(1 - eps), abs=1e-8)


def test_dh_sdp_agrees_with_exact_path(rng):
    U = qmat.random_unitary(3, rng)
    for _ in range(5):
        p, q = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        r = qmat.DensityOperator((3,), U @ np.diag(p) @ U.conj().T)
        s = qmat.DensityOperator((3,), U @ np.diag(q) @ U.conj().T)
        exact = oneshot.dh_eps(r, s, 0.25)
        sdp = oneshot.dh_eps(r, s, 0.25, force_sdp=True)
        assert exact.value_bits == pytest.approx(sdp.value_bits, abs=1e-6)
        assert sdp.certificate_gap < 1e-7


def test_dh_sdp_certificate_on_noncommuting(rng):
    r, s = qmat.random_state(2, rng), qmat.random_state(2, rng)
    res = oneshot.dh_eps(r, s, 0.2)
    assert res.certificate_gap < 1e-7
    E = res.effect.matrix
    assert np.real(np.trace(E @ r.matrix)) >= 0.8 - 1e-7
    assert np.real(np.trace(E @ s.matrix)) == pytest.approx(res.beta, abs=1e-7)


@pytest.mark.parametrize("n", [1, 4, 8])
def test_dh_matches_type_class_engine(n):
    p, q = np.array([0.8, 0.2]), np.array([0.35, 0.65])
    P = np.array([1.0])
    Q = np.array([1.0])
    for _ in range(n):
        P, Q = np.kron(P, p), np.kron(Q, q)
    r, s = qmat.diagonal(P, (2,) * n), qmat.diagonal(Q, (2,) * n)
    got = oneshot.dh_eps(r, s, 0.3).value_bits
    assert got == pytest.approx(classical.beta_simple(p, q, n, 0.3).value_bits, abs=1e-9)


def test_umegaki_against_logm(rng):
    r, s = qmat.random_state(3, rng), qmat.random_state(3, rng)
    want = np.real(np.trace(r.matrix @ (sla.logm(r.matrix) - sla.logm(s.matrix)))) / math.log(2)
    assert oneshot.umegaki(r, s) == pytest.approx(want, abs=1e-8)
    assert oneshot.umegaki(qmat.maximally_mixed(2), qmat.ket0()) == math.inf


def test_dmax_closed_form(rng):
    r, s = qmat.random_state(3, rng), qmat.random_state(3, rng)
    w, V = np.linalg.eigh(s.matrix)
    inv = (V / np.sqrt(w)) @ V.conj().T
    want = math.log2(np.linalg.eigvalsh(inv @ r.matrix @ inv)[-1])
    assert oneshot.dmax(r, s) == pytest.approx(want, abs=1e-9)
    assert oneshot.dmax(qmat.maximally_mixed(2), qmat.ket0()) == math.inf


def test_smoothing_orders(rng):
    r, s = qmat.random_state(2, rng), qmat.random_state(2, rng)
    full = oneshot.dmax(r, s)
    small = oneshot.dmax_eps_purified(r, s, 0.1)
    big = oneshot.dmax_eps_purified(r, s, 0.4)
    assert big <= small + 1e-7 <= full + 2e-7
    assert oneshot.dtilde_max(r, s, 0.3) <= oneshot.dtilde_max(r, s, 0.1) + 1e-9


def test_dtilde_max_definition(rng):
    r, s = qmat.random_state(3, rng), qmat.random_state(3, rng)
    lam = oneshot.dtilde_max(r, s, 0.2)
    assert qmat.positive_part_trace(r.matrix - 2 ** lam * s.matrix) <= 0.2 + 1e-9
    assert qmat.positive_part_trace(r.matrix - 2 ** (lam - 1e-6) * s.matrix) > 0.2 - 1e-6


def test_f2_and_g():
    assert oneshot.f2_binary_fidelity(0.3, 0.3) == pytest.approx(1.0)
    assert oneshot.f2_binary_fidelity(0.0, 1.0) == pytest.approx(0.0)
    assert oneshot.g_continuity(0) == 0.0
    assert oneshot.g_continuity(1.0) == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        oneshot.g_continuity(-0.1)


def _G_grid(eps, delta):
    # dense grid minimisation as an independent route
    nu = np.linspace(0, delta, 200001)[1:-1]
    f2 = (np.sqrt((eps - delta) * (1 - eps + nu)) + np.sqrt((1 - eps + delta) * (eps - nu))) ** 2
    return float(np.min((1 - eps) * f2 / (nu * (delta - nu) ** 2)))


@pytest.mark.parametrize("eps,delta", [(0.3, 0.15), (0.5, 0.25), (0.9, 0.1), (0.2, 0.19)])
def test_G_constant_against_grid(eps, delta):
    g = oneshot.G_constant(eps, delta)
    assert g.value == pytest.approx(_G_grid(eps, delta), rel=1e-6)
    assert g.value <= g.simplified
    assert 0 < g.nu_star < delta


@given(st.floats(0.02, 0.98), st.floats(0.02, 0.98))
def test_G_below_closed_form(e, f):
    g = oneshot.G_constant(e, e * f)
    assert g.value <= oneshot.g_simplified(e, e * f) * (1 + 1e-12)


def test_composite_lp_and_sdp_routes_agree():
    states = [qmat.diagonal([0.9, 0.1]), qmat.diagonal([0.8, 0.2])]
    model = freesets.max_mixed(2)
    lp = oneshot.dh_eps_composite(states, model, 1, 0.3)
    mats = [s.matrix for s in states]
    sdp = oneshot._composite_sdp(states, mats, model, 1, 0.3)
    assert lp.beta == pytest.approx(sdp.beta, abs=1e-7)
    assert lp.minimax_gap is not None and lp.minimax_gap < 1e-6


def test_composite_against_ppt_singleton():
    phi = qmat.bell_phi_plus()
    res = oneshot.dh_eps_composite([phi], freesets.ppt(), 1, 0.1)
    # the best test has beta = (1 - eps) / 2 for the Bell state against PPT
    assert res.beta == pytest.approx(0.45, abs=1e-6)
    assert res.minimax_gap < 1e-6


def test_eps_range():
    r = qmat.ket0()
    with pytest.raises(ValidationError):
        oneshot.dh_eps(r, r, 0.0)
    with pytest.raises(ValidationError):
        oneshot.dmax_eps_purified(r, r, 1.0)
