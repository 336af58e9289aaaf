import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinlab import blurring, freesets, qmat
from steinlab.blurring import BlurSpec
from steinlab.errors import ShapeMismatchError, ValidationError


def _brute_blur(X, N, d, n, m):
    # average over all of S_{n+m}, then discard the last m copies
    big = np.kron(X, qmat.tensor_power(qmat.DensityOperator((d,), N), m).matrix if m > 1 else N) if m else X
    k = n + m
    T = big.reshape((d,) * (2 * k))
    acc = np.zeros_like(T)
    perms = list(itertools.permutations(range(k)))
    for p in perms:
        acc += T.transpose(list(p) + [k + i for i in p])
    avg = (acc / len(perms)).reshape(d ** k, d ** k)
    return qmat.ptrace_matrix(avg, (d ** n, d ** m), [0]) if m else avg


@pytest.mark.parametrize("n,m", [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (2, 3)])
def test_exact_blur_matches_group_average(rng, n, m):
    X = qmat.random_state([2] * n, rng)
    N = qmat.random_state(2, rng)
    got = blurring.blur(X, BlurSpec.with_added(n, m, N)).matrix
    assert np.allclose(got, _brute_blur(X.matrix, N.matrix, 2, n, m), atol=1e-12)


def test_single_copy_single_noise(rng):
    X, N = qmat.random_state(3, rng), qmat.random_state(3, rng)
    out = blurring.blur(X, BlurSpec.with_added(1, 1, N))
    assert np.allclose(out.matrix, 0.5 * (X.matrix + N.matrix), atol=1e-14)


def test_symmetrize_examples(rng):
    a, b = qmat.random_state(2, rng), qmat.random_state(2, rng)
    s = blurring.symmetrize(qmat.tensor(a, b))
    want = 0.5 * (np.kron(a.matrix, b.matrix) + np.kron(b.matrix, a.matrix))
    assert np.allclose(s.matrix, want)
    ket01 = qmat.tensor(qmat.ket0(), qmat.pure([0, 1]))
    assert np.allclose(blurring.symmetrize(ket01).matrix, np.diag([0, 0.5, 0.5, 0]))
    assert np.allclose(blurring.symmetrize(s).matrix, s.matrix)
    with pytest.raises(ValidationError):
        blurring.symmetrize(qmat.random_state([2, 3], rng))


def test_no_added_copies_on_symmetric_input(rng):
    X = blurring.symmetrize(qmat.random_state([2, 2, 2], rng))
    out = blurring.blur(X, BlurSpec(3, 0.1, qmat.maximally_mixed(2)))
    assert out.matrix == pytest.approx(X.matrix)


def test_output_commutes_with_permutations(rng):
    X = qmat.random_state([2, 2, 2], rng)
    out = blurring.blur(X, BlurSpec.with_added(3, 2, qmat.random_state(2, rng))).matrix
    for p in itertools.permutations(range(3)):
        g = qmat.basis_permutation_map((2, 2, 2), p)
        assert np.allclose(out[np.ix_(g, g)], out, atol=1e-12)


def test_blur_is_cptp():
    # Choi matrix of the linear map on 2 qubits with one added noise copy
    d, n, m = 2, 2, 1
    D = d ** n
    N = np.diag([0.7, 0.3]).astype(complex)
    choi = np.zeros((D * D, D * D), complex)
    for i in range(D):
        for j in range(D):
            Eij = np.zeros((D, D), complex)
            Eij[i, j] = 1
            choi += np.kron(Eij, blurring._blur_exact(Eij, N, d, n, m))
    assert np.linalg.eigvalsh(choi)[0] > -1e-9
    assert np.allclose(qmat.ptrace_matrix(choi, (D, D), [0]), np.eye(D), atol=1e-9)


def test_blur_maps_ppt_free_states_to_free(rng):
    m = freesets.ppt()
    for _ in range(5):
        sigma = m.random_free(2, rng)
        out = blurring.blur(sigma, BlurSpec.with_added(2, 1, m.tau(1)))
        assert m.membership_check(out, 2)


def test_operator_ordering_with_full_rank_noise(rng):
    rho = qmat.random_state(2, rng)
    c = 0.5 * rho.eigvalsh()[0]
    lam_max = rho.eigvalsh()[-1]
    tau = qmat.maximally_mixed(2)  # tau >= (1/2) 1 >= (1 / (2 lam_max)) rho
    ratio = 1 / (2 * lam_max)
    X = qmat.random_state([2, 2], rng)
    for mm in (1, 2):
        a = blurring.blur(X, BlurSpec.with_added(2, mm, tau)).matrix
        b = blurring.blur(X, BlurSpec.with_added(2, mm, rho)).matrix
        assert np.linalg.eigvalsh(a - ratio ** mm * b)[0] >= -1e-9
    assert c > 0


def test_weights_examples():
    assert np.allclose(blurring.blur_weights(2, 0.5), [1.0, 0.0])
    assert np.allclose(blurring.blur_weights(4, 0.5), [0.5, 0.5, 0.0])
    w = blurring.blur_weights(7, 0.3)
    assert w.sum() == pytest.approx(1.0)


@given(st.integers(1, 12), st.floats(0.01, 0.5))
def test_weights_are_the_lebesgue_measure(n, Delta):
    w = blurring.blur_weights(n, Delta)
    grid = (np.arange(200000) + 0.5) / 200000 * Delta
    hist = np.bincount(np.floor(n * grid + 1e-12).astype(int), minlength=w.size) / grid.size
    assert np.allclose(w, hist[: w.size], atol=2e-4)
    assert w.sum() == pytest.approx(1.0)


def test_hypergeometric_weights_sum_to_one():
    for n, m in [(3, 2), (5, 5), (1, 4)]:
        h = blurring.hypergeometric_weights(n, m)
        assert h.sum() == pytest.approx(1.0)
        assert h @ np.arange(h.size) == pytest.approx(n * m / (n + m))


def test_mixture_deficits(rng):
    rho = qmat.random_state(2, rng)
    Om = qmat.tensor_power(rho, 3)
    tau = qmat.maximally_mixed(2)
    res = blurring.blur_mixture(Om, 0.5, tau, M=0.0, reference=Om)
    assert res.deficit == pytest.approx(1.0)
    res = blurring.blur_mixture(Om, 0.5, tau, M=2.0, reference=Om)
    assert res.deficit <= max(0.0, 1 - min(1.0, 2.0 * res.weights[0])) + 1e-12
    # orthogonal support: blurring at small delta cannot create overlap
    orth = qmat.tensor_power(qmat.pure([0, 1]), 3)
    ref = qmat.tensor_power(qmat.ket0(), 3)
    res = blurring.blur_mixture(orth, 0.3, qmat.pure([0, 1]), M=4.0, reference=ref)
    assert res.deficit == pytest.approx(1.0)


def test_trend_scan_with_own_noise(rng):
    rho_bar = qmat.diagonal([0.8, 0.2])
    seq = [qmat.diagonal([0.8 + 0.1 / n, 0.2 - 0.1 / n]) for n in (2, 3)]
    Oms = [qmat.tensor_power(r, n) for r, n in zip(seq, (2, 3))]
    tab = blurring.blur_trend_scan(seq, Oms, 0.5, [1, 2, 4])
    assert tab.monotone_in_M
    assert all(d <= 1e-12 for n, M, d in tab.rows if M >= 1)
    with pytest.raises(ValidationError):
        blurring.blur_trend_scan(seq, Oms[:1], 0.5, [1])
    assert rho_bar.dim == 2


def test_monte_carlo_against_exact(rng):
    X = qmat.random_state([2, 2, 2], rng)
    N = qmat.random_state(2, rng)
    exact = blurring.blur(X, BlurSpec.with_added(3, 2, N)).matrix
    mc = blurring.blur_detail(X, BlurSpec.with_added(3, 2, N, mode="monte_carlo", samples=4000, seed=3))
    assert np.max(np.abs(mc.state.matrix - exact)) <= 5 * mc.stderr + 1e-12
    again = blurring.blur_detail(X, BlurSpec.with_added(3, 2, N, mode="monte_carlo", samples=4000, seed=3))
    assert np.array_equal(again.state.matrix, mc.state.matrix)


def test_monte_carlo_sample_sizes_consistent(rng):
    X = qmat.random_state([2, 2, 2], rng)
    tau = qmat.maximally_mixed(2)
    ref = qmat.tensor_power(qmat.diagonal([0.6, 0.4]), 3).matrix

    def deficit(samples):
        r = blurring.blur_detail(X, BlurSpec.with_added(3, 1, tau, mode="monte_carlo", samples=samples, seed=1))
        return qmat.positive_part_trace(ref - r.state.matrix), r.stderr

    d1, e1 = deficit(10_000)
    d2, e2 = deficit(100_000)
    # trace-norm deficit moves by at most D * max-entry error
    assert abs(d1 - d2) <= 3 * 8 * math.hypot(e1, e2)


def test_spec_validation():
    tau = qmat.maximally_mixed(2)
    with pytest.raises(ValidationError):
        BlurSpec(2, 0.7, tau)
    with pytest.raises(ValidationError):
        BlurSpec(2, 0.3, tau, mode="bogus")
    with pytest.raises(ShapeMismatchError):
        blurring.blur(qmat.maximally_mixed([2, 2]), BlurSpec(3, 0.3, tau))
    with pytest.raises(ValidationError):
        blurring.blur(qmat.maximally_mixed([2] * 7), BlurSpec(7, 0.3, tau))
