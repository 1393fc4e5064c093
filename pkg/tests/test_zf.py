import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamrate import build_codebook, extract_beams
from beamrate.zf import quantize_channel, quantize_users, sinr, zf_precoder, zf_sum_rate

from conftest import crandn


def test_projection_identity_for_real_orthonormal_beams(rng):
    B, _ = np.linalg.qr(rng.standard_normal((5, 3)))
    h = B @ crandn(rng, 3)
    np.testing.assert_allclose(quantize_channel(h, B), h, atol=1e-12)


def test_coordinate_projection():
    h = np.array([1.0, 1.0]) / np.sqrt(2)
    np.testing.assert_allclose(quantize_channel(h, np.array([[1.0], [0.0]])),
                               [1 / np.sqrt(2), 0.0], atol=1e-15)


def test_reported_gains_are_preserved(rng):
    # oracle: normal equations solved through a full pseudoinverse
    h, B = crandn(rng, 6), crandn(rng, 6, 3)
    h_hat = quantize_channel(h, B)
    a = np.linalg.pinv(B.T @ B) @ (B.T @ h)
    np.testing.assert_allclose(h_hat, B @ a, atol=1e-10)
    assert np.linalg.norm(B.T @ h_hat - B.T @ h) <= 1e-10


def test_hermitian_flag_is_orthogonal_projection(rng):
    h, B = crandn(rng, 6), crandn(rng, 6, 3)
    P = B @ np.linalg.pinv(B)
    np.testing.assert_allclose(quantize_channel(h, B, hermitian=True), P @ h, atol=1e-12)


@pytest.mark.parametrize("M", [2, 5, 8])
def test_full_orthonormal_codebook_recovers_channel(rng, M):
    h = crandn(rng, M)
    C = build_codebook(M, M).columns
    assert np.linalg.norm(quantize_channel(h, C) - h) <= 1e-9


def test_no_beams_gives_zero(rng):
    np.testing.assert_array_equal(quantize_channel(crandn(rng, 3), np.zeros((3, 0))), 0)


def test_singular_gram_falls_back():
    # two beams whose transpose Gram matrix is singular: c^T c = 0 for both
    b1 = np.array([1.0, 1j]) / np.sqrt(2)
    B = np.column_stack([b1, b1.conj()])
    h = np.array([0.3, -0.2 + 0.1j])
    h_hat = quantize_channel(h, B)
    assert np.all(np.isfinite(h_hat))
    assert np.linalg.norm(B.T @ h_hat - B.T @ h) <= 1e-10


def test_quantize_users_stacks_rows(rng):
    cb = build_codebook(4, 8)
    H = crandn(rng, 2, 4)
    sels = [extract_beams(cb, [1, 2]), extract_beams(cb, [5])]
    q = quantize_users(H, sels)
    assert q.indices == ((1, 2), (5,))
    np.testing.assert_allclose(q.H_hat[1], quantize_channel(H[1], sels[1].B))
    np.testing.assert_allclose(q.gains[0], sels[0].B.T @ H[0])


def test_precoder_identity():
    np.testing.assert_allclose(zf_precoder(np.eye(2)).P, np.eye(2), atol=1e-15)


def test_precoder_removes_scale():
    np.testing.assert_allclose(zf_precoder(np.diag([2.0, 1.0])).P, np.eye(2), atol=1e-15)


def test_precoder_rank_one_hand_oracle():
    Hh = np.array([[1.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(np.linalg.pinv(Hh), [[0.5, 0.5], [0.0, 0.0]])
    pre = zf_precoder(Hh)
    np.testing.assert_allclose(pre.P, [[1.0, 1.0], [0.0, 0.0]], atol=1e-15)
    assert pre.active.all()


def test_zero_row_is_inactive():
    pre = zf_precoder(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert pre.active.tolist() == [True, False]
    np.testing.assert_array_equal(pre.P[:, 1], 0)


def test_sum_rate_identity():
    rate, s = zf_sum_rate(np.eye(2), np.eye(2), 2.0)
    np.testing.assert_allclose(s, [1.0, 1.0])
    assert rate == pytest.approx(2.0)


def test_sum_rate_diagonal_hand():
    H = np.diag([2.0, 1.0])
    rate, s = zf_sum_rate(H, H, 2.0)
    np.testing.assert_allclose(s, [4.0, 1.0])
    assert rate == pytest.approx(np.log2(5) + 1, abs=1e-12)


def test_sum_rate_rank_one_hand():
    H = np.array([[1.0, 0.0], [1.0, 0.0]])
    # p1 = p2 = e1, signal (rho/K)*1 = 1, interference 1: SINR = 1/2
    rate, s = zf_sum_rate(H, H, 2.0)
    np.testing.assert_allclose(s, [0.5, 0.5])
    assert rate == pytest.approx(2 * np.log2(1.5), abs=1e-12)


def test_perfect_csi_kills_cross_terms(rng):
    for _ in range(10):
        K = int(rng.integers(1, 5))
        H = crandn(rng, K, K + int(rng.integers(0, 4)))
        P = zf_precoder(H).P
        cross = np.abs(H @ P) * (1 - np.eye(K))
        assert cross.max() <= 1e-9
        s = sinr(H, P, 3.0)
        np.testing.assert_allclose(s, 3.0 / K * np.abs(np.diag(H @ P)) ** 2, rtol=1e-12)


def test_sinr_uses_transpose_products():
    h = np.array([[1.0, 1j]]) / np.sqrt(2)
    p = np.array([[1.0], [1j]]) / np.sqrt(2)
    # h^T p = (1 + j*j)/2 = 0, while h^H p = 1
    assert sinr(h, p, 1.0)[0] == pytest.approx(0.0, abs=1e-15)


def test_interference_limited_plateau(rng):
    H = crandn(rng, 3, 5)
    H_hat = H + 0.3 * crandn(rng, 3, 5)
    hi = zf_sum_rate(H, H_hat, 1e8)[0]
    lo = zf_sum_rate(H, H_hat, 1e6)[0]
    assert 0 <= hi - lo < 1e-3


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), K=st.integers(1, 4))
def test_sum_rate_monotone_in_rho(seed, K):
    r = np.random.default_rng(seed)
    H = crandn(r, K, K + 2)
    H_hat = H + 0.5 * crandn(r, K, K + 2)
    rates = [zf_sum_rate(H, H_hat, rho)[0] for rho in (0.0, 0.1, 1.0, 10.0, 1e3)]
    assert np.all(np.diff(rates) >= -1e-12)
