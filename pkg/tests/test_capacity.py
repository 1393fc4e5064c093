import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamrate import ChannelTensor
from beamrate.capacity import (
    CovarianceSet, PowerAllocation, average_sum_capacity, bc_capacity_with_beams, bc_rate_eval,
    dpc_sum_capacity, factorize_beams, hsub_wideband_capacity, kkt_residual, mac_objective,
    mac_to_bc, waterfill,
)
from beamrate.errors import SingularityError

from conftest import crandn, flat_tensor


def grid_oracle_k2(H, rho, step=1e-3):
    """Brute-force max over lam1 + lam2 = rho of log2 det(I + H^H diag(lam) H)."""
    H = np.asarray(H, dtype=complex)
    M = H.shape[1]
    best = -np.inf
    for l1 in np.arange(0.0, rho + step / 2, step):
        lam = np.array([l1, rho - l1])
        A = np.eye(M) + H.conj().T @ np.diag(lam) @ H
        best = max(best, np.log2(np.linalg.det(A).real))
    return best


# --- dpc_sum_capacity ------------------------------------------------------

def test_scalar_channel():
    res = dpc_sum_capacity([[1.0]], 1.0)
    assert res.value == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(res.allocation.powers, [1.0])


def test_identity_channel_equal_split():
    res = dpc_sum_capacity(np.eye(2), 2.0)
    assert res.value == pytest.approx(2.0, abs=1e-10)
    np.testing.assert_allclose(res.allocation.powers, [1.0, 1.0], atol=1e-8)


def test_two_users_one_antenna_any_split():
    H = np.ones((2, 1))
    res = dpc_sum_capacity(H, 3.0)
    assert res.value == pytest.approx(2.0, abs=1e-10)
    assert res.allocation.powers.sum() == pytest.approx(3.0)
    assert grid_oracle_k2(H, 3.0) == pytest.approx(2.0, abs=1e-9)


def test_matches_grid_oracle(rng):
    for _ in range(5):
        H = crandn(rng, 2, 2)
        rho = float(rng.uniform(0.2, 10))
        assert abs(dpc_sum_capacity(H, rho).value - grid_oracle_k2(H, rho)) < 5e-3


def test_zero_power_skips_solver(rng):
    res = dpc_sum_capacity(crandn(rng, 3, 4), 0.0)
    assert res.value == 0.0 and res.iterations == 0
    np.testing.assert_array_equal(res.allocation.powers, 0.0)


def test_trace_monotone_and_kkt(rng):
    for _ in range(10):
        K = int(rng.integers(2, 6))
        H = crandn(rng, K, int(rng.integers(K, 9)))
        res = dpc_sum_capacity(H, float(10 ** rng.uniform(-1, 2)))
        assert res.converged
        assert np.all(np.diff(res.trace) >= -1e-12)
        assert kkt_residual(H @ H.conj().T, res.allocation.powers) <= 1e-6


def test_monotone_in_rho(rng):
    H = crandn(rng, 3, 5)
    values = [dpc_sum_capacity(H, r).value for r in (0.1, 1, 3, 10, 100)]
    assert np.all(np.diff(values) >= -1e-9)


@settings(max_examples=40, deadline=None)
@given(K=st.integers(1, 4), extra=st.integers(0, 3), log_rho=st.floats(-2, 3),
       seed=st.integers(0, 2**31))
def test_between_tdma_and_cooperative_bounds(K, extra, log_rho, seed):
    H = crandn(np.random.default_rng(seed), K, K + extra)
    rho = 10.0 ** log_rho
    value = dpc_sum_capacity(H, rho).value
    tdma = np.log2(1 + rho * np.max(np.sum(np.abs(H) ** 2, axis=1)))
    # full cooperation among receivers, power split freely over M inputs, bounds DPC
    s = np.linalg.svd(H, compute_uv=False)
    coop = np.sum(np.log2(1 + waterfill(s**2, rho) * s**2))
    assert tdma - 1e-8 <= value <= coop + 1e-8


def test_waterfill_basic():
    np.testing.assert_allclose(waterfill([1.0, 1.0], 2.0), [1.0, 1.0])
    np.testing.assert_allclose(waterfill([2.0, 0.5], 1.0), [1.0, 0.0])
    np.testing.assert_allclose(waterfill([0.0, 1.0], 1.0), [0.0, 1.0])
    np.testing.assert_allclose(waterfill([1.0, 1.0], 0.0), [0.0, 0.0])


def test_mac_objective_formula(rng):
    H = crandn(rng, 3, 4)
    lam = rng.uniform(0, 1, 3)
    direct = np.log2(np.linalg.det(np.eye(4) + H.conj().T @ np.diag(lam) @ H).real)
    assert mac_objective(H @ H.conj().T, lam) == pytest.approx(direct, abs=1e-12)


# --- averaging ---------------------------------------------------------------

def test_average_identical_subcarriers(rng):
    H = crandn(rng, 2, 3)
    t = flat_tensor(H, L=4)
    assert average_sum_capacity(t, 2.0) == pytest.approx(dpc_sum_capacity(H, 2.0).value, abs=1e-12)


def test_average_zero_rho(rng):
    assert average_sum_capacity(ChannelTensor(crandn(rng, 3, 2, 3)), 0.0) == 0.0


def test_average_of_two(rng):
    data = crandn(rng, 2, 2, 3)
    v = [dpc_sum_capacity(data[l], 1.5).value for l in range(2)]
    assert average_sum_capacity(ChannelTensor(data), 1.5) == pytest.approx(np.mean(v), abs=1e-12)


# --- factorize_beams ---------------------------------------------------------

def test_factorize_orthonormal(rng):
    U0, _ = np.linalg.qr(crandn(rng, 5, 3))
    f = factorize_beams(U0)
    # positive diagonal fixes the phase, so U is U0 up to per-column phase
    np.testing.assert_allclose(np.abs(f.Lmat), np.eye(3), atol=1e-12)
    np.testing.assert_allclose(f.U @ f.Lmat, U0, atol=1e-12)


def test_factorize_scaled():
    U0 = np.eye(4)[:, :2]
    f = factorize_beams(2 * U0)
    np.testing.assert_allclose(f.Lmat, 2 * np.eye(2), atol=1e-12)
    np.testing.assert_allclose(f.U, U0, atol=1e-12)


def test_factorize_positive_diagonal(rng):
    B = crandn(rng, 6, 4)
    f = factorize_beams(B)
    d = np.diag(f.Lmat)
    assert np.all(d.real > 0) and np.allclose(d.imag, 0)
    np.testing.assert_allclose(np.tril(f.Lmat, -1), 0, atol=1e-14)
    np.testing.assert_allclose(f.U.conj().T @ f.U, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(f.U @ f.Lmat, B, atol=1e-12)


def test_factorize_duplicate_columns():
    b = np.array([1.0, 1.0, 0.0])
    with pytest.raises(SingularityError):
        factorize_beams(np.column_stack([b, b]))


# --- beamformed capacity ----------------------------------------------------

def test_identity_beams_give_dpc(rng):
    H = crandn(rng, 3, 4)
    res, _ = bc_capacity_with_beams(H, np.eye(4), 2.0)
    assert res.value == pytest.approx(dpc_sum_capacity(H, 2.0).value, abs=1e-10)


def test_single_user_single_beam(rng):
    h = crandn(rng, 5)
    b = crandn(rng, 5)
    b /= np.linalg.norm(b)
    rho = 1.7
    expected = np.log2(1 + rho * abs(np.vdot(h.conj(), b)) ** 2)
    res, _ = bc_capacity_with_beams(h[None, :], b[:, None], rho)
    assert res.value == pytest.approx(expected, abs=1e-10)


def test_beams_orthogonal_to_users():
    H = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
    B = np.eye(4)[:, 2:]
    assert bc_capacity_with_beams(H, B, 5.0)[0].value == pytest.approx(0.0, abs=1e-14)


def test_only_span_matters(rng):
    H, B = crandn(rng, 3, 6), crandn(rng, 6, 4)
    R = crandn(rng, 4, 4)
    a = bc_capacity_with_beams(H, B, 2.0)[0].value
    b = bc_capacity_with_beams(H, B @ R, 2.0)[0].value
    assert abs(a - b) <= 1e-8


def test_nested_subspaces(rng):
    H, B2 = crandn(rng, 2, 6), crandn(rng, 6, 4)
    B1 = B2[:, :2]
    assert bc_capacity_with_beams(H, B1, 3.0)[0].value <= \
        bc_capacity_with_beams(H, B2, 3.0)[0].value + 1e-9


# --- duality -----------------------------------------------------------------

def test_duality_single_user(rng):
    h = crandn(rng, 1, 3)
    B = np.eye(3)
    res, fact = bc_capacity_with_beams(h, B, 2.0)
    covs = mac_to_bc(h @ fact.U, res.allocation, fact)
    he = (h @ fact.U)[0]
    expected = 2.0 * np.outer(he.conj(), he) / np.vdot(he, he).real
    np.testing.assert_allclose(covs.effective[0], expected, atol=1e-10)
    assert bc_rate_eval(h, B, covs) == pytest.approx(np.log2(1 + 2.0 * np.sum(np.abs(h) ** 2)))


def test_duality_zero_allocation(rng):
    H, B = crandn(rng, 2, 3), np.eye(3)
    fact = factorize_beams(B)
    covs = mac_to_bc(H, PowerAllocation(np.zeros(2), 0.0), fact)
    assert not np.any(covs.beam)
    assert bc_rate_eval(H, B, covs) == 0.0


def _mac_user_rates(H_eff, lam):
    """Uplink per-user rates, user i decoded against users j > i."""
    K, N = H_eff.shape
    g = H_eff.conj()
    out = []
    for i in range(K):
        A = np.eye(N) + sum(lam[j] * np.outer(g[j], g[j].conj()) for j in range(i + 1, K))
        out.append(np.log2(1 + lam[i] * np.vdot(g[i], np.linalg.solve(A, g[i])).real))
    return np.array(out)


def _bc_user_rates(R, Q):
    """Downlink per-user rates through det ratios, user i hearing users j < i."""
    out = []
    for i in range(len(Q)):
        r = R[i]
        before = 1 + (r @ sum(Q[:i], np.zeros_like(Q[0])) @ r.conj()).real
        after = 1 + (r @ sum(Q[: i + 1]) @ r.conj()).real
        out.append(np.log2(after / before))
    return np.array(out)


def test_duality_random_instance(rng):
    H, B, rho = crandn(rng, 3, 6), crandn(rng, 6, 4), 2.0
    res, fact = bc_capacity_with_beams(H, B, rho)
    covs = mac_to_bc(H @ fact.U, res.allocation, fact)
    assert abs(bc_rate_eval(H, B, covs) - res.value) <= 1e-6
    np.testing.assert_allclose(_bc_user_rates(H @ B, covs.beam),
                               _mac_user_rates(H @ fact.U, res.allocation.powers), atol=1e-8)
    power = sum(np.trace(B @ q @ B.conj().T).real for q in covs.beam)
    assert power <= rho + 1e-8
    for q in covs.beam:
        np.testing.assert_allclose(q, q.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(q).min() >= -1e-10


def test_rate_eval_split_invariance(rng):
    H, B = crandn(rng, 2, 3), np.eye(3)
    Q = np.zeros((2, 3, 3), dtype=complex)
    x = crandn(rng, 3, 2)
    Q[0] = x @ x.conj().T
    # the same total for one user, computed once whole and once as a sum of parts
    parts = [np.outer(x[:, c], x[:, c].conj()) for c in range(2)]
    Q2 = Q.copy()
    Q2[0] = parts[0] + parts[1]
    assert bc_rate_eval(H, B, Q) == pytest.approx(bc_rate_eval(H, B, Q2), abs=1e-12)


def test_rate_eval_single_user(rng):
    h = crandn(rng, 1, 4)
    rho = 3.0
    Q = rho * np.outer(h[0].conj(), h[0]) / np.sum(np.abs(h) ** 2)
    value = bc_rate_eval(h, np.eye(4), CovarianceSet(Q[None], Q[None]))
    assert value == pytest.approx(np.log2(1 + rho * np.sum(np.abs(h) ** 2)), abs=1e-12)


# --- wideband ---------------------------------------------------------------

def test_wideband_single_subcarrier(rng):
    H, B = crandn(rng, 2, 4), crandn(rng, 4, 3)
    t = ChannelTensor(H[None])
    expected = bc_capacity_with_beams(H, B, 2.0)[0].value
    assert hsub_wideband_capacity(t, B, 2.0) == pytest.approx(expected, abs=1e-12)


def test_wideband_flat(rng):
    H, B = crandn(rng, 2, 4), crandn(rng, 4, 3)
    expected = bc_capacity_with_beams(H, B, 2.0)[0].value
    assert hsub_wideband_capacity(flat_tensor(H, 5), B, 2.0) == pytest.approx(expected, abs=1e-12)


def test_wideband_identity_beams(rng):
    t = ChannelTensor(crandn(rng, 4, 2, 3))
    assert hsub_wideband_capacity(t, np.eye(3), 1.0) == pytest.approx(
        average_sum_capacity(t, 1.0), abs=1e-10)


def test_converges_when_objective_is_flat():
    # strong users at low power: marginals of hundreds of bits per unit power
    # make the objective flat to machine precision near the optimum
    r = np.random.default_rng(41)
    for _ in range(200):
        K = int(r.integers(3, 9))
        H = crandn(r, K, int(r.integers(K, 33))) * 10 ** r.uniform(-1, 1, size=(K, 1))
        rho = 10 ** r.uniform(-6, -1)
        res = dpc_sum_capacity(H, rho)
        assert res.converged
        assert kkt_residual(H @ H.conj().T, res.allocation.powers) <= 1e-6
        assert np.all(np.diff(res.trace) >= -1e-12)
