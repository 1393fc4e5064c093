"""Broadcast-channel sum-capacity with and without a beamforming front-end.

Single-antenna users, channel rows ``h_i^T``.  The dual uplink problem

    maximize  log2 det(I + H^H diag(lam) H)  s.t.  lam >= 0, sum(lam) <= rho

is solved by sum-power iterative waterfilling.  Everything runs on the
``K x K`` Gram matrix ``G = H H^H``, so the cost does not grow with the
number of antennas or beams after ``G`` is formed.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from beamrate.errors import NumericError, SingularityError, ValidationError

__all__ = [
    "PowerAllocation", "CapacityResult", "BeamFactorization", "CovarianceSet",
    "dpc_sum_capacity", "average_sum_capacity", "factorize_beams",
    "bc_capacity_with_beams", "mac_to_bc", "bc_rate_eval", "hsub_wideband_capacity",
    "mac_objective", "kkt_residual", "waterfill",
]

log = logging.getLogger(__name__)

LN2 = np.log(2.0)
RANK_TOL = 1e-10
MAX_ITER = 500
REL_TOL = 1e-10
KKT_TOL = 1e-6
ACTIVE_TOL = 1e-8
TRANSFER_SLACK = 2e-13  # bits of objective rounding tolerated by the fallback step


@dataclass(frozen=True)
class PowerAllocation:
    powers: np.ndarray
    budget: float


@dataclass(frozen=True)
class CapacityResult:
    """Sum-rate in bits/s/Hz with the dual uplink power allocation.

    ``trace`` lists the objective after every accepted iteration, starting
    from the initial point.  It is nondecreasing up to ``TRANSFER_SLACK``
    bits of rounding.
    """

    value: float
    allocation: PowerAllocation
    iterations: int
    converged: bool
    trace: tuple = field(default=(), repr=False)


@dataclass(frozen=True, eq=False)
class BeamFactorization:
    """``B = U @ Lmat`` with orthonormal ``U`` and upper-triangular ``Lmat``."""

    U: np.ndarray
    Lmat: np.ndarray


@dataclass(frozen=True, eq=False)
class CovarianceSet:
    """Downlink covariances, shape ``(K, N, N)``.

    ``effective`` lives in the orthonormal basis ``U``; ``beam`` is in the
    coordinates of the beam matrix ``B`` (``Q_i = L^-1 Qt_i L^-H``), so the
    transmit covariance of user ``i`` is ``B @ beam[i] @ B^H``.
    """

    effective: np.ndarray
    beam: np.ndarray


def _as_matrix(H):
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2:
        raise ValidationError(f"expected a 2-D channel matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValidationError("channel matrix contains NaN or Inf")
    return H


def _gram(H):
    G = H @ H.conj().T
    return 0.5 * (G + G.conj().T)


def mac_objective(G, lam):
    """``log2 det(I + diag(sqrt lam) G diag(sqrt lam))`` in bits."""
    s = np.sqrt(np.maximum(lam, 0.0))
    A = np.eye(len(lam)) + s[:, None] * G * s[None, :]
    sign, logdet = np.linalg.slogdet(A)
    return logdet / LN2


def _marginals(G, lam):
    """Per-user derivative of the objective, in nats: ``diag(G (I + diag(lam) G)^-1)``."""
    K = len(lam)
    X = np.linalg.solve((np.eye(K) + lam[:, None] * G).T, G.T).T
    return np.real(np.diag(X))


def waterfill(gains, budget):
    """Powers ``(mu - 1/g)^+`` summing to ``budget``; zero for ``g <= 0``."""
    gains = np.asarray(gains, dtype=float)
    lam = np.zeros_like(gains)
    pos = np.flatnonzero(gains > 0)
    if budget <= 0 or pos.size == 0:
        return lam
    inv = 1.0 / gains[pos]
    order = np.argsort(inv, kind="stable")
    inv_sorted = inv[order]
    csum = np.cumsum(inv_sorted)
    n = np.arange(1, pos.size + 1)
    mu = (budget + csum) / n
    # largest active set whose water level clears every member's floor
    active = np.flatnonzero(mu > inv_sorted)[-1] + 1
    level = mu[active - 1]
    lam[pos] = np.maximum(level - inv, 0.0)
    return lam


def kkt_residual(G, lam):
    """Equal-marginal violation in bits.

    Active users (``lam > 1e-8``) should share one marginal rate; inactive
    users must not exceed it.
    """
    m = _marginals(G, lam) / LN2
    active = lam > ACTIVE_TOL
    if not np.any(active):
        return 0.0
    top = m[active].max()
    spread = top - m[active].min()
    excess = np.max(m[~active] - top, initial=0.0)
    return float(max(spread, excess))


def _transfer_step(G, lam, m, f):
    """Shift power from the weakest active user to the strongest marginal.

    Fallback for when the waterfilling direction no longer improves the
    objective.  Close to the optimum the objective is flat to machine
    precision, so the shift is chosen from the derivative instead: bisection
    on the directional derivative ``m_i - m_j`` finds the best amount along
    ``e_i - e_j``.  The result is accepted unless the objective drops by
    more than rounding noise.
    """
    active = np.flatnonzero(lam > 0)
    i = int(np.argmax(m))
    j = int(active[np.argmin(m[active])])
    if i == j or m[i] <= m[j]:
        return lam, f

    def shifted(amount):
        trial = lam.copy()
        trial[i] += amount
        trial[j] = max(lam[j] - amount, 0.0)
        return trial

    def slope(amount):
        mm = _marginals(G, shifted(amount))
        return mm[i] - mm[j]

    lo, hi = 0.0, lam[j]
    if slope(hi) >= 0:
        lo = hi
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if slope(mid) > 0:
                lo = mid
            else:
                hi = mid
    trial = shifted(lo)
    ft = mac_objective(G, trial)
    if ft < f - TRANSFER_SLACK:
        return lam, f
    return trial, ft


def _solve_gram(G, rho, max_iter, tol):
    K = G.shape[0]
    if rho <= 0 or not np.any(np.diag(G).real > 0):
        zeros = np.zeros(K)
        return CapacityResult(0.0, PowerAllocation(zeros, float(rho)), 0, True, (0.0,))

    lam = np.where(np.diag(G).real > 0, 1.0, 0.0)
    lam *= rho / lam.sum()
    f = mac_objective(G, lam)
    trace = [f]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        m = _marginals(G, lam)
        # single-user gain of k with everyone else fixed (Sherman-Morrison)
        g = m / np.maximum(1.0 - lam * m, np.finfo(float).tiny)
        target = waterfill(g, rho)
        step = target - lam

        # full waterfilling step can overshoot; 1/K averaging is the safe floor
        t = 1.0
        cand, fc = lam, f
        while t > 1.0 / K:
            trial = lam + t * step
            ft = mac_objective(G, trial)
            if ft >= f:
                cand, fc = trial, ft
                break
            t *= 0.5
        else:
            trial = lam + step / K
            ft = mac_objective(G, trial)
            if ft > f:
                cand, fc = trial, ft
            else:
                cand, fc = _transfer_step(G, lam, m, f)

        rel = (fc - f) / max(abs(fc), 1e-300)
        stalled = np.array_equal(cand, lam)
        lam, f = cand, fc
        trace.append(f)
        if rel < tol:
            if kkt_residual(G, lam) <= KKT_TOL:
                converged = True
                break
            if stalled:
                break

    lam = np.maximum(lam, 0.0)
    return CapacityResult(float(max(f, 0.0)), PowerAllocation(lam, float(rho)), it,
                          converged, tuple(trace))


def dpc_sum_capacity(H, rho, max_iter=MAX_ITER, tol=REL_TOL):
    """Downlink sum-capacity of the ``K x M`` channel ``H`` at SNR ``rho``.

    Parameters
    ----------
    H : array_like, shape (K, M)
        Rows are the users' channels.
    rho : float
        Linear sum-power budget.

    Returns
    -------
    CapacityResult
        ``converged`` is False if the iteration cap was hit; ``value`` then
        holds the best objective found.
    """
    H = _as_matrix(H)
    if rho < 0:
        raise ValidationError(f"rho must be nonnegative, got {rho}")
    res = _solve_gram(_gram(H), float(rho), max_iter, tol)
    if not res.converged:
        log.warning("waterfilling stopped after %d iterations without converging", res.iterations)
    return res


def average_sum_capacity(t, rho, *, details=False):
    """Mean over subcarriers of the per-subcarrier sum-capacity.

    With ``details=True`` returns ``(value, all_converged)``.
    """
    results = [dpc_sum_capacity(t.H(l), rho) for l in range(t.L)]
    value = float(np.mean([r.value for r in results]))
    if details:
        return value, all(r.converged for r in results)
    return value


def factorize_beams(B):
    """Thin QR of ``B`` with a positive real diagonal in ``Lmat``.

    Raises :class:`SingularityError` when the smallest singular value is not
    above ``1e-10`` times the largest.
    """
    B = np.asarray(B, dtype=complex)
    M, N = B.shape
    if N == 0:
        return BeamFactorization(np.zeros((M, 0), dtype=complex), np.zeros((0, 0), dtype=complex))
    if N > M:
        raise SingularityError(f"{N} beams cannot be independent in {M} dimensions")
    s = np.linalg.svd(B, compute_uv=False)
    if s[0] == 0 or s[-1] <= RANK_TOL * s[0]:
        raise SingularityError(
            f"beam matrix is rank deficient: sigma_min/sigma_max = "
            f"{(s[-1] / s[0]) if s[0] else 0.0:.3e} <= tolerance {RANK_TOL:.0e}")
    Q, R = np.linalg.qr(B)
    d = np.diag(R)
    phase = d / np.abs(d)
    U = Q * phase[None, :]
    Lmat = phase.conj()[:, None] * R
    return BeamFactorization(U, Lmat)


def bc_capacity_with_beams(H, B, rho):
    """Sum-capacity of the channel seen through the beams ``B``.

    Only ``span(B)`` matters: the result equals ``dpc_sum_capacity(H @ U)``
    where ``B = U L``.
    """
    H = _as_matrix(H)
    fact = factorize_beams(B)
    return dpc_sum_capacity(H @ fact.U, rho), fact


def hsub_wideband_capacity(t, B, rho, *, details=False):
    """Average over subcarriers with one beam matrix shared by the whole band.

    Each subcarrier keeps its own power budget ``rho``.
    """
    fact = factorize_beams(B)
    results = [dpc_sum_capacity(t.H(l) @ fact.U, rho) for l in range(t.L)]
    value = float(np.mean([r.value for r in results]))
    if details:
        return value, all(r.converged for r in results)
    return value


def mac_to_bc(H_eff, alloc, fact):
    """Map uplink powers to downlink covariances with identical user rates.

    Users are encoded so that user ``i`` sees interference only from users
    ``j < i``; the dual uplink decodes in the reverse sense.
    """
    H_eff = _as_matrix(H_eff)
    K, N = H_eff.shape
    lam = np.asarray(alloc.powers, dtype=float)
    if lam.shape != (K,) or np.any(lam < 0):
        raise ValidationError("allocation must hold K nonnegative powers")
    hs = H_eff.conj()  # row i is h_i^*, the uplink signature of user i
    Qt = np.zeros((K, N, N), dtype=complex)
    total = np.zeros((N, N), dtype=complex)
    for i in range(K):
        if lam[i] <= 0:
            continue
        A = np.eye(N, dtype=complex)
        for j in range(i + 1, K):
            A += lam[j] * np.outer(hs[j], hs[j].conj())
        cond = np.linalg.cond(A)
        if cond > 1e12:
            raise NumericError(f"uplink interference covariance of user {i} has condition {cond:.2e}")
        x = np.linalg.solve(A, hs[i])
        sinr = lam[i] * np.real(np.vdot(hs[i], x))
        norm = np.linalg.norm(x)
        if norm == 0 or sinr <= 0:
            continue
        v = x / norm
        gain = abs(np.vdot(hs[i], v)) ** 2
        interference = 1.0 + np.real(H_eff[i] @ total @ hs[i])
        Qt[i] = (interference * sinr / gain) * np.outer(v, v.conj())
        total += Qt[i]
    Linv = np.linalg.inv(fact.Lmat) if N else fact.Lmat
    beam = Linv[None, :, :] @ Qt @ Linv.conj().T[None, :, :]
    return CovarianceSet(Qt, beam)


def bc_rate_eval(H, B, covs):
    """Sum of per-user rates with successive interference (user ``i`` hears ``j < i``)."""
    H = _as_matrix(H)
    B = np.asarray(B, dtype=complex)
    Q = covs.beam if isinstance(covs, CovarianceSet) else np.asarray(covs, dtype=complex)
    K = H.shape[0]
    if Q.shape[0] != K or Q.shape[1:] != (B.shape[1], B.shape[1]):
        raise ValidationError(f"need {K} covariances of size {B.shape[1]}, got {Q.shape}")
    R = H @ B
    total = 0.0
    acc = np.zeros(Q.shape[1:], dtype=complex)
    for i in range(K):
        before = 1.0 + np.real(R[i] @ acc @ R[i].conj())
        acc = acc + Q[i]
        after = 1.0 + np.real(R[i] @ acc @ R[i].conj())
        total += np.log2(after / before)
    return float(total)
