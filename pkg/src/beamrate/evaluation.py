"""Scheme dispatch and the experiment layer built on top of it.

Rates are always in bits/s/Hz averaged over subcarriers and SNRs are
linear unless a name ends in ``_db``.  SNR loss is ``delta = rho_tdd /
rho_scheme <= 1`` and is reported in dB as the positive number
``-10 log10(delta)``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from beamrate.beamselect import SelectionBudget, greedy_bs, greedy_ue
from beamrate.capacity import average_sum_capacity, factorize_beams, dpc_sum_capacity
from beamrate.codebook import Codebook
from beamrate.errors import UnreachableRateError, ValidationError
from beamrate.zf import quantize_channel, sinr, zf_precoder

__all__ = [
    "SCHEMES", "GOB", "SUB", "Scheme", "rate_function", "scheme_sum_rate", "sweep_rates",
    "invert_rate", "required_snr", "SnrLoss", "snr_loss", "min_beams_for_loss",
    "beams_for_loss", "subarray_indices", "TradeoffPoint", "level_curve", "tradeoff_curve",
    "pilot_count", "adjusted_rate", "best_training_tradeoff", "training_optimize",
    "admissible_n",
]

SCHEMES = ("TDD", "D-GOB", "H-GOB", "D-SUB", "H-SUB", "A-GOB", "KxK-baseline")
GOB = ("D-GOB", "H-GOB", "A-GOB")
SUB = ("D-SUB", "H-SUB")
BEAMLESS = ("TDD", "KxK-baseline")

RHO_MIN = 1e-6
RHO_MAX = 1e8
RATE_TOL = 1e-5
LOSS_TOL_DB = 1e-3


@dataclass(frozen=True)
class Scheme:
    """A transmission scheme.

    ``N`` is ignored for TDD and the K x K baseline and forced to 1 for
    analog-only beamforming (A-GOB).  ``hermitian`` selects the orthogonal
    channel reconstruction for the GOB schemes.
    """

    tag: str
    N: int = 0
    codebook: Codebook = field(default=None, compare=False)
    hermitian: bool = False

    def __post_init__(self):
        if self.tag not in SCHEMES:
            raise ValidationError(f"unknown scheme {self.tag!r}; expected one of {SCHEMES}")
        if self.tag == "A-GOB":
            object.__setattr__(self, "N", 1)
        if self.tag in BEAMLESS:
            object.__setattr__(self, "N", 0)

    def check(self, K):
        if self.tag in BEAMLESS:
            return
        if self.codebook is None:
            raise ValidationError(f"{self.tag} needs a codebook")
        if self.tag in SUB and self.N < K:
            raise ValidationError(f"{self.tag} needs N >= K, got N={self.N}, K={K}")
        if self.N < 1 or self.N > self.codebook.size:
            raise ValidationError(f"{self.tag}: N={self.N} outside 1..{self.codebook.size}")

    def with_n(self, N):
        return replace(self, N=N)


def subarray_indices(M, m):
    """``m`` antenna indices equispaced (rounded) over ``0..M-1``, keeping the aperture."""
    if not 1 <= m <= M:
        raise ValidationError(f"subarray size {m} outside 1..{M}")
    if m == 1:
        return np.array([0])
    return np.round(np.linspace(0, M - 1, m)).astype(int)


def _mean(values):
    return float(np.mean(values))


def _gob_precoders(t, s, n_values):
    """Per-N list of per-subcarrier (P, active) for the GOB schemes.

    Selection does not depend on rho, so this is computed once per tensor.
    """
    cb = s.codebook
    n_max = max(n_values)
    if s.tag == "A-GOB":
        picks = [greedy_ue(t.user(k), cb, _wide(1)).indices[0] for k in range(t.K)]
        # transmitting toward channel direction c under y = h^T s needs conj(c)
        P = cb.columns[:, picks].conj()
        active = np.ones(t.K, dtype=bool)
        return {1: [(P, active)] * t.L}

    if s.tag == "H-GOB":
        wide = [greedy_ue(t.user(k), cb, _wide(n_max)) for k in range(t.K)]
        sels = [wide] * t.L
    else:
        sels = [[greedy_ue(t.H(l)[k], cb, n_max) for k in range(t.K)] for l in range(t.L)]

    out = {}
    for n in n_values:
        per_l = []
        for l in range(t.L):
            H = t.H(l)
            H_hat = np.array([quantize_channel(H[k], sels[l][k].prefix(n).B, s.hermitian)
                              for k in range(t.K)])
            pre = zf_precoder(H_hat)
            per_l.append((pre.P, pre.active))
        out[n] = per_l
    return out


def _wide(n):
    return SelectionBudget(n, "wideband")


def _gob_rate(t, precoders, rho):
    return _mean([np.sum(np.log2(1.0 + sinr(t.H(l), P, rho, active)))
                  for l, (P, active) in enumerate(precoders)])


def _sub_rates(t, s, n_values, rho):
    cb = s.codebook
    n_max = max(n_values)
    if rho <= 0:
        return {n: 0.0 for n in n_values}
    if s.tag == "H-SUB":
        sel = greedy_bs(t.data, cb, _wide(n_max), rho)
        out = {}
        for n in n_values:
            U = factorize_beams(sel.prefix(n).B).U
            out[n] = _mean([dpc_sum_capacity(t.H(l) @ U, rho).value for l in range(t.L)])
        return out
    per_l = {n: [] for n in n_values}
    for l in range(t.L):
        H = t.H(l)
        sel = greedy_bs(H, cb, n_max, rho)
        for n in n_values:
            U = factorize_beams(sel.prefix(n).B).U
            per_l[n].append(dpc_sum_capacity(H @ U, rho).value)
    return {n: _mean(v) for n, v in per_l.items()}


def rate_function(t, s):
    """Return ``rho -> sum-rate`` for scheme ``s`` on tensor ``t``.

    Work that does not depend on rho (GOB beam selection and precoders) is
    done once up front; subspace schemes reselect beams at every rho.
    """
    s.check(t.K)
    if s.tag == "TDD":
        return lambda rho: average_sum_capacity(t, rho)
    if s.tag == "KxK-baseline":
        sub = t.subarray(subarray_indices(t.M, t.K))
        return lambda rho: average_sum_capacity(sub, rho)
    if s.tag in GOB:
        precoders = _gob_precoders(t, s, [s.N])[s.N]
        return lambda rho: _gob_rate(t, precoders, rho)
    return lambda rho: _sub_rates(t, s, [s.N], rho)[s.N]


def scheme_sum_rate(t, s, rho):
    """Average sum-rate of scheme ``s`` at linear SNR ``rho``."""
    if rho < 0:
        raise ValidationError(f"rho must be nonnegative, got {rho}")
    return rate_function(t, s)(rho)


def sweep_rates(t, s, n_values, rho):
    """``{N: sum-rate}`` for several beam counts, reusing one greedy run.

    Greedy selections are nested, so the selection for ``max(n_values)``
    contains every smaller one as a prefix.
    """
    n_values = sorted(set(int(n) for n in n_values))
    if s.tag in BEAMLESS:
        r = scheme_sum_rate(t, s, rho)
        return {n: r for n in n_values}
    for n in n_values:
        s.with_n(n).check(t.K)
    if s.tag == "A-GOB":
        r = scheme_sum_rate(t, s, rho)
        return {n: r for n in n_values}
    if s.tag in GOB:
        pre = _gob_precoders(t, s, n_values)
        return {n: _gob_rate(t, pre[n], rho) for n in n_values}
    return _sub_rates(t, s, n_values, rho)


def invert_rate(rate, target, lo=RHO_MIN, hi=RHO_MAX, max_iter=200):
    """Smallest-bracket SNR where ``rate(rho)`` crosses ``target``.

    Bisection on ``log(rho)``.  The bracket keeps ``rate(lo) < target <=
    rate(hi)``, so a non-monotone curve still yields a genuine crossing.
    Raises :class:`UnreachableRateError` if ``rate(hi) < target``.
    """
    if target <= 0:
        raise ValidationError(f"target rate must be positive, got {target}")
    f_hi = rate(hi)
    if f_hi < target:
        raise UnreachableRateError(target, f_hi)
    f_lo = rate(lo)
    if f_lo >= target:
        return lo
    a, b = math.log(lo), math.log(hi)
    best = hi
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        rho = math.exp(mid)
        f = rate(rho)
        if abs(f - target) <= RATE_TOL:
            return rho
        if f < target:
            a = mid
        else:
            b, best = mid, rho
        if b - a < 1e-14:
            break
    return best


def required_snr(t, s, C_star, lo=RHO_MIN, hi=RHO_MAX):
    """Linear SNR at which scheme ``s`` reaches ``C_star`` bits/s/Hz."""
    return invert_rate(rate_function(t, s), C_star, lo, hi)


@dataclass(frozen=True)
class SnrLoss:
    linear: float
    rho_ref: float
    rho_scheme: float

    @property
    def db(self):
        """Positive loss in dB (exactly 0.0, not -0.0, for a lossless scheme)."""
        return 0.0 - 10.0 * math.log10(self.linear)


def snr_loss(t, s, C_star, rho_ref=None):
    """SNR loss of ``s`` against TDD at target rate ``C_star``."""
    if rho_ref is None:
        rho_ref = required_snr(t, Scheme("TDD"), C_star)
    rho_s = rho_ref if s.tag == "TDD" else required_snr(t, s, C_star)
    return SnrLoss(rho_ref / rho_s, rho_ref, rho_s)


def admissible_n(tag, K, M):
    """Beam counts a scheme may use: ``K..M`` for subspace, ``1..M`` for GOB."""
    if tag in SUB:
        return list(range(K, M + 1))
    if tag == "A-GOB":
        return [1]
    if tag in GOB:
        return list(range(1, M + 1))
    raise ValidationError(f"{tag} has no beam count")


def min_beams_for_loss(delta_by_n, loss_grid_db):
    """For each allowable loss (dB), the smallest N whose loss stays within it.

    ``delta_by_n`` maps N to the linear SNR loss, or to None where the
    target rate is unreachable.  Returns ``{loss_db: N or None}``.
    """
    out = {}
    for beta in loss_grid_db:
        if beta < 0:
            raise ValidationError(f"allowable loss must be nonnegative, got {beta}")
        out[beta] = None
        for n in sorted(delta_by_n):
            d = delta_by_n[n]
            if d is not None and -10.0 * math.log10(d) <= beta + LOSS_TOL_DB:
                out[beta] = n
                break
    return out


def _delta_by_n(t, s, C_star, n_values, rho_ref):
    out = {}
    for n in n_values:
        try:
            out[n] = snr_loss(t, s.with_n(n), C_star, rho_ref).linear
        except UnreachableRateError:
            out[n] = None
    return out


def beams_for_loss(t, scheme, C_star, loss_grid_db, n_values=None):
    """Required beam count versus allowable SNR loss for one scheme family.

    Returns ``(table, delta_by_n)`` where ``table`` maps each loss to the
    smallest sufficient N (None if no admissible N reaches it).
    """
    if n_values is None:
        n_values = admissible_n(scheme.tag, t.K, t.M)
    rho_ref = required_snr(t, Scheme("TDD"), C_star)
    deltas = _delta_by_n(t, scheme, C_star, n_values, rho_ref)
    return min_beams_for_loss(deltas, loss_grid_db), deltas


@dataclass(frozen=True)
class TradeoffPoint:
    """One point ``(r(m), m)`` of a level curve; ``n`` is None when infeasible."""

    beta_db: float
    m: int
    n: int
    delta: float
    flag: str = "ok"


def level_curve(delta, beta_db):
    """Apply ``r(m) = argmin {delta(n, m) : delta(n, m) >= beta}`` to a table.

    ``delta`` maps ``m`` to ``{n: delta or None}``.  If the argmin is not
    the smallest feasible ``n`` the point is flagged ``nonmonotone``.
    """
    beta = 10.0 ** (-beta_db / 10.0)
    tol = 10.0 ** (-LOSS_TOL_DB / 10.0)
    points = []
    for m in sorted(delta):
        feasible = {n: d for n, d in delta[m].items() if d is not None and d >= beta * tol}
        if not feasible:
            points.append(TradeoffPoint(beta_db, m, None, float("nan"), "unreachable"))
            continue
        r = min(feasible, key=lambda n: (feasible[n], n))
        flag = "ok" if r == min(feasible) else "nonmonotone"
        points.append(TradeoffPoint(beta_db, m, r, feasible[r], flag))
    return points


def _subarrays(M, m, count):
    """``count`` aperture-preserving subarrays; interior elements slide by a fraction of the slack."""
    if count <= 1 or m <= 2:
        return [subarray_indices(M, m)]
    grid = np.linspace(0, M - 1, m)
    slack = (M - 1) / (m - 1) - 1.0
    out = []
    for c in range(count):
        pos = grid.copy()
        pos[1:-1] += slack * c / count
        out.append(np.round(pos).astype(int))
    return out


def tradeoff_curve(t, beta_list_db, C_star, m_grid, n_grid, codebook, n_subarrays=1):
    """Level curves of the H-SUB SNR loss over (RF chains n, antennas m).

    Each m-antenna system keeps the full array's aperture; its codebook is
    the full codebook restricted to those antennas.  Losses are measured
    against TDD on all ``t.M`` antennas.

    Returns ``(points, delta)``; ``points`` holds one :class:`TradeoffPoint`
    per (beta, m).
    """
    rho_ref = required_snr(t, Scheme("TDD"), C_star)
    delta = {}
    for m in m_grid:
        if not t.K <= m <= t.M:
            raise ValidationError(f"subarray size {m} outside {t.K}..{t.M}")
        subs = [(t.subarray(idx), codebook.rows(idx)) for idx in _subarrays(t.M, m, n_subarrays)]
        delta[m] = {}
        for n in n_grid:
            if not t.K <= n <= m:
                continue

            def rate(rho, n=n):
                return _mean([scheme_sum_rate(st, Scheme("H-SUB", n, cb), rho) for st, cb in subs])
            try:
                delta[m][n] = rho_ref / invert_rate(rate, C_star)
            except UnreachableRateError:
                delta[m][n] = None
    points = [p for beta in beta_list_db for p in level_curve(delta, beta)]
    return points, delta


def pilot_count(tag, K, N):
    """Downlink pilot symbols: ``K N`` for grid-of-beams, ``N`` for subspace schemes."""
    if tag in GOB:
        return K * N
    if tag in SUB:
        return N
    raise ValidationError(f"no pilot model for {tag}")


def adjusted_rate(n_pilots, T_c, rate):
    """Rate left after pilots, ``(1 - Np/Tc) * rate``, clamped at zero."""
    if T_c < 1:
        raise ValidationError(f"coherence interval must be >= 1, got {T_c}")
    if n_pilots >= T_c:
        return 0.0
    return (T_c - n_pilots) * rate / T_c


def best_training_tradeoff(rates_by_n, tag, K, T_c):
    """Maximize the pilot-adjusted rate over N; ties go to the smallest N."""
    best_n, best = None, -math.inf
    for n in sorted(rates_by_n):
        v = adjusted_rate(pilot_count(tag, K, n), T_c, rates_by_n[n])
        if v > best:
            best_n, best = n, v
    return best_n, best


def training_optimize(t, s, rho, T_c, n_values=None):
    """Optimal beam count with pilot overhead and the resulting rate."""
    if n_values is None:
        n_values = admissible_n(s.tag, t.K, t.M)
    rates = sweep_rates(t, s, n_values, rho)
    return best_training_tradeoff(rates, s.tag, t.K, T_c)
