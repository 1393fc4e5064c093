"""Greedy and exhaustive selection of beam subsets from a codebook.

The greedy routines keep an orthonormal basis of the beams chosen so far and
the residual of every codebook column against it.  Adding a beam costs one
rank-one update of the residuals, so a step is O(M M') instead of one
pseudoinverse per candidate.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from beamrate.capacity import bc_capacity_with_beams
from beamrate.codebook import extract_beams
from beamrate.errors import BudgetExceededError, SingularityError, ValidationError
from beamrate.zf import quantize_channel

__all__ = ["SelectionBudget", "greedy_ue", "greedy_bs", "exhaustive_select",
           "ue_projection_energy", "ue_distortion", "bs_objective"]

SKIP_TOL = 1e-10
MODES = ("per-subcarrier", "wideband")


@dataclass(frozen=True)
class SelectionBudget:
    N: int
    mode: str = "per-subcarrier"
    exhaustive_cap: int = 10**6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if int(self.N) != self.N or self.N < 0:
            raise ValidationError(f"N must be a nonnegative integer, got {self.N!r}")


def _budget(budget, cb, mode=None):
    if not isinstance(budget, SelectionBudget):
        budget = SelectionBudget(int(budget), mode or "per-subcarrier")
    if budget.N > cb.size:
        raise ValidationError(f"cannot select N={budget.N} beams from a codebook of {cb.size}")
    return budget


def _stack(x, ndim, mode):
    """Promote a single-subcarrier input to a stack of one."""
    x = np.asarray(x, dtype=complex)
    if x.ndim == ndim:
        return x[None]
    if x.ndim == ndim + 1:
        if mode == "per-subcarrier" and x.shape[0] != 1:
            raise ValidationError("per-subcarrier selection takes a single subcarrier; "
                                  "use mode='wideband' for a stack")
        return x
    raise ValidationError(f"unexpected input shape {x.shape}")


class _Residuals:
    """Codebook columns with the current span projected out."""

    def __init__(self, C):
        self.R = np.array(C, dtype=complex)
        self.basis = np.zeros((C.shape[0], 0), dtype=complex)
        self.available = np.ones(C.shape[1], dtype=bool)

    def norms2(self):
        return np.sum(np.abs(self.R) ** 2, axis=0)

    def candidates(self):
        """Unused columns with a usable component outside the current span."""
        n2 = self.norms2()
        return self.available & (n2 > SKIP_TOL**2), n2

    def add(self, j):
        q = self.R[:, j] / np.linalg.norm(self.R[:, j])
        # one re-orthogonalization pass against the accumulated basis
        q = q - self.basis @ (self.basis.conj().T @ q)
        q = q / np.linalg.norm(q)
        self.basis = np.column_stack([self.basis, q])
        self.R -= np.outer(q, q.conj() @ self.R)
        self.available[j] = False
        return q


def _pick(score, valid):
    if not np.any(valid):
        return None
    score = np.where(valid, score, -np.inf)
    return int(np.argmax(score))  # first maximum = lowest index


def greedy_ue(h, cb, budget):
    """UE-side greedy pursuit.

    Each step adds the beam that maximizes the energy of the orthogonal
    projection of ``h`` onto the span of the selected beams.  With
    ``mode='wideband'``, ``h`` is an ``(L, M)`` stack and the projection
    energy is averaged over subcarriers.

    Returns a :class:`~beamrate.codebook.BeamSelection` in selection order.
    """
    budget = _budget(budget, cb)
    hs = _stack(h, 1, budget.mode)
    if hs.shape[1] != cb.M:
        raise ValidationError(f"channel has {hs.shape[1]} antennas, codebook has {cb.M}")
    res = _Residuals(cb.columns)
    chosen = []
    for _ in range(budget.N):
        valid, n2 = res.candidates()
        proj = res.R.conj().T @ hs.T  # (M', L)
        score = np.mean(np.abs(proj) ** 2, axis=1) / np.where(valid, n2, 1.0)
        j = _pick(score, valid)
        if j is None:
            raise ValidationError(f"codebook spans only {len(chosen)} independent beams")
        res.add(j)
        chosen.append(j)
    return extract_beams(cb, chosen)


def greedy_bs(H, cb, budget, rho):
    """BS-side multiuser greedy pursuit with equal powers ``rho / K``.

    Each step adds the beam maximizing
    ``log2 det(I + (rho/K) H U U^H H^H)``, ``U`` an orthonormal basis of
    the selected beams plus the candidate.  The determinant is updated by
    the matrix determinant lemma.  In wideband mode ``H`` is ``(L, K, M)``
    and the objective is averaged over subcarriers.
    """
    budget = _budget(budget, cb)
    if rho <= 0:
        raise ValidationError(f"greedy_bs needs rho > 0, got {rho}")
    Hs = _stack(H, 2, budget.mode)
    L, K, M = Hs.shape
    if M != cb.M:
        raise ValidationError(f"channel has {M} antennas, codebook has {cb.M}")
    a = rho / K
    Ainv = np.broadcast_to(np.eye(K, dtype=complex), (L, K, K)).copy()
    res = _Residuals(cb.columns)
    chosen = []
    for _ in range(budget.N):
        valid, n2 = res.candidates()
        V = Hs @ res.R  # (L, K, M')
        quad = np.real(np.sum(V.conj() * (Ainv @ V), axis=1))  # (L, M')
        quad = quad / np.where(valid, n2, 1.0)
        score = np.mean(np.log2(1.0 + a * quad), axis=0)
        j = _pick(score, valid)
        if j is None:
            raise ValidationError(f"codebook spans only {len(chosen)} independent beams")
        q = res.add(j)
        v = Hs @ q  # (L, K)
        w = Ainv @ v[:, :, None]  # (L, K, 1)
        denom = 1.0 + a * np.real(np.sum(v.conj() * w[:, :, 0], axis=1))
        Ainv -= a * (w @ np.conj(np.swapaxes(w, 1, 2))) / denom[:, None, None]
        chosen.append(j)
    return extract_beams(cb, chosen)


def _orthobasis(B):
    if B.shape[1] == 0:
        return B
    U, s, _ = np.linalg.svd(B, full_matrices=False)
    return U[:, s > SKIP_TOL * s[0]]


def ue_projection_energy(h, B):
    """Mean ``||P_B h||^2`` over the rows of ``h`` (greedy UE objective)."""
    hs = np.atleast_2d(np.asarray(h, dtype=complex))
    U = _orthobasis(np.asarray(B, dtype=complex))
    return float(np.mean(np.sum(np.abs(hs @ U.conj()) ** 2, axis=1)))


def ue_distortion(h, B, hermitian=False):
    """Mean ``||h - h_hat||^2`` with ``h_hat`` rebuilt from the reported gains."""
    hs = np.atleast_2d(np.asarray(h, dtype=complex))
    return float(np.mean([np.linalg.norm(x - quantize_channel(x, B, hermitian)) ** 2
                          for x in hs]))


def bs_objective(H, B, rho):
    """Equal-power ``log2 det(I + (rho/K) H U U^H H^H)``, averaged over a stack."""
    Hs = np.asarray(H, dtype=complex)
    if Hs.ndim == 2:
        Hs = Hs[None]
    K = Hs.shape[1]
    U = _orthobasis(np.asarray(B, dtype=complex))
    E = Hs @ U
    G = E @ np.conj(np.swapaxes(E, 1, 2))
    _, logdet = np.linalg.slogdet(np.eye(K) + (rho / K) * G)
    return float(np.mean(logdet) / np.log(2.0))


def exhaustive_select(problem, inputs, cb, budget, rho=None, hermitian=False):
    """Best subset of ``budget.N`` beams by brute force.

    ``problem='ue-dist'`` minimizes the reconstruction error of one user's
    channel (``inputs`` of shape ``(M,)`` or ``(L, M)``).  ``'bs-capacity'``
    maximizes the beamformed sum-capacity (``inputs`` of shape ``(K, M)`` or
    ``(L, K, M)``, averaged over subcarriers).  Subsets are visited in
    lexicographic order and only a strict improvement replaces the
    incumbent, so ties go to the lexicographically smallest set.
    """
    budget = _budget(budget, cb)
    count = math.comb(cb.size, budget.N)
    if count > budget.exhaustive_cap:
        raise BudgetExceededError(count, budget.exhaustive_cap)
    x = np.asarray(inputs, dtype=complex)
    if problem == "ue-dist":
        hs = np.atleast_2d(x)

        def score(B):
            return -ue_distortion(hs, B, hermitian)
    elif problem == "bs-capacity":
        if rho is None or rho < 0:
            raise ValidationError("bs-capacity needs rho >= 0")
        Hs = x[None] if x.ndim == 2 else x

        def score(B):
            return float(np.mean([bc_capacity_with_beams(H, B, rho)[0].value for H in Hs]))
    else:
        raise ValidationError(f"unknown problem {problem!r}")

    best, best_score = None, -np.inf
    for subset in itertools.combinations(range(cb.size), budget.N):
        B = cb.columns[:, list(subset)]
        try:
            s = score(B)
        except SingularityError:
            continue
        if s > best_score:
            best, best_score = subset, s
    if best is None:
        raise SingularityError("no subset of the requested size has full column rank")
    return extract_beams(cb, best)
