"""Channel reconstruction from reported beam gains and zero-forcing rates.

Users report ``g = B^T h`` for their selected beams.  The base station
rebuilds ``h_hat`` in ``span(B)`` so that ``B^T h_hat`` matches the report.
This transpose convention gives an oblique projector
``B (B^T B)^-1 B^T``; ``hermitian=True`` switches to the orthogonal
projector ``B (B^H B)^-1 B^H`` instead.
"""

from dataclasses import dataclass

import numpy as np

from beamrate.errors import ValidationError

__all__ = ["QuantizedChannel", "Precoder", "quantize_channel", "quantize_users",
           "zf_precoder", "sinr", "zf_sum_rate"]

COND_LIMIT = 1e12
TRUNCATION = 1e-10
INACTIVE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class QuantizedChannel:
    """Per-user reports and the assembled ``K x M`` reconstruction ``H_hat``."""

    indices: tuple
    gains: tuple
    H_hat: np.ndarray


@dataclass(frozen=True, eq=False)
class Precoder:
    """Unit-norm ZF columns; ``active[k]`` is False for a degenerate column (zeroed)."""

    P: np.ndarray
    active: np.ndarray


def quantize_channel(h, B, hermitian=False):
    """Reconstruct ``h`` from its gains on the beams ``B``.

    Returns ``B @ a`` where ``a`` solves ``(B^T B) a = B^T h`` in the
    minimum-norm least-squares sense.  Singular values of ``B^T B`` are
    compared against ``||B||_2^2``; when the ratio drops below ``1e-12``
    the solve falls back to an SVD truncated at ``1e-10``.
    """
    h = np.asarray(h, dtype=complex)
    B = np.asarray(B, dtype=complex)
    M, N = B.shape
    if h.shape != (M,):
        raise ValidationError(f"channel has shape {h.shape}, beams have {M} rows")
    if N == 0:
        return np.zeros(M, dtype=complex)
    if N > M:
        raise ValidationError(f"cannot report {N} beams with {M} antennas")
    Bt = B.conj().T if hermitian else B.T
    A = Bt @ B
    b = Bt @ h
    scale = np.linalg.norm(B, 2) ** 2
    U, s, Vh = np.linalg.svd(A)
    if s[-1] > scale / COND_LIMIT:
        a = np.linalg.solve(A, b)
    else:
        keep = s > TRUNCATION * scale
        a = Vh[keep].conj().T @ ((U[:, keep].conj().T @ b) / s[keep])
    return B @ a


def quantize_users(H, beams, hermitian=False):
    """Reconstruct every row of ``H`` from its own beam selection.

    ``beams`` holds one :class:`~beamrate.codebook.BeamSelection` per user.
    """
    H = np.asarray(H, dtype=complex)
    rows, gains = [], []
    for h, sel in zip(H, beams):
        gains.append(sel.B.T @ h)
        rows.append(quantize_channel(h, sel.B, hermitian))
    return QuantizedChannel(tuple(s.indices for s in beams), tuple(gains), np.array(rows))


def zf_precoder(H_hat):
    """Normalized columns of the Moore-Penrose pseudoinverse of ``H_hat``."""
    H_hat = np.asarray(H_hat, dtype=complex)
    K, M = H_hat.shape
    if K > M:
        raise ValidationError(f"zero-forcing needs K <= M, got K={K}, M={M}")
    Z = np.linalg.pinv(H_hat, rcond=1e-10)
    norms = np.linalg.norm(Z, axis=0)
    ref = np.linalg.norm(Z, 2) if Z.size else 0.0
    active = norms > INACTIVE_TOL * ref
    P = np.zeros_like(Z)
    P[:, active] = Z[:, active] / norms[active]
    return Precoder(P, active)


def sinr(H, P, rho, active=None):
    """Per-user SINR with equal power ``rho / K`` on each column of ``P``.

    Products are plain transposes, ``h_k^T p_i``.  Users whose column is
    inactive get SINR 0.
    """
    H = np.asarray(H, dtype=complex)
    K = H.shape[0]
    if rho < 0:
        raise ValidationError(f"rho must be nonnegative, got {rho}")
    power = np.abs(H @ P) ** 2
    p = rho / K
    signal = p * np.diag(power)
    interference = p * (power.sum(axis=1) - np.diag(power))
    out = signal / (1.0 + interference)
    if active is not None:
        out = np.where(active, out, 0.0)
    return out


def zf_sum_rate(H_true, H_hat, rho):
    """ZF sum-rate on ``H_true`` with precoders designed from ``H_hat``.

    Returns
    -------
    sum_rate : float
    per_user_sinr : ndarray, shape (K,)
    """
    pre = zf_precoder(H_hat)
    s = sinr(H_true, pre.P, rho, pre.active)
    return float(np.sum(np.log2(1.0 + s))), s
