"""Grid-of-beams codebooks for a uniform linear array.

Beam ``i`` (0-based) points at sine-angle ``psi_i = -1 + (2i + 1) / M'``
and has entries ``exp(j*pi*psi_i*m) / sqrt(M)`` for ``m = 0..M-1``.
For ``M' = M`` the columns are orthonormal (a shifted IDFT matrix).
"""

from dataclasses import dataclass

import numpy as np

from beamrate.errors import ValidationError

__all__ = ["Codebook", "BeamSelection", "array_response", "build_codebook",
           "extract_beams"]


def array_response(M, psi):
    """Unit-norm ULA response at sine-angle(s) ``psi``.

    Returns shape ``(M,)`` for a scalar angle and ``(M, len(psi))`` otherwise.
    """
    psi = np.asarray(psi, dtype=float)
    m = np.arange(M)
    phase = np.pi * np.multiply.outer(m, psi)
    return np.exp(1j * phase) / np.sqrt(M)


@dataclass(frozen=True, eq=False)
class Codebook:
    """An ``M x M'`` matrix of unit-norm beams.

    Attributes
    ----------
    columns : ndarray, shape (M, M')
    angles : ndarray, shape (M',)
        Sine-angles of the beams. NaN for codebooks built from raw columns.
    """

    columns: np.ndarray
    angles: np.ndarray

    @property
    def M(self):
        return self.columns.shape[0]

    @property
    def size(self):
        return self.columns.shape[1]

    @classmethod
    def from_columns(cls, columns):
        """Wrap arbitrary unit-norm columns (e.g. an identity codebook)."""
        columns = np.array(columns, dtype=complex)
        if columns.ndim != 2 or 0 in columns.shape:
            raise ValidationError("codebook columns must be a nonempty 2-D array")
        norms = np.linalg.norm(columns, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-12):
            raise ValidationError("codebook columns must have unit norm")
        columns.setflags(write=False)
        return cls(columns, np.full(columns.shape[1], np.nan))

    def rows(self, antennas):
        """Codebook restricted to a subset of antennas, columns renormalized."""
        sub = self.columns[np.asarray(antennas), :]
        return Codebook.from_columns(sub / np.linalg.norm(sub, axis=0))


def build_codebook(M, M_prime):
    """Vandermonde codebook with ``M_prime`` beams uniform in sine-angle.

    Examples
    --------
    >>> cb = build_codebook(2, 2)
    >>> cb.angles
    array([-0.5,  0.5])
    """
    if int(M) != M or int(M_prime) != M_prime or M < 1 or M_prime < 1:
        raise ValidationError(f"need positive integer dimensions, got M={M}, M'={M_prime}")
    M, M_prime = int(M), int(M_prime)
    angles = -1.0 + (2.0 * np.arange(1, M_prime + 1) - 1.0) / M_prime
    columns = array_response(M, angles)
    columns.setflags(write=False)
    angles.setflags(write=False)
    return Codebook(columns, angles)


@dataclass(frozen=True, eq=False)
class BeamSelection:
    """Ordered beam indices (0-based) and the extracted ``M x N`` matrix."""

    indices: tuple
    B: np.ndarray

    @property
    def N(self):
        return len(self.indices)

    def prefix(self, n):
        """First ``n`` selected beams; valid because greedy selections nest."""
        return BeamSelection(self.indices[:n], self.B[:, :n])


def extract_beams(cb, indices):
    """Columns of ``cb`` at ``indices``, in the given order.

    An empty index list yields an ``M x 0`` matrix.
    """
    idx = tuple(int(i) for i in indices)
    if len(set(idx)) != len(idx):
        raise ValidationError(f"duplicate beam index in {idx}")
    for i in idx:
        if not 0 <= i < cb.size:
            raise ValidationError(f"beam index {i} outside 0..{cb.size - 1}")
    B = cb.columns[:, list(idx)] if idx else np.zeros((cb.M, 0), dtype=complex)
    return BeamSelection(idx, B)
