"""Frequency-selective multiuser channel tensors.

A :class:`ChannelTensor` stores ``h_{k,m}(l)`` as an array of shape
``(L, K, M)`` (subcarrier outermost, antenna innermost), the same order as
the MMC1 file format.  Row ``k`` of ``data[l]`` is the user's channel in the
``y = h^T s`` convention, so ``data[l]`` is the ``K x M`` matrix ``H(l)``.

Random streams
--------------
Every random draw comes from a PCG64 generator seeded with
``SeedSequence(seed, spawn_key=(stream, ...))``:

* ``(0, k, p)``: scattered tap ``p`` of user ``k`` (rician-los, rayleigh-tdl)
* ``(1,)``: cluster geometry shared by all users (cluster)
* ``(2, k, c)``: gains of user ``k`` on cluster ``c`` (cluster)

Streams are independent, so users and taps can be drawn in any order.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from beamrate.codebook import array_response
from beamrate.errors import DegenerateInputError, FormatError, ValidationError

__all__ = ["ChannelTensor", "ScenarioSpec", "generate", "normalize", "save", "load",
           "MAGIC", "KINDS"]

MAGIC = b"MMC1"
KINDS = ("rician-los", "rayleigh-tdl", "cluster", "file")
_HEADER = struct.Struct("<4s3I")
_MAX_ELEMENTS = 2**40


@dataclass(frozen=True, eq=False)
class ChannelTensor:
    """Complex channel gains for ``K`` users, ``M`` antennas, ``L`` subcarriers."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.complex128)
        if data.ndim != 3:
            raise ValidationError(f"channel data must be (L, K, M), got shape {data.shape}")
        L, K, M = data.shape
        if L < 1 or K < 1 or M < 1:
            raise ValidationError(f"empty channel dimensions L={L}, K={K}, M={M}")
        if M < K:
            raise ValidationError(f"need M >= K, got M={M}, K={K}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("channel contains NaN or Inf")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def L(self):
        return self.data.shape[0]

    @property
    def K(self):
        return self.data.shape[1]

    @property
    def M(self):
        return self.data.shape[2]

    def H(self, l):
        """The ``K x M`` channel matrix of subcarrier ``l``."""
        return self.data[l]

    def user(self, k):
        """``(L, M)`` array of user ``k``'s channel vectors."""
        return self.data[:, k, :]

    def subarray(self, antennas):
        return ChannelTensor(self.data[:, :, np.asarray(antennas)])

    def average_gain(self):
        """Per-user ``(1 / (L M)) sum |h|^2``."""
        return np.mean(np.abs(self.data) ** 2, axis=(0, 2))


@dataclass
class ScenarioSpec:
    """Parameters of a synthetic (or file-backed) channel scenario.

    ``rician_k_factor`` and ``cluster_k_factor`` are in dB.  ``los_angles``
    holds one sine-angle per user in ``[-1, 1)``; when omitted the users are
    spread evenly over ``[-0.8, 0.8]``.  ``tap_powers`` defaults to an
    exponential profile decaying ``tap_decay_db`` per tap.
    """

    kind: str = "rician-los"
    K: int = 4
    M: int = 32
    L: int = 16
    rician_k_factor: float = 20.0
    los_angles: list = None
    num_taps: int = 8
    tap_powers: list = None
    tap_decay_db: float = 3.0
    tap_spacing: float = 1.0
    num_clusters: int = 4
    angular_spread: float = 0.05
    cluster_k_factor: float = 0.0
    rays_per_cluster: int = 8
    seed: int = 0
    path: str = None
    extra: dict = field(default_factory=dict, repr=False)

    def validate(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "file":
            if not self.path:
                raise ValidationError("kind=file requires a path")
            return
        for name in ("K", "M", "L", "num_taps"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
        if self.M < self.K:
            raise ValidationError(f"need M >= K, got M={self.M}, K={self.K}")
        if self.los_angles is not None:
            angles = np.asarray(self.los_angles, dtype=float)
            if angles.shape != (self.K,):
                raise ValidationError(f"los_angles needs {self.K} entries, got {angles.size}")
            if np.any(angles < -1) or np.any(angles >= 1):
                raise ValidationError("los_angles must lie in [-1, 1)")
        if self.tap_powers is not None:
            p = np.asarray(self.tap_powers, dtype=float)
            if p.shape != (self.num_taps,) or np.any(p < 0) or p.sum() <= 0:
                raise ValidationError(
                    f"tap_powers needs {self.num_taps} nonnegative entries with positive sum")
        if self.kind == "cluster" and (self.num_clusters < 1 or self.rays_per_cluster < 1):
            raise ValidationError("cluster scenarios need at least one cluster and one ray")
        if self.angular_spread < 0:
            raise ValidationError("angular_spread must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")

    def angles(self):
        if self.los_angles is not None:
            return np.asarray(self.los_angles, dtype=float)
        if self.K == 1:
            return np.zeros(1)
        return np.linspace(-0.8, 0.8, self.K)

    def tap_profile(self):
        """Tap powers normalized to unit sum."""
        if self.tap_powers is not None:
            p = np.asarray(self.tap_powers, dtype=float)
        else:
            p = 10.0 ** (-self.tap_decay_db * np.arange(self.num_taps) / 10.0)
        return p / p.sum()


def _rng(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _delay_phases(delays, L):
    """``(L, P)`` subcarrier responses of unit taps at the given delays."""
    l = np.arange(L)
    return np.exp(-2j * np.pi * np.outer(l, delays) / L)


def _tdl(spec, k, per_entry_scale):
    powers = spec.tap_profile()
    delays = spec.tap_spacing * np.arange(spec.num_taps)
    taps = np.empty((spec.num_taps, spec.M), dtype=complex)
    for p in range(spec.num_taps):
        taps[p] = np.sqrt(powers[p] * per_entry_scale) * _cn(_rng(spec.seed, 0, k, p), spec.M)
    return _delay_phases(delays, spec.L) @ taps


def _kfactor_weights(k_db):
    kappa = 10.0 ** (k_db / 10.0)
    return np.sqrt(1.0 / (1.0 + 1.0 / kappa)), np.sqrt(1.0 / (kappa + 1.0))


def _rician_los(spec):
    los_w, nlos_w = _kfactor_weights(spec.rician_k_factor)
    angles = spec.angles()
    data = np.empty((spec.L, spec.K, spec.M), dtype=complex)
    for k in range(spec.K):
        # scattered part carries the same total power as the unit-norm LOS term
        scattered = _tdl(spec, k, 1.0 / spec.M)
        data[:, k, :] = los_w * array_response(spec.M, angles[k]) + nlos_w * scattered
    return data


def _rayleigh_tdl(spec):
    data = np.empty((spec.L, spec.K, spec.M), dtype=complex)
    for k in range(spec.K):
        data[:, k, :] = _tdl(spec, k, 1.0)
    return data


def _wrap(psi):
    return (psi + 1.0) % 2.0 - 1.0


def _cluster(spec):
    C, R, M = spec.num_clusters, spec.rays_per_cluster, spec.M
    geo = _rng(spec.seed, 1)
    centers = geo.uniform(-1.0, 1.0, C)
    ray_angles = _wrap(centers[:, None] + spec.angular_spread * geo.standard_normal((C, R)))
    delays = geo.integers(0, spec.num_taps, C)
    weights = spec.tap_profile()[delays]
    weights = weights / weights.sum()
    spec_w, diff_w = _kfactor_weights(spec.cluster_k_factor)
    los_w, nlos_w = _kfactor_weights(spec.rician_k_factor)
    phases = _delay_phases(spec.tap_spacing * delays, spec.L)

    angles = spec.angles()
    data = np.empty((spec.L, spec.K, M), dtype=complex)
    for k in range(spec.K):
        scattered = np.zeros((C, M), dtype=complex)
        for c in range(C):
            rng = _rng(spec.seed, 2, k, c)
            alpha = _cn(rng, 1)[0]
            beta = _cn(rng, R) / np.sqrt(R)
            scattered[c] = np.sqrt(weights[c]) * (
                spec_w * alpha * array_response(M, centers[c])
                + diff_w * array_response(M, ray_angles[c]) @ beta)
        data[:, k, :] = los_w * array_response(M, angles[k]) + nlos_w * (phases @ scattered)
    return data


def generate(spec):
    """Draw a channel tensor for ``spec``; the seed fixes the output bit for bit.

    Channels are not normalized; call :func:`normalize` before evaluation.
    """
    spec.validate()
    if spec.kind == "file":
        return load(spec.path)
    builders = {"rician-los": _rician_los, "rayleigh-tdl": _rayleigh_tdl, "cluster": _cluster}
    return ChannelTensor(builders[spec.kind](spec))


def normalize(t):
    """Scale each user to unit average gain over all subcarriers and antennas."""
    gain = t.average_gain()
    bad = np.flatnonzero(gain <= 0)
    if bad.size:
        raise DegenerateInputError(f"user {int(bad[0])} has an all-zero channel")
    return ChannelTensor(t.data / np.sqrt(gain)[None, :, None])


def save(t, path):
    """Write ``t`` in MMC1 format."""
    header = _HEADER.pack(MAGIC, t.M, t.K, t.L)
    payload = np.ascontiguousarray(t.data, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load(path):
    """Read an MMC1 file.  Raises :class:`FormatError` naming the bad field."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise FormatError("magic", f"file has only {len(raw)} bytes")
    if raw[:4] != MAGIC:
        raise FormatError("magic", f"expected {MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise FormatError("header", f"truncated header ({len(raw)} of {_HEADER.size} bytes)")
    _, M, K, L = _HEADER.unpack_from(raw)
    for name, value in (("M", M), ("K", K), ("L", L)):
        if value == 0:
            raise FormatError(name, "dimension is zero")
    count = M * K * L
    if count > _MAX_ELEMENTS:
        raise FormatError("dimensions", f"M*K*L = {count} overflows the element limit")
    if K > M:
        raise FormatError("K", f"K={K} exceeds M={M}")
    expected = _HEADER.size + 16 * count
    if len(raw) < expected:
        raise FormatError("payload", f"truncated: {len(raw)} bytes, expected {expected}")
    if len(raw) > expected:
        raise FormatError("payload", f"{len(raw) - expected} trailing bytes")
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size, count=count)
    try:
        return ChannelTensor(data.astype(np.complex128).reshape(L, K, M))
    except ValidationError as exc:
        raise FormatError("payload", str(exc)) from exc

