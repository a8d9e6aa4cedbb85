"""Preintegrated IMU motion constraints used as network input features.

A window of gyro/accel samples is compressed into the relative rotation,
velocity and position increments expressed in the frame of the first sample.
The increments do not depend on the initial orientation, velocity or position,
and gravity is left out (it is re-injected by :func:`reconstruct_state`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyWindow,
    NonMonotonicTimestamps,
    RemainderPolicyViolation,
    TimestampJitter,
)
from .lie import check_rotation, so3_exp, so3_log

GRAVITY = np.array([0.0, 0.0, -9.80665])

FEATURE_DIM = 9
JITTER_TOL = 0.1


@dataclass(frozen=True)
class ImuSample:
    timestamp: float
    gyro: tuple[float, float, float]
    accel: tuple[float, float, float]


@dataclass(frozen=True)
class BiasState:
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "gyro_bias", np.asarray(self.gyro_bias, dtype=np.float64).reshape(3))
        object.__setattr__(self, "accel_bias", np.asarray(self.accel_bias, dtype=np.float64).reshape(3))


@dataclass(frozen=True)
class NoiseSpec:
    gyro_noise_std: float = 0.0
    accel_noise_std: float = 0.0
    gyro_bias_range: float = 0.0
    accel_bias_range: float = 0.0

    def __post_init__(self):
        for name in ("gyro_noise_std", "accel_noise_std", "gyro_bias_range", "accel_bias_range"):
            if not getattr(self, name) >= 0.0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True, eq=False)
class PreintegratedDelta:
    delta_R: np.ndarray
    delta_v: np.ndarray
    delta_p: np.ndarray
    delta_t: float
    count: int

    @classmethod
    def identity(cls) -> PreintegratedDelta:
        return cls(np.eye(3), np.zeros(3), np.zeros(3), 0.0, 0)

    def flatten(self) -> np.ndarray:
        """9-vector ``(so3_log(dR), dv, dp)``."""
        return np.concatenate([so3_log(self.delta_R), self.delta_v, self.delta_p])


def as_arrays(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split samples into ``(t, gyro, accel)`` arrays of shapes (N,), (N,3), (N,3).

    Accepts a sequence of :class:`ImuSample` or an ``(N, 7)`` array laid out as
    ``t, gx, gy, gz, ax, ay, az``.
    """
    if isinstance(samples, np.ndarray):
        arr = np.asarray(samples, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 7:
            raise ValueError(f"expected an (N, 7) sample array, got {arr.shape}")
        return arr[:, 0], arr[:, 1:4], arr[:, 4:7]
    samples = list(samples)
    t = np.array([s.timestamp for s in samples], dtype=np.float64)
    gyro = np.array([s.gyro for s in samples], dtype=np.float64).reshape(-1, 3)
    accel = np.array([s.accel for s in samples], dtype=np.float64).reshape(-1, 3)
    return t, gyro, accel


def to_samples(t, gyro, accel) -> list[ImuSample]:
    return [
        ImuSample(float(ti), tuple(map(float, g)), tuple(map(float, a)))
        for ti, g, a in zip(t, np.asarray(gyro), np.asarray(accel))
    ]


def check_timestamps(t: np.ndarray, dt: float | None = None) -> None:
    if t.size < 2:
        return
    diffs = np.diff(t)
    if np.any(diffs <= 0.0):
        k = int(np.argmax(diffs <= 0.0))
        raise NonMonotonicTimestamps(f"timestamp {k + 1} ({t[k + 1]!r}) does not follow {t[k]!r}")
    if dt is not None and np.any(np.abs(diffs - dt) > JITTER_TOL * dt):
        warnings.warn(
            f"sample spacing deviates from nominal dt={dt} by more than {JITTER_TOL:.0%}",
            TimestampJitter,
            stacklevel=3,
        )


def preintegrate(
    samples,
    bias: BiasState | None = None,
    dt: float = 0.01,
    start: PreintegratedDelta | None = None,
) -> PreintegratedDelta:
    """Run the preintegration recursion over ``samples``.

    Each step uses the sample's bias-corrected gyro and accel over the nominal
    period ``dt``::

        dp += dv*dt + 0.5*dR*(a - ba)*dt^2
        dv += dR*(a - ba)*dt
        dR  = dR * exp((w - bg)*dt)

    ``start`` resumes the recursion from a previous window's terminal state, so
    ``preintegrate(w1 + w2) == preintegrate(w2, start=preintegrate(w1))``
    bit for bit.
    """
    t, gyro, accel = as_arrays(samples)
    if t.size == 0:
        raise EmptyWindow("cannot preintegrate an empty window")
    check_timestamps(t, dt)
    bias = bias or BiasState()
    omega = (gyro - bias.gyro_bias) * dt
    acc = accel - bias.accel_bias

    if start is None:
        start = PreintegratedDelta.identity()
    dR = np.array(start.delta_R, dtype=np.float64)
    dv = np.array(start.delta_v, dtype=np.float64)
    dp = np.array(start.delta_p, dtype=np.float64)
    half_dt2 = 0.5 * dt * dt
    for k in range(t.size):
        a_i = dR @ acc[k]
        dp = dp + dv * dt + a_i * half_dt2
        dv = dv + a_i * dt
        dR = dR @ so3_exp(omega[k])
    count = start.count + t.size
    return PreintegratedDelta(dR, dv, dp, count * dt, count)


def _chunk_count(n_samples: int, n: int, policy: str) -> int:
    if n <= 0:
        raise ValueError("integration factor must be positive")
    if policy not in ("strict", "drop-tail"):
        raise ValueError(f"unknown remainder policy {policy!r}")
    if n_samples % n and policy == "strict":
        raise RemainderPolicyViolation(
            f"{n_samples} samples are not divisible by integration factor {n}"
        )
    return n_samples // n


def extract_features(
    samples,
    n: int = 10,
    bias: BiasState | None = None,
    dt: float = 0.01,
    policy: str = "strict",
) -> np.ndarray:
    """Preintegrate disjoint chunks of ``n`` samples; returns an ``(len/n, 9)`` array."""
    t, gyro, accel = as_arrays(samples)
    if t.size == 0:
        raise EmptyWindow("no samples to extract features from")
    m = _chunk_count(t.size, n, policy)
    check_timestamps(t, dt)
    data = np.column_stack([t, gyro, accel])
    out = np.empty((m, FEATURE_DIM))
    for j in range(m):
        out[j] = preintegrate(data[j * n : (j + 1) * n], bias, dt).flatten()
    return out


def average_baseline(samples, n: int = 10, policy: str = "strict") -> np.ndarray:
    """Per-chunk arithmetic mean of gyro and accel; ``(len/n, 6)`` array."""
    t, gyro, accel = as_arrays(samples)
    if t.size == 0:
        raise EmptyWindow("no samples to average")
    m = _chunk_count(t.size, n, policy)
    raw = np.column_stack([gyro, accel])[: m * n]
    return raw.reshape(m, n, 6).mean(axis=1)


def raw_features(samples) -> np.ndarray:
    _, gyro, accel = as_arrays(samples)
    return np.column_stack([gyro, accel])


def randomize_bias(spec: NoiseSpec, seed: int) -> BiasState:
    """Uniform bias draw in ``[-range, +range]`` per component, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    g = rng.uniform(-1.0, 1.0, 3) * spec.gyro_bias_range
    a = rng.uniform(-1.0, 1.0, 3) * spec.accel_bias_range
    return BiasState(g, a)


def delta_from_features(f, delta_t: float, count: int = 0) -> PreintegratedDelta:
    f = np.asarray(f, dtype=np.float64).reshape(FEATURE_DIM)
    return PreintegratedDelta(so3_exp(f[:3]), f[3:6].copy(), f[6:9].copy(), float(delta_t), count)


def reconstruct_state(
    rotation,
    velocity,
    position,
    delta: PreintegratedDelta,
    gravity=GRAVITY,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Propagate a navigation state across a preintegrated window.

    Returns ``(R_j, v_j, p_j)``. Gravity enters the position as
    ``0.5 * g * delta_t**2``, which is what the per-step recursion sums to.
    """
    r_i = check_rotation(rotation)
    v_i = np.asarray(velocity, dtype=np.float64)
    p_i = np.asarray(position, dtype=np.float64)
    g = np.asarray(gravity, dtype=np.float64)
    dt = delta.delta_t
    r_j = r_i @ delta.delta_R
    v_j = v_i + g * dt + r_i @ delta.delta_v
    p_j = p_i + v_i * dt + 0.5 * g * dt * dt + r_i @ delta.delta_p
    return r_j, v_j, p_j
