"""Synthetic trajectories and the IMU measurements that integrate back into them.

Forward model (one step of length ``dt``, noise-free)::

    R' = R exp(w dt)
    v' = v + g dt + R f dt
    p' = p + v dt + 0.5 g dt^2 + 0.5 R f dt^2

where ``w`` is the body angular rate and ``f`` the specific force, i.e. the
body-frame kinematic acceleration minus gravity rotated into the body.
:func:`states_to_measurements` is the exact algebraic inverse of
:func:`propagate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, NonUniformTimestamps
from .lie import check_rotation, so3_exp, so3_log
from .preintegration import GRAVITY, BiasState, ImuSample, NoiseSpec, as_arrays

KINDS = ("constant-twist", "piecewise-constant-twist", "sinusoidal-planar")


@dataclass(frozen=True, eq=False)
class NavState:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=np.float64).reshape(3))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))


@dataclass(frozen=True)
class Segment:
    duration: float
    omega: tuple[float, float, float]
    accel: tuple[float, float, float]


@dataclass(frozen=True)
class TrajectorySpec:
    """Body-frame motion profile.

    ``omega`` is the body angular rate (rad/s) and ``accel`` the body-frame
    kinematic acceleration (m/s^2, gravity excluded). For
    ``sinusoidal-planar`` the yaw rate is ``yaw_rate_amplitude*sin(2 pi f t)``
    and the forward acceleration ``accel_amplitude*cos(2 pi f t)``.
    """

    kind: str = "constant-twist"
    rate: float = 100.0
    duration: float = 10.0
    omega: tuple[float, float, float] = (0.0, 0.0, 0.0)
    accel: tuple[float, float, float] = (0.0, 0.0, 0.0)
    segments: tuple[Segment, ...] = ()
    frequency: float = 0.5
    yaw_rate_amplitude: float = 0.5
    accel_amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown trajectory kind {self.kind!r}; expected one of {KINDS}")
        if not self.rate > 0:
            raise ConfigError("sample rate must be positive")
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if self.kind == "piecewise-constant-twist":
            if not self.segments:
                raise ConfigError("piecewise-constant-twist needs at least one segment")
            if any(not s.duration > 0 for s in self.segments):
                raise ConfigError("segment durations must be positive")

    @property
    def dt(self) -> float:
        # the step divides the duration exactly, so a full turn closes
        return self.duration / self.steps

    @property
    def steps(self) -> int:
        return max(1, int(round(self.duration * self.rate)))

    def body_inputs(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Angular rate and kinematic body acceleration at time ``t`` from start."""
        if self.kind == "constant-twist":
            return np.array(self.omega, dtype=float), np.array(self.accel, dtype=float)
        if self.kind == "piecewise-constant-twist":
            elapsed = 0.0
            for seg in self.segments:
                elapsed += seg.duration
                if t < elapsed:
                    break
            # past the last segment the final one is held
            return np.array(seg.omega, dtype=float), np.array(seg.accel, dtype=float)
        phase = 2.0 * math.pi * self.frequency * t
        return (
            np.array([0.0, 0.0, self.yaw_rate_amplitude * math.sin(phase)]),
            np.array([self.accel_amplitude * math.cos(phase), 0.0, 0.0]),
        )


def step(state: NavState, omega, specific_force, dt: float, gravity=GRAVITY) -> NavState:
    g = np.asarray(gravity, dtype=np.float64)
    a = state.rotation @ np.asarray(specific_force, dtype=np.float64)
    return NavState(
        state.rotation @ so3_exp(np.asarray(omega, dtype=np.float64) * dt),
        state.velocity + g * dt + a * dt,
        state.position + state.velocity * dt + 0.5 * g * dt * dt + 0.5 * a * dt * dt,
        state.time + dt,
    )


def propagate(initial: NavState, samples, dt: float, gravity=GRAVITY, bias: BiasState | None = None) -> list[NavState]:
    """Strapdown integration of measurements; returns ``len(samples) + 1`` states."""
    _, gyro, accel = as_arrays(samples)
    bias = bias or BiasState()
    states = [initial]
    for w, f in zip(gyro - bias.gyro_bias, accel - bias.accel_bias):
        states.append(step(states[-1], w, f, dt, gravity))
    return states


def generate_states(spec: TrajectorySpec, initial: NavState | None = None, gravity=GRAVITY) -> list[NavState]:
    """Integrate ``spec`` forward; returns ``spec.steps + 1`` states."""
    state = initial or NavState()
    check_rotation(state.rotation)
    g = np.asarray(gravity, dtype=np.float64)
    dt = spec.dt
    states = [state]
    for k in range(spec.steps):
        omega, accel = spec.body_inputs(k * dt)
        f = accel - state.rotation.T @ g
        state = step(state, omega, f, dt, g)
        states.append(state)
    return states


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normal draws from pairs of uniforms (see docs/FORMATS.md)."""
    pairs = (size + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1], keeps log finite
    u2 = rng.random(pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(2.0 * math.pi * u2)
    z[1::2] = r * np.sin(2.0 * math.pi * u2)
    return z[:size]


def states_to_measurements(
    states: Sequence[NavState],
    gravity=GRAVITY,
    bias: BiasState | None = None,
    noise: NoiseSpec | None = None,
    seed: int = 0,
    rtol: float = 1e-6,
) -> list[ImuSample]:
    """Invert the forward model; sample ``k`` drives the step ``k -> k+1``.

    Returns ``len(states) - 1`` samples timestamped at the start of their step.
    """
    if len(states) < 2:
        raise ValueError("need at least two states")
    t = np.array([s.time for s in states])
    diffs = np.diff(t)
    dt = float(diffs.mean())
    if not dt > 0 or np.max(np.abs(diffs - dt)) > rtol * dt:
        raise NonUniformTimestamps("states are not uniformly spaced in time")
    g = np.asarray(gravity, dtype=np.float64)
    n = len(states) - 1
    gyro = np.empty((n, 3))
    accel = np.empty((n, 3))
    for k in range(n):
        a, b = states[k], states[k + 1]
        gyro[k] = so3_log(a.rotation.T @ b.rotation) / dt
        accel[k] = a.rotation.T @ ((b.velocity - a.velocity) / dt - g)
    if bias is not None:
        gyro += bias.gyro_bias
        accel += bias.accel_bias
    if noise is not None and (noise.gyro_noise_std > 0 or noise.accel_noise_std > 0):
        rng = np.random.default_rng(seed)
        z = box_muller(rng, 6 * n).reshape(n, 6)
        gyro += noise.gyro_noise_std * z[:, :3]
        accel += noise.accel_noise_std * z[:, 3:]
    return [
        ImuSample(float(t[k]), tuple(map(float, gyro[k])), tuple(map(float, accel[k])))
        for k in range(n)
    ]
