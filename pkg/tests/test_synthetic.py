import math

import numpy as np
import pytest

from pifeat.errors import ConfigError, NonUniformTimestamps
from pifeat.lie import so3_exp
from pifeat.preintegration import GRAVITY, BiasState, NoiseSpec, preintegrate
from pifeat.synthetic import (
    NavState,
    Segment,
    TrajectorySpec,
    box_muller,
    generate_states,
    propagate,
    states_to_measurements,
)


def max_state_error(a, b):
    return max(
        max(np.max(np.abs(x.position - y.position)) for x, y in zip(a, b)),
        max(np.max(np.abs(x.velocity - y.velocity)) for x, y in zip(a, b)),
        max(np.max(np.abs(x.rotation - y.rotation)) for x, y in zip(a, b)),
    )


def test_constant_state_without_motion():
    states = generate_states(TrajectorySpec(duration=1.0), NavState(), gravity=np.zeros(3))
    assert len(states) == 101
    for s in states:
        assert np.array_equal(s.rotation, np.eye(3))
        assert np.array_equal(s.velocity, np.zeros(3)) and np.array_equal(s.position, np.zeros(3))


def test_constant_accel_velocity_closed_form():
    spec = TrajectorySpec(duration=1.0, rate=100, accel=(1.0, 0.0, 0.0))
    states = generate_states(spec, NavState(), gravity=np.zeros(3))
    assert len(states) == 101
    assert np.allclose(states[-1].velocity, [1.0, 0, 0], atol=1e-12)
    # discrete position sum: sum_k (v_k dt + a dt^2 / 2) = a T^2 / 2
    assert np.allclose(states[-1].position, [0.5, 0, 0], atol=1e-12)


def test_full_turn_closes():
    spec = TrajectorySpec(duration=2 * math.pi, rate=100, omega=(0.0, 0.0, 1.0))
    final = generate_states(spec, NavState(), gravity=np.zeros(3))[-1].rotation
    assert np.max(np.abs(final - np.eye(3))) < 1e-6
    # a 10x finer reference lands on the same rotation
    fine = TrajectorySpec(duration=2 * math.pi, rate=1000, omega=(0.0, 0.0, 1.0))
    ref = generate_states(fine, NavState(), gravity=np.zeros(3))[-1].rotation
    assert np.max(np.abs(final - ref)) < 1e-6


def test_stationary_specific_force():
    r0 = so3_exp([0.2, -0.3, 0.7])
    states = generate_states(TrajectorySpec(duration=0.5), NavState(r0))
    samples = states_to_measurements(states)
    for s in samples:
        assert np.allclose(s.gyro, 0.0, atol=1e-12)
        assert np.allclose(s.accel, -r0.T @ GRAVITY, atol=1e-12)
    level = states_to_measurements(generate_states(TrajectorySpec(duration=0.1), NavState()))
    assert np.allclose(level[0].accel, [0, 0, 9.80665], atol=1e-12)


@pytest.mark.parametrize(
    "spec",
    [
        TrajectorySpec("constant-twist", duration=10.0, omega=(0.1, 0.2, -0.3), accel=(0.5, -0.1, 0.2)),
        TrajectorySpec("sinusoidal-planar", duration=10.0),
        TrajectorySpec(
            "piecewise-constant-twist",
            duration=10.0,
            segments=(Segment(3.0, (0, 0, 0.3), (1, 0, 0)), Segment(4.0, (0.1, 0, -0.2), (0, 0.5, 0))),
        ),
    ],
    ids=lambda s: s.kind,
)
def test_round_trip_exact(spec):
    init = NavState(so3_exp([0.5, 0.1, -0.4]), [1.0, 2.0, 0.0], [10.0, 0.0, 0.0])
    states = generate_states(spec, init)
    back = propagate(init, states_to_measurements(states), spec.dt)
    assert len(back) == len(states) == 1001
    assert max_state_error(states, back) < 1e-9


def test_round_trip_ten_thousand_steps():
    spec = TrajectorySpec("sinusoidal-planar", rate=100, duration=100.0)
    init = NavState(velocity=[1.0, 0.0, 0.0])
    states = generate_states(spec, init)
    assert len(states) == 10_001
    back = propagate(init, states_to_measurements(states), spec.dt)
    assert max_state_error(states, back) < 1e-9


def test_bias_cancels_in_preintegration():
    spec = TrajectorySpec("sinusoidal-planar", duration=2.0)
    states = generate_states(spec, NavState())
    bias = BiasState([0.01, -0.02, 0.005], [0.2, -0.1, 0.3])
    clean = preintegrate(states_to_measurements(states), dt=spec.dt)
    biased = preintegrate(states_to_measurements(states, bias=bias), bias=bias, dt=spec.dt)
    assert np.max(np.abs(clean.flatten() - biased.flatten())) < 1e-9


def test_noise_is_seeded_and_scaled():
    states = generate_states(TrajectorySpec(duration=350.0), NavState())
    noise = NoiseSpec(gyro_noise_std=0.01, accel_noise_std=0.1)
    a = np.array([s.gyro + s.accel for s in states_to_measurements(states, noise=noise, seed=5)])
    b = np.array([s.gyro + s.accel for s in states_to_measurements(states, noise=noise, seed=5)])
    assert np.array_equal(a, b)
    clean = np.array([s.gyro + s.accel for s in states_to_measurements(states)])
    resid = a - clean
    assert resid.shape[0] * 3 >= 100_000
    assert abs(resid[:, :3].std() / 0.01 - 1) < 0.05
    assert abs(resid[:, 3:].std() / 0.1 - 1) < 0.05


def test_box_muller_statistics():
    z = box_muller(np.random.default_rng(1), 100_001)
    assert z.shape == (100_001,)
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1) < 0.05
    # same stream as the documented construction
    rng = np.random.default_rng(3)
    u1 = 1.0 - rng.random(2)
    u2 = rng.random(2)
    expected = [
        math.sqrt(-2 * math.log(u1[0])) * math.cos(2 * math.pi * u2[0]),
        math.sqrt(-2 * math.log(u1[0])) * math.sin(2 * math.pi * u2[0]),
        math.sqrt(-2 * math.log(u1[1])) * math.cos(2 * math.pi * u2[1]),
    ]
    assert np.allclose(box_muller(np.random.default_rng(3), 3), expected, atol=0, rtol=1e-15)


def test_non_uniform_states_rejected():
    states = generate_states(TrajectorySpec(duration=0.05), NavState())
    states[2] = NavState(states[2].rotation, states[2].velocity, states[2].position, states[2].time + 0.004)
    with pytest.raises(NonUniformTimestamps):
        states_to_measurements(states)


@pytest.mark.parametrize(
    "kwargs", [dict(kind="spiral"), dict(rate=0.0), dict(duration=-1.0), dict(kind="piecewise-constant-twist")]
)
def test_invalid_spec(kwargs):
    with pytest.raises(ConfigError):
        TrajectorySpec(**kwargs)


def test_piecewise_segments_switch():
    spec = TrajectorySpec(
        "piecewise-constant-twist",
        duration=2.0,
        segments=(Segment(1.0, (0, 0, 1), (0, 0, 0)), Segment(1.0, (0, 0, -1), (0, 0, 0))),
    )
    assert spec.body_inputs(0.5)[0][2] == 1.0
    assert spec.body_inputs(1.5)[0][2] == -1.0
    final = generate_states(spec, NavState(), gravity=np.zeros(3))[-1]
    assert np.max(np.abs(final.rotation - np.eye(3))) < 1e-12
