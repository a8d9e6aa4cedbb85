"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are collected in
the terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import hashlib
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from oracles import (  # noqa: E402
    expm_series,
    logm_series,
    naive_conv,
    naive_lstm,
    twist,
    untwist,
)

from pifeat.cli import main as cli_main  # noqa: E402
from pifeat.cli import resolve_config, run_bench  # noqa: E402
from pifeat.dataset import PolarOdometry, empirical_covariance, se3_label  # noqa: E402
from pifeat.inference import LstmParams, ModelSpec, conv2d_forward, load_archive, lstm_forward, run_model  # noqa: E402
from pifeat.lie import Pose, se3_exp, se3_log, so3_exp, so3_log  # noqa: E402
from pifeat.losses import (  # noqa: E402
    calibrate_beta,
    geodesic_loss,
    geodesic_loss_gradient_check,
    kitti_relative_errors,
    normalized_displacement_error,
    polar_loss,
    window_displacements,
)
from pifeat.preintegration import BiasState, extract_features, preintegrate, reconstruct_state  # noqa: E402
from pifeat.synthetic import (  # noqa: E402
    NavState,
    Segment,
    TrajectorySpec,
    generate_states,
    propagate,
    states_to_measurements,
)
from pifeat.trajectory import PlanarState, polar_integrate, se3_chain  # noqa: E402

pytestmark = pytest.mark.acceptance

DATA = Path(__file__).parent / "data"
RESULTS: dict[int, str] = {}


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:>2}: {title} ({detail})"
    RESULTS[n] = line
    print(line)
    assert ok, line


def imu_array(samples) -> np.ndarray:
    return np.array([[s.timestamp, *s.gyro, *s.accel] for s in samples])


def random_axes(rng, n):
    a = rng.normal(size=(n, 3))
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def test_01_lie_round_trips():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    n = 10_000
    angles = rng.uniform(0.0, math.pi - 1e-6, n)
    angles[:200] = math.pi - np.logspace(-6, -1, 200)
    angles[200:400] = np.logspace(-12, -2, 200)
    w = random_axes(rng, n) * angles[:, None]
    rho = rng.normal(size=(n, 3)) * 3.0
    so3_err = se3_err = 0.0
    rot = np.empty((n, 3, 3))
    mats = np.empty((n, 4, 4))
    for k in range(n):
        r = so3_exp(w[k])
        rot[k] = r
        so3_err = max(so3_err, float(np.linalg.norm(so3_log(r) - w[k])))
        xi = np.concatenate([rho[k], w[k]])
        t = se3_exp(xi)
        mats[k] = t.matrix()
        se3_err = max(se3_err, float(np.linalg.norm(se3_log(t) - xi)))
    hats = np.zeros((n, 3, 3))
    hats[:, 0, 1], hats[:, 0, 2], hats[:, 1, 2] = -w[:, 2], w[:, 1], -w[:, 0]
    hats -= hats.transpose(0, 2, 1)
    twists = np.zeros((n, 4, 4))
    twists[:, :3, :3] = hats
    twists[:, :3, 3] = rho
    series_so3 = float(np.max(np.abs(expm_series(hats) - rot)))
    series_se3 = float(np.max(np.abs(expm_series(twists) - mats)))
    elapsed = time.perf_counter() - t0
    ok = so3_err < 1e-9 and se3_err < 1e-9 and series_so3 < 1e-12 and series_se3 < 1e-12 and elapsed < 5.0
    report(
        1,
        "Lie-group round trips",
        ok,
        f"so3 {so3_err:.1e}, se3 {se3_err:.1e}, series {max(series_so3, series_se3):.1e}, {elapsed:.2f} s",
    )


def _truth_delta(a: NavState, b: NavState, g):
    dt = b.time - a.time
    rt = a.rotation.T
    return (
        rt @ b.rotation,
        rt @ (b.velocity - a.velocity - g * dt),
        rt @ (b.position - a.position - a.velocity * dt - 0.5 * g * dt * dt),
    )


def _random_spec(rng) -> TrajectorySpec:
    kind = ("constant-twist", "piecewise-constant-twist", "sinusoidal-planar")[int(rng.integers(3))]
    if kind == "piecewise-constant-twist":
        segs = tuple(Segment(float(rng.uniform(1, 4)), tuple(rng.normal(size=3) * 0.3), tuple(rng.normal(size=3))) for _ in range(3))
        return TrajectorySpec(kind, rate=100, duration=10.0, segments=segs)
    if kind == "sinusoidal-planar":
        return TrajectorySpec(kind, rate=100, duration=10.0, frequency=float(rng.uniform(0.1, 1.0)),
                              yaw_rate_amplitude=float(rng.uniform(0.1, 1.0)), accel_amplitude=float(rng.uniform(0.2, 2.0)))
    return TrajectorySpec(kind, rate=100, duration=10.0, omega=tuple(rng.normal(size=3) * 0.3), accel=tuple(rng.normal(size=3)))


def _random_state(rng) -> NavState:
    return NavState(so3_exp(rng.normal(size=3)), rng.normal(size=3) * 3, rng.normal(size=3) * 50)


def test_02_preintegration_oracle():
    rng = np.random.default_rng(2)
    g = np.array([0.0, 0.0, -9.80665])
    t0 = time.perf_counter()
    recon = indep = 0.0
    for _ in range(50):
        spec = _random_spec(rng)
        states = generate_states(spec, _random_state(rng), g)
        samples = states_to_measurements(states, g)
        delta = preintegrate(samples, dt=spec.dt)
        r, v, p = reconstruct_state(states[0].rotation, states[0].velocity, states[0].position, delta, g)
        end = states[-1]
        recon = max(recon, *(float(np.max(np.abs(x - y))) for x, y in ((r, end.rotation), (v, end.velocity), (p, end.position))))
        # same body-frame signal from a second initial state
        other = propagate(_random_state(rng), samples, spec.dt, g)
        da = _truth_delta(states[0], states[-1], g)
        db = _truth_delta(other[0], other[-1], g)
        indep = max(indep, max(float(np.max(np.abs(x - y))) for x, y in zip(da, db)))
    elapsed = time.perf_counter() - t0
    ok = recon < 1e-6 and indep < 1e-9 and elapsed < 30.0
    report(2, "preintegration oracle equivalence", ok, f"reconstruction {recon:.1e}, independence {indep:.1e}, {elapsed:.1f} s")


def test_03_bias_cancellation():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        spec = _random_spec(rng)
        states = generate_states(spec, _random_state(rng))
        bias = BiasState(rng.uniform(-0.05, 0.05, 3), rng.uniform(-0.5, 0.5, 3))
        clean = preintegrate(states_to_measurements(states), dt=spec.dt)
        biased = preintegrate(states_to_measurements(states, bias=bias), bias=bias, dt=spec.dt)
        worst = max(worst, float(np.max(np.abs(clean.delta_R - biased.delta_R))),
                    float(np.max(np.abs(clean.delta_v - biased.delta_v))),
                    float(np.max(np.abs(clean.delta_p - biased.delta_p))))
    report(3, "bias cancellation", worst < 1e-9, f"max delta difference {worst:.1e}")


def test_04_shape_laws():
    rng = np.random.default_rng(4)
    win = lambda n: np.column_stack([np.arange(n) * 0.01, rng.normal(size=(n, 6))])  # noqa: E731
    a = extract_features(win(200), n=10).shape
    b = extract_features(win(1280), n=10).shape
    report(4, "shape/compression laws", a == (20, 9) and b == (128, 9), f"200 -> {a}, 1280 -> {b}")


def test_05_inference_oracles():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        steps, d, h = (int(x) for x in rng.integers(1, [7, 6, 5], endpoint=True))
        x = rng.normal(size=(steps, d)).astype(np.float32)
        params = [
            LstmParams(*(rng.uniform(-0.6, 0.6, s).astype(np.float32) for s in ((4 * h, d), (4 * h, h), (4 * h,), (4 * h,))))
            for _ in range(2)
        ]
        got = lstm_forward(x, *params)
        ref = np.concatenate(
            [naive_lstm(x, *vars(params[0]).values()), naive_lstm(x, *vars(params[1]).values(), reverse=True)], axis=1
        )
        worst = max(worst, float(np.max(np.abs(got - ref))))
        kh, kw = (int(v) for v in rng.integers(1, 4, 2))
        c, f = (int(v) for v in rng.integers(1, 5, 2))
        img = rng.normal(size=(int(rng.integers(kh, kh + 6)), int(rng.integers(kw, kw + 6)), c)).astype(np.float32)
        kern = rng.normal(size=(kh, kw, c, f)).astype(np.float32)
        bias = rng.normal(size=f).astype(np.float32)
        worst = max(worst, float(np.max(np.abs(conv2d_forward(img, kern, bias) - naive_conv(img, kern, bias)))))
    archive = load_archive(DATA / "golden_cnn.piwa")
    spec = ModelSpec.from_metadata(archive.metadata)
    x = np.loadtxt(DATA / "golden_features.csv", delimiter=",", skiprows=1)[:, 4:]
    expected = np.loadtxt(DATA / "golden_predictions.csv", delimiter=",", skiprows=1)[1:].astype(np.float32)
    y = run_model(spec, archive, x)
    golden = np.array([y.delta_l, y.delta_phi], dtype=np.float32).tobytes() == expected.tobytes()
    report(5, "inference oracle equivalence", worst < 1e-5 and golden, f"layer deviation {worst:.1e}, golden bit-exact {golden}")


def test_06_losses():
    rng = np.random.default_rng(6)
    gt = [se3_exp(rng.normal(size=6) * 0.5) for _ in range(10)]
    exact = np.array([se3_log(t) for t in gt])
    cov = empirical_covariance(rng.normal(size=(60, 6)) * [1, 1, 0.3, 0.05, 0.05, 0.4])
    zero = geodesic_loss(exact, gt, cov).total
    # round-off floor for an exact prediction; the smallest perturbation sits far above it
    floor = 1e-20
    smallest = min(
        geodesic_loss(exact + np.eye(6)[j] * 1e-4 * (np.arange(10)[:, None] == i), gt, cov).total
        for i in range(10)
        for j in range(6)
    )
    nonzero = smallest > 1e6 * floor
    pred = exact + rng.normal(size=exact.shape) * 0.2
    inv = np.linalg.inv(cov.matrix)
    oracle = 0.0
    for x, t in zip(pred, gt):
        gi = untwist(logm_series(np.linalg.inv(t.matrix()) @ expm_series(twist(x))))
        oracle += gi @ inv @ gi
    series_dev = abs(geodesic_loss(pred, gt, cov).total - oracle)
    grad_dev = geodesic_loss_gradient_check(pred[:4], gt[:4], cov, step=1e-5)
    p, y = rng.normal(size=(40, 2)), rng.normal(size=(40, 2))
    beta = 0.37
    loop = 0.0
    for a, b in zip(p, y):
        loop += (a[0] - b[0]) ** 2 + beta * (a[1] - b[1]) ** 2
    polar_dev = abs(polar_loss(p, y, beta) - loop)
    cb = calibrate_beta(p, y)
    r = p - y
    beta_dev = abs(float(np.sum(r[:, 0] ** 2)) - cb * float(np.sum(r[:, 1] ** 2)))
    ok = zero < floor and nonzero and series_dev < 1e-8 and grad_dev < 1e-4 and polar_dev < 1e-12 and beta_dev < 1e-12
    report(
        6,
        "loss correctness",
        ok,
        f"exact {zero:.1e}, perturbed >= {smallest:.1e}, series {series_dev:.1e}, gradient {grad_dev:.1e}, polar {polar_dev:.1e}, beta {beta_dev:.1e}",
    )


def test_07_metrics():
    gt = [Pose(translation=[float(k), 0.0, 0.0]) for k in range(1000)]
    scaled = kitti_relative_errors(gt, [Pose(translation=p.translation * 1.1) for p in gt])
    t_ok = all(abs(b["t_rel_percent"] - 10.0) <= 0.01 and b["r_rel_deg_per_100m"] == 0.0 for b in scaled.buckets.values())
    drift = kitti_relative_errors(gt, [Pose(so3_exp([0, 0, math.radians(k / 100.0)]), p.translation) for k, p in enumerate(gt)])
    r_ok = all(abs(b["r_rel_deg_per_100m"] - 1.0) <= 0.01 for b in drift.buckets.values())
    # walking-pace sequence cut into 200-sample windows with a 5.52 % endpoint error injected
    t = np.arange(12_001) / 100.0
    walk = np.column_stack([1.4 * t + 0.04 * np.sin(4 * math.pi * t), 2.0 * np.sin(0.05 * t)])
    g = window_displacements(walk, 200)
    ang = 2 * math.asin(0.0552 / 2)
    rot = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
    disp = normalized_displacement_error(g, g @ rot.T).percent
    ok = t_ok and r_ok and len(scaled.buckets) == 8 and abs(disp - 5.52) <= 0.01
    report(7, "metric correctness", ok, f"t_rel {scaled.t_rel:.4f} %, r_rel {drift.r_rel:.4f} deg/100m, displacement {disp:.4f} %")


def test_08_trajectory_inverses():
    states = generate_states(TrajectorySpec("sinusoidal-planar", rate=100, duration=10.0), NavState(velocity=[1.2, 0, 0]))
    gt = [Pose(s.rotation, s.position) for s in states[:1000]]
    chained = se3_chain(gt[0], [se3_label(a, b) for a, b in zip(gt, gt[1:])])
    chain_err = max(float(np.max(np.abs(a.matrix() - b.matrix()))) for a, b in zip(chained, gt))
    sq = polar_integrate(PlanarState(), [PolarOdometry(1.0, math.pi / 2)] * 4)[-1]
    sq_err = max(abs(sq.x), abs(sq.y))
    report(8, "trajectory inverses", chain_err < 1e-6 and sq_err < 1e-12, f"chain {chain_err:.1e} over 1000 poses, square {sq_err:.1e}")


def test_09_efficiency_ratio():
    result = run_bench(resolve_config("bench", {"iterations": 100}, None, {}))
    ratio = result["raw_over_preintegrated_ratio"]
    report(
        9,
        "efficiency ratio",
        ratio >= 2.0 and result["inference_raw"]["runs"] >= 100,
        f"20x9 median {result['inference_preintegrated']['median_ms']:.2f} ms, "
        f"200x6 median {result['inference_raw']['median_ms']:.2f} ms, ratio {ratio:.1f}",
    )


def _pipeline(root: Path) -> list[Path]:
    seq = root / "seq"
    assert cli_main(["synth", "--out-dir", str(seq), "--kind", "sinusoidal-planar", "--duration", "6",
                     "--gyro-noise", "0.002", "--accel-noise", "0.02", "--accel-bias-range", "0.1", "--seed", "11"]) == 0
    feats = root / "features.csv"
    assert cli_main(["extract", "--imu", str(seq / "imu.csv"), "--poses", str(seq / "poses.csv"), "--window", "200",
                     "--out", str(feats)]) == 0
    preds = root / "predictions.csv"
    assert cli_main(["infer", "--archive", str(DATA / "golden_cnn.piwa"), "--features", str(feats), "--out", str(preds)]) == 0
    traj = root / "trajectory.csv"
    assert cli_main(["integrate", "--predictions", str(preds), "--out", str(traj)]) == 0
    return [seq / "imu.csv", seq / "poses.csv", feats, root / "features_labels.csv", preds, traj]


def test_10_determinism(tmp_path):
    a = _pipeline(tmp_path / "run1")
    b = _pipeline(tmp_path / "run2")
    same = [x.read_bytes() == y.read_bytes() for x, y in zip(a, b)]
    digest = hashlib.sha256(b"".join(p.read_bytes() for p in a)).hexdigest()[:12]
    report(10, "determinism", all(same), f"{sum(same)}/{len(same)} CSVs byte-identical, sha256 {digest}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
