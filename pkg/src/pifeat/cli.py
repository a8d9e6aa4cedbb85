"""Command-line front end: ``pifeat {synth,extract,infer,integrate,eval,bench}``.

Settings resolve as command-line flags > ``--config`` JSON file > defaults
(with ``PIFEAT_SEED`` replacing the default seed). Every output file is
written atomically.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    POSE_HEADER,
    PolarOdometry,
    SequenceRecord,
    WindowConfig,
    format_rows,
    make_windows,
    parse_kitti_sequence,
    parse_oxford_sequence,
    pose_row,
    read_kitti_poses,
    read_pose_csv,
    read_rows,
    write_imu_csv,
    write_kitti_poses,
    write_oxford_csv,
    write_pose_csv,
)
from .errors import ConfigError, EmptyWindow, ParseError, PifeatError
from .fileio import atomic_write
from .inference.archive import load_archive
from .inference.models import ModelSpec, init_archive, run_model
from .lie import Pose
from .losses import (
    kitti_relative_errors,
    normalized_displacement_error,
    window_displacements,
)
from .preintegration import GRAVITY, NoiseSpec, extract_features, randomize_bias
from .synthetic import (
    NavState,
    Segment,
    TrajectorySpec,
    generate_states,
    states_to_measurements,
)
from .trajectory import PlanarState, polar_integrate, se3_chain

BIAS_SEED_OFFSET = 1_000_003  # keeps bias and noise streams independent
SE3_COLUMNS = ["rho_x", "rho_y", "rho_z", "theta_x", "theta_y", "theta_z"]


@dataclass
class RunConfig:
    subcommand: str
    # shared
    seed: int = 0
    gravity: tuple[float, float, float] = tuple(GRAVITY)
    out: str | None = None
    out_dir: str | None = None
    # dataset / extraction
    imu: str | None = None
    poses: str | None = None
    oxford: str | None = None
    kitti_poses: bool = False
    window: int | None = None
    stride: int | None = None
    input_kind: str = "preintegrated"
    n: int = 10
    remainder_policy: str = "strict"
    labels_out: str | None = None
    # synthesis
    kind: str = "constant-twist"
    rate: float = 100.0
    duration: float = 10.0
    omega: tuple[float, float, float] = (0.0, 0.0, 0.1)
    accel: tuple[float, float, float] = (0.5, 0.0, 0.0)
    segments: list = field(default_factory=list)
    frequency: float = 0.5
    yaw_rate_amplitude: float = 0.5
    accel_amplitude: float = 1.0
    gyro_noise: float = 0.0
    accel_noise: float = 0.0
    gyro_bias_range: float = 0.0
    accel_bias_range: float = 0.0
    pose_format: str = "csv"
    # inference / integration / evaluation
    archive: str | None = None
    features: str | None = None
    predictions: str | None = None
    step_seconds: float = 1.0
    gt: str | None = None
    pred: str | None = None
    metric: str = "kitti"
    out_json: str | None = None
    out_csv: str | None = None
    # bench
    iterations: int = 100
    architecture: str = "baseline_se3"

    def __post_init__(self):
        self.gravity = tuple(float(g) for g in self.gravity)
        if len(self.gravity) != 3:
            raise ConfigError("gravity must have three components")
        if self.window is not None and self.window <= 0:
            raise ConfigError("window must be positive")
        if self.stride is not None and self.stride <= 0:
            raise ConfigError("stride must be positive")
        if self.n <= 0:
            raise ConfigError("integration factor n must be positive")
        if self.remainder_policy not in ("strict", "drop-tail"):
            raise ConfigError("remainder policy must be 'strict' or 'drop-tail'")
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        if self.step_seconds <= 0:
            raise ConfigError("step-seconds must be positive")

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) in (None, "")]
        if missing:
            flags = ", ".join("--" + n.replace("_", "-") for n in missing)
            raise ConfigError(f"{self.subcommand}: missing required setting(s) {flags}")


FIELD_NAMES = {f.name for f in dataclasses.fields(RunConfig)}


def resolve_config(subcommand: str, flags: dict, config_path: str | None = None, env=os.environ) -> RunConfig:
    values: dict = {}
    if env.get("PIFEAT_SEED"):
        try:
            values["seed"] = int(env["PIFEAT_SEED"])
        except ValueError:
            raise ConfigError(f"PIFEAT_SEED must be an integer, got {env['PIFEAT_SEED']!r}") from None
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", config_path) from None
        unknown = set(loaded) - FIELD_NAMES
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    values.update({k: v for k, v in flags.items() if v is not None})
    values["subcommand"] = subcommand
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ------------------------------------------------------------------ synth


def trajectory_spec(cfg: RunConfig) -> TrajectorySpec:
    segments = tuple(
        Segment(float(s["duration"]), tuple(s["omega"]), tuple(s["accel"])) for s in cfg.segments
    )
    return TrajectorySpec(
        kind=cfg.kind,
        rate=cfg.rate,
        duration=cfg.duration,
        omega=tuple(cfg.omega),
        accel=tuple(cfg.accel),
        segments=segments,
        frequency=cfg.frequency,
        yaw_rate_amplitude=cfg.yaw_rate_amplitude,
        accel_amplitude=cfg.accel_amplitude,
    )


def cmd_synth(cfg: RunConfig) -> list[Path]:
    cfg.require("out_dir")
    spec = trajectory_spec(cfg)
    noise = NoiseSpec(cfg.gyro_noise, cfg.accel_noise, cfg.gyro_bias_range, cfg.accel_bias_range)
    states = generate_states(spec, NavState(), cfg.gravity)
    bias = randomize_bias(noise, cfg.seed + BIAS_SEED_OFFSET)
    samples = states_to_measurements(states, cfg.gravity, bias, noise, seed=cfg.seed)
    imu = np.array([[s.timestamp, *s.gyro, *s.accel] for s in samples])
    out = Path(cfg.out_dir)
    poses = [Pose(s.rotation, s.position) for s in states]
    times = [s.time for s in states]
    if cfg.pose_format == "oxford":
        path = out / "oxford.csv"
        write_oxford_csv(path, imu, poses[: len(imu)])
        return [path]
    write_imu_csv(out / "imu.csv", imu)
    if cfg.pose_format == "kitti":
        # KITTI ground truth is at 10 Hz: keep every rate/10-th state
        every = max(1, int(round(cfg.rate / 10.0)))
        write_kitti_poses(out / "poses.txt", poses[::every])
        return [out / "imu.csv", out / "poses.txt"]
    write_pose_csv(out / "poses.csv", times, poses)
    return [out / "imu.csv", out / "poses.csv"]


# ---------------------------------------------------------------- extract


def load_record(cfg: RunConfig) -> SequenceRecord:
    if cfg.oxford:
        return parse_oxford_sequence(cfg.oxford)
    cfg.require("imu", "poses")
    return parse_kitti_sequence(cfg.imu, cfg.poses, kitti_poses=cfg.kitti_poses)


def default_window(record: SequenceRecord) -> int:
    return 200 if record.frame == "oxford" else 1280


def feature_columns(kind: str) -> list[str]:
    return [f"f{i}" for i in range(9 if kind == "preintegrated" else 6)]


def cmd_extract(cfg: RunConfig) -> list[Path]:
    cfg.require("out")
    record = load_record(cfg)
    if record.imu.shape[0] == 0:
        raise EmptyWindow("input sequence has no IMU samples")
    window = cfg.window or default_window(record)
    wcfg = WindowConfig(window, cfg.stride or window, cfg.input_kind, cfg.n)
    examples = make_windows(record, wcfg)
    if not examples:
        raise EmptyWindow(f"sequence of {record.imu.shape[0]} samples is shorter than one window ({window})")
    rows, label_rows = [], []
    for w, ex in enumerate(examples):
        for k, f in enumerate(ex.features):
            rows.append([w, k, ex.start, ex.end, *f])
        polar = ex.polar_label or PolarOdometry(float("nan"), float("nan"))
        label_rows.append([w, ex.start, ex.end, ex.t_start, ex.t_end, *ex.se3_label, polar.delta_l, polar.delta_phi])
    out = Path(cfg.out)
    labels_out = Path(cfg.labels_out) if cfg.labels_out else out.with_name(out.stem + "_labels.csv")
    header = ["window", "step", "start_index", "end_index"] + feature_columns(cfg.input_kind)
    atomic_write(out, format_rows(header, rows))
    label_header = ["window", "start_index", "end_index", "t_start", "t_end", *SE3_COLUMNS, "delta_l", "delta_phi"]
    atomic_write(labels_out, format_rows(label_header, label_rows))
    return [out, labels_out]


# ------------------------------------------------------------------ infer


def read_feature_windows(path) -> dict[int, np.ndarray]:
    header, rows = read_rows(path)
    if header[:4] != ["window", "step", "start_index", "end_index"]:
        raise ParseError("not a features file (expected window,step,start_index,end_index,...)", str(path), 1)
    windows: dict[int, list] = {}
    for _, v in rows:
        windows.setdefault(int(v[0]), []).append(v[4:])
    return {w: np.array(v) for w, v in windows.items()}


def f32(x) -> float:
    return float(np.float32(x))


def cmd_infer(cfg: RunConfig) -> list[Path]:
    cfg.require("archive", "features", "out")
    archive = load_archive(cfg.archive)
    spec = ModelSpec.from_metadata(archive.metadata)
    windows = read_feature_windows(cfg.features)
    rows = []
    for w in sorted(windows):
        y = run_model(spec, archive, windows[w])
        if isinstance(y, PolarOdometry):
            rows.append([w, f32(y.delta_l), f32(y.delta_phi)])
        else:
            rows += [[w, k, *map(f32, r)] for k, r in enumerate(y)]
    header = ["window", "delta_l", "delta_phi"] if spec.output_dim == 2 else ["window", "step", *SE3_COLUMNS]
    atomic_write(cfg.out, format_rows(header, rows))
    return [Path(cfg.out)]


# -------------------------------------------------------------- integrate


def cmd_integrate(cfg: RunConfig) -> list[Path]:
    cfg.require("predictions", "out")
    header, rows = read_rows(cfg.predictions)
    if header[-2:] == ["delta_l", "delta_phi"]:
        steps = [PolarOdometry(v[-2], v[-1]) for _, v in rows]
        states = polar_integrate(PlanarState(), steps)
        text = format_rows(["step", "heading", "x", "y"], ([k, s.heading, s.x, s.y] for k, s in enumerate(states)))
    elif header[-6:] == SE3_COLUMNS:
        poses = se3_chain(Pose(), np.array([v[-6:] for _, v in rows]).reshape(-1, 6))
        text = format_rows(POSE_HEADER, (pose_row(k * cfg.step_seconds, p) for k, p in enumerate(poses)))
    else:
        raise ParseError("predictions must end with delta_l,delta_phi or se(3) columns", cfg.predictions, 1)
    atomic_write(cfg.out, text)
    return [Path(cfg.out)]


# ------------------------------------------------------------------- eval


def _read_trajectory(path: str, kitti: bool) -> list[Pose]:
    return read_kitti_poses(path)[1] if kitti else read_pose_csv(path)[1]


def cmd_eval(cfg: RunConfig) -> list[Path]:
    cfg.require("gt", "pred", "out_json")
    gt = _read_trajectory(cfg.gt, cfg.kitti_poses)
    pred = _read_trajectory(cfg.pred, cfg.kitti_poses)
    written = [Path(cfg.out_json)]
    if cfg.metric == "kitti":
        report = kitti_relative_errors(gt, pred)
        atomic_write(cfg.out_json, report.to_json())
        if cfg.out_csv:
            atomic_write(cfg.out_csv, report.to_csv())
            written.append(Path(cfg.out_csv))
    elif cfg.metric == "displacement":
        window = cfg.window or 200
        g = window_displacements([p.translation for p in gt], window, cfg.stride)
        p = window_displacements([p.translation for p in pred], window, cfg.stride)
        rep = normalized_displacement_error(g, p)
        payload = {"metric": "normalized_displacement_error", "percent": rep.percent, "windows": rep.windows, "skipped": rep.skipped}
        atomic_write(cfg.out_json, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        raise ConfigError(f"unknown metric {cfg.metric!r}; expected 'kitti' or 'displacement'")
    return written


# ------------------------------------------------------------------ bench


def _timings(fn, iterations: int) -> dict:
    fn()  # warm-up
    samples = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    arr = np.array(samples) * 1e3
    return {"median_ms": float(np.median(arr)), "p95_ms": float(np.percentile(arr, 95)), "runs": iterations}


def run_bench(cfg: RunConfig) -> dict:
    window = cfg.window or 200
    rng = np.random.default_rng(cfg.seed)
    dt = 0.01
    samples = np.column_stack([np.arange(window) * dt, rng.normal(size=(window, 6))])
    pi_spec = ModelSpec(cfg.architecture, "preintegrated", window, cfg.n)
    raw_spec = ModelSpec(cfg.architecture, "raw", window, cfg.n)
    pi_archive = init_archive(pi_spec, cfg.seed)
    raw_archive = init_archive(raw_spec, cfg.seed)
    feats = extract_features(samples, cfg.n, dt=dt)
    raw = samples[:, 1:]
    result = {
        "architecture": cfg.architecture,
        "window": window,
        "integration_factor": cfg.n,
        "preintegrated_input_shape": list(pi_spec.input_shape),
        "raw_input_shape": list(raw_spec.input_shape),
        "feature_extraction_per_window": _timings(lambda: extract_features(samples, cfg.n, dt=dt), cfg.iterations),
        "inference_preintegrated": _timings(lambda: run_model(pi_spec, pi_archive, feats), cfg.iterations),
        "inference_raw": _timings(lambda: run_model(raw_spec, raw_archive, raw), cfg.iterations),
    }
    result["raw_over_preintegrated_ratio"] = (
        result["inference_raw"]["median_ms"] / result["inference_preintegrated"]["median_ms"]
    )
    return result


def cmd_bench(cfg: RunConfig) -> list[Path]:
    result = run_bench(cfg)
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if cfg.out:
        atomic_write(cfg.out, text)
        return [Path(cfg.out)]
    sys.stdout.write(text)
    return []


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "infer": cmd_infer,
    "integrate": cmd_integrate,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


# ----------------------------------------------------------------- parser


def _add(p: argparse.ArgumentParser, *flags: str, **kw) -> None:
    kw.setdefault("default", None)
    p.add_argument(*flags, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pifeat", description="IMU preintegrated features toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        _add(p, "--config", help="JSON file with RunConfig settings")
        _add(p, "--seed", type=int, help="random seed (env PIFEAT_SEED overrides the default)")

    p = sub.add_parser("synth", help="write a synthetic IMU + ground-truth sequence")
    common(p)
    _add(p, "--out-dir", help="output directory")
    _add(p, "--kind", choices=["constant-twist", "piecewise-constant-twist", "sinusoidal-planar"])
    _add(p, "--rate", type=float, help="IMU rate in Hz (default 100)")
    _add(p, "--duration", type=float, help="seconds (default 10)")
    _add(p, "--omega", type=float, nargs=3, metavar=("WX", "WY", "WZ"), help="body angular rate, rad/s")
    _add(p, "--accel", type=float, nargs=3, metavar=("AX", "AY", "AZ"), help="body acceleration, m/s^2")
    _add(p, "--frequency", type=float)
    _add(p, "--yaw-rate-amplitude", type=float)
    _add(p, "--accel-amplitude", type=float)
    _add(p, "--gyro-noise", type=float, help="gyro noise std, rad/s")
    _add(p, "--accel-noise", type=float, help="accel noise std, m/s^2")
    _add(p, "--gyro-bias-range", type=float)
    _add(p, "--accel-bias-range", type=float)
    _add(p, "--gravity", type=float, nargs=3)
    _add(p, "--pose-format", choices=["csv", "kitti", "oxford"])

    p = sub.add_parser("extract", help="cut a sequence into feature windows and labels")
    common(p)
    _add(p, "--imu", help="IMU CSV (t,gx,gy,gz,ax,ay,az)")
    _add(p, "--poses", help="pose CSV, or KITTI pose file with --kitti-poses")
    _add(p, "--kitti-poses", action="store_true", default=None, help="poses are KITTI 12-number lines at 10 Hz")
    _add(p, "--oxford", help="combined OxfordIO-style CSV (instead of --imu/--poses)")
    _add(p, "--window", type=int, help="samples per window (default 200 oxford, 1280 kitti)")
    _add(p, "--stride", type=int, help="samples between window starts (default: window)")
    _add(p, "--input-kind", choices=["raw", "averaged", "preintegrated"])
    _add(p, "-n", "--n", type=int, dest="n", help="integration factor (default 10)")
    _add(p, "--out", help="features CSV")
    _add(p, "--labels-out", help="labels CSV (default <out>_labels.csv)")

    p = sub.add_parser("infer", help="run a model from a PIWA archive over a features CSV")
    common(p)
    _add(p, "--archive")
    _add(p, "--features")
    _add(p, "--out")

    p = sub.add_parser("integrate", help="dead-reckon predictions into a trajectory")
    common(p)
    _add(p, "--predictions")
    _add(p, "--out")
    _add(p, "--step-seconds", type=float, help="time between se(3) steps in the output pose CSV")

    p = sub.add_parser("eval", help="relative-error metrics between two trajectories")
    common(p)
    _add(p, "--gt")
    _add(p, "--pred")
    _add(p, "--kitti-poses", action="store_true", default=None)
    _add(p, "--metric", choices=["kitti", "displacement"])
    _add(p, "--window", type=int, help="poses per window for --metric displacement (default 200)")
    _add(p, "--stride", type=int)
    _add(p, "--out-json")
    _add(p, "--out-csv")

    p = sub.add_parser("bench", help="time feature extraction and inference")
    common(p)
    _add(p, "--iterations", type=int)
    _add(p, "--architecture", choices=["baseline_se3", "ionet_polar", "embedded_cnn"])
    _add(p, "--window", type=int)
    _add(p, "-n", "--n", type=int, dest="n")
    _add(p, "--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = vars(args)
    subcommand = flags.pop("subcommand")
    config_path = flags.pop("config")
    try:
        cfg = resolve_config(subcommand, flags, config_path)
        for path in COMMANDS[subcommand](cfg):
            print(path)
    except PifeatError as exc:
        print(f"pifeat {subcommand}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
