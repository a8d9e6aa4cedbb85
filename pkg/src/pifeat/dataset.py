"""Sequence parsing, windowing and label generation.

File layouts are documented in ``docs/FORMATS.md``. All CSV files carry a
one-line header; numbers are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation as ScipyRotation

from .errors import (
    AlignmentError,
    ConfigError,
    InsufficientSamples,
    IoError,
    NonMonotonicTimestamps,
    ParseError,
    UnknownDataset,
)
from .fileio import atomic_write
from .lie import (
    Pose,
    is_rotation,
    orthonormalize,
    relative_pose,
    se3_log,
    so3_log,
    wrap_angle,
)
from .preintegration import BiasState, average_baseline, extract_features, raw_features

IMU_HEADER = ["t", "gx", "gy", "gz", "ax", "ay", "az"]
POSE_HEADER = ["t"] + [f"r{i}{j}" for i in range(3) for j in range(3)] + ["tx", "ty", "tz"]
OXFORD_HEADER = IMU_HEADER + ["tx", "ty", "tz", "qx", "qy", "qz", "qw"]
INPUT_KINDS = ("raw", "averaged", "preintegrated")
COVARIANCE_EPS = 1e-8
# poses printed with few digits are re-projected onto SO(3) if this close
POSE_ORTHO_TOL = 1e-3


@dataclass(frozen=True)
class PolarOdometry:
    """Planar step: distance travelled (m) and heading change (rad).

    Labels satisfy ``delta_l >= 0`` and ``delta_phi in (-pi, pi]``; network
    predictions are raw regressor outputs and are not constrained.
    """

    delta_l: float
    delta_phi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.delta_l, self.delta_phi])


@dataclass(frozen=True, eq=False)
class SequenceRecord:
    imu: np.ndarray  # (N, 7): t, gx, gy, gz, ax, ay, az
    pose_times: np.ndarray
    poses: tuple[Pose, ...]
    frame: str
    imu_rate: float
    pose_rate: float

    def __post_init__(self):
        if len(self.pose_times) != len(self.poses):
            raise ValueError("pose_times and poses differ in length")

    @property
    def dt(self) -> float:
        return 1.0 / self.imu_rate

    def pose_index_at(self, t: float, tol: float | None = None) -> int | None:
        """Index of the pose nearest ``t`` if it lies within ``tol`` (default dt/2)."""
        if tol is None:
            tol = 0.5 * self.dt
        times = self.pose_times
        if times.size == 0:
            return None
        k = int(np.searchsorted(times, t))
        best = None
        for j in (k - 1, k):
            if 0 <= j < times.size and abs(times[j] - t) <= tol:
                if best is None or abs(times[j] - t) < abs(times[best] - t):
                    best = j
        return best


@dataclass(frozen=True, eq=False)
class EmpiricalCovariance:
    matrix: np.ndarray
    count: int
    mean: np.ndarray


@dataclass(frozen=True)
class WindowConfig:
    window: int
    stride: int
    input_kind: str = "preintegrated"
    n: int = 10

    def __post_init__(self):
        if self.input_kind not in INPUT_KINDS:
            raise ConfigError(f"input kind must be one of {INPUT_KINDS}, got {self.input_kind!r}")
        if self.window <= 0 or self.stride <= 0 or self.n <= 0:
            raise ConfigError("window, stride and n must be positive")
        if self.input_kind != "raw" and self.window % self.n:
            raise ConfigError(f"window {self.window} is not divisible by integration factor {self.n}")

    @property
    def steps(self) -> int:
        return self.window if self.input_kind == "raw" else self.window // self.n


@dataclass(frozen=True, eq=False)
class WindowedExample:
    kind: str
    features: np.ndarray
    se3_label: np.ndarray
    polar_label: PolarOdometry | None
    start: int  # first sample index
    end: int  # one past the last sample index
    t_start: float
    t_end: float


# --------------------------------------------------------------------- io


def format_rows(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def read_rows(path, header: Sequence[str] | None = None) -> tuple[list[str], list[tuple[int, list[float]]]]:
    """Read a numeric CSV; returns the header and ``(line_number, values)`` pairs."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            got = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", str(path), 1) from None
        if header is not None and got != list(header):
            raise ParseError(f"expected header {','.join(header)}, got {','.join(got)}", str(path), 1)
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(got):
                raise ParseError(f"expected {len(got)} fields, got {len(row)}", str(path), line)
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(str(exc), str(path), line) from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError("non-finite value", str(path), line)
            rows.append((line, values))
    return got, rows


def _check_monotonic(times: np.ndarray, lines: Sequence[int], path) -> None:
    bad = np.nonzero(np.diff(times) <= 0.0)[0]
    if bad.size:
        k = int(bad[0]) + 1
        raise NonMonotonicTimestamps(f"{path}:{lines[k]}: timestamp {times[k]!r} does not increase")


def _pose_from_values(r: Sequence[float], t: Sequence[float], path, line: int) -> Pose:
    rot = np.asarray(r, dtype=np.float64).reshape(3, 3)
    if not is_rotation(rot):
        if not is_rotation(rot, POSE_ORTHO_TOL):
            raise ParseError("rotation block is not a rotation matrix", str(path), line)
        rot = orthonormalize(rot)
    return Pose(rot, t)


def _estimate_rate(times: np.ndarray) -> float:
    if times.size < 2:
        return float("nan")
    return float(1.0 / np.median(np.diff(times)))


def read_imu_csv(path) -> np.ndarray:
    _, rows = read_rows(path, IMU_HEADER)
    imu = np.array([v for _, v in rows], dtype=np.float64).reshape(-1, 7)
    _check_monotonic(imu[:, 0], [ln for ln, _ in rows], path)
    return imu


def read_pose_csv(path) -> tuple[np.ndarray, list[Pose]]:
    _, rows = read_rows(path, POSE_HEADER)
    times = np.array([v[0] for _, v in rows], dtype=np.float64)
    _check_monotonic(times, [ln for ln, _ in rows], path)
    poses = [_pose_from_values(v[1:10], v[10:13], path, ln) for ln, v in rows]
    return times, poses


def read_kitti_poses(path, period: float = 0.1, t0: float = 0.0) -> tuple[np.ndarray, list[Pose]]:
    """KITTI odometry ground truth: 12 numbers per line, ``[R | t]`` row-major, no time."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    poses = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            vals = [float(x) for x in line.split()]
        except ValueError as exc:
            raise ParseError(str(exc), str(path), line_no) from None
        if len(vals) != 12:
            raise ParseError(f"expected 12 numbers, got {len(vals)}", str(path), line_no)
        m = np.array(vals).reshape(3, 4)
        poses.append(_pose_from_values(m[:, :3].ravel(), m[:, 3], path, line_no))
    times = t0 + period * np.arange(len(poses))
    return times, poses


def write_imu_csv(path, imu) -> None:
    atomic_write(path, format_rows(IMU_HEADER, np.asarray(imu, dtype=np.float64)))


def pose_row(t: float, pose: Pose) -> list[float]:
    return [t, *pose.rotation.ravel(), *pose.translation]


def write_pose_csv(path, times, poses: Sequence[Pose]) -> None:
    atomic_write(path, format_rows(POSE_HEADER, (pose_row(t, p) for t, p in zip(times, poses))))


def write_kitti_poses(path, poses: Sequence[Pose]) -> None:
    lines = [" ".join(repr(float(x)) for x in p.matrix()[:3].ravel()) for p in poses]
    atomic_write(path, "\n".join(lines) + "\n")


def parse_kitti_sequence(imu_path, pose_path, kitti_poses: bool = False, pose_period: float = 0.1) -> SequenceRecord:
    """Load an IMU CSV plus ground-truth poses (pose CSV, or KITTI-native with ``kitti_poses``)."""
    imu = read_imu_csv(imu_path)
    if kitti_poses:
        times, poses = read_kitti_poses(pose_path, pose_period, float(imu[0, 0]) if len(imu) else 0.0)
    else:
        times, poses = read_pose_csv(pose_path)
    return SequenceRecord(imu, times, tuple(poses), "kitti", _estimate_rate(imu[:, 0]), _estimate_rate(times))


def parse_oxford_sequence(path) -> SequenceRecord:
    """Load a combined IMU + pose CSV (pose per IMU row, quaternion ``x,y,z,w``)."""
    _, rows = read_rows(path, OXFORD_HEADER)
    data = np.array([v for _, v in rows], dtype=np.float64).reshape(-1, len(OXFORD_HEADER))
    lines = [ln for ln, _ in rows]
    _check_monotonic(data[:, 0], lines, path)
    poses = []
    for ln, row in zip(lines, data):
        q = row[10:14]
        norm = np.linalg.norm(q)
        if not norm > 0.0:
            raise ParseError("zero quaternion", str(path), ln)
        poses.append(Pose(ScipyRotation.from_quat(q / norm).as_matrix(), row[7:10]))
    rate = _estimate_rate(data[:, 0])
    return SequenceRecord(data[:, :7].copy(), data[:, 0].copy(), tuple(poses), "oxford", rate, rate)


def write_oxford_csv(path, imu, poses: Sequence[Pose]) -> None:
    rows = []
    for row, pose in zip(np.asarray(imu, dtype=np.float64), poses):
        q = ScipyRotation.from_matrix(pose.rotation).as_quat()
        rows.append([*row, *pose.translation, *q])
    atomic_write(path, format_rows(OXFORD_HEADER, rows))


# ----------------------------------------------------------------- labels


def se3_label(prev: Pose, cur: Pose) -> np.ndarray:
    """Tangent of the relative motion ``prev^-1 cur``, ordered ``(rho, theta)``."""
    return se3_log(relative_pose(prev, cur))


def polar_labels(first: Pose, last: Pose) -> PolarOdometry:
    """Planar distance and yaw change between the first and last pose of a window.

    The heading change is the z component of ``so3_log(R_first^T R_last)``.
    """
    dphi = so3_log(first.rotation.T @ last.rotation)[2]
    d = last.translation[:2] - first.translation[:2]
    return PolarOdometry(float(math.hypot(d[0], d[1])), wrap_angle(float(dphi)))


def empirical_covariance(labels, eps: float = COVARIANCE_EPS) -> EmpiricalCovariance:
    x = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 6:
        raise ValueError(f"expected (N, 6) labels, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise InsufficientSamples(f"need at least 2 labels, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    cov = 0.5 * (cov + cov.T) + eps * np.eye(6)
    return EmpiricalCovariance(cov, n, mean)


def make_windows(record: SequenceRecord, config: WindowConfig, bias: BiasState | None = None) -> list[WindowedExample]:
    """Cut a sequence into labelled windows.

    Windows are anchored on the first IMU sample that has a pose within dt/2
    and advance by ``config.stride`` samples. The se(3) label spans the
    window's time interval ``[t_start, t_start + window*dt]``; the polar label
    uses the poses at the first and last sample of the window and is ``None``
    when the last sample has no pose (e.g. 10 Hz ground truth). Windows that
    would end after the last ground-truth pose are not formed; a missing pose
    anywhere inside the covered span is an :class:`AlignmentError`.
    """
    imu = record.imu
    n_imu = imu.shape[0]
    dt = record.dt
    times = imu[:, 0]
    anchor = next((i for i in range(n_imu) if record.pose_index_at(times[i]) is not None), None)
    if anchor is None:
        raise AlignmentError("no IMU sample has a ground-truth pose within dt/2")

    t_cover = float(record.pose_times[-1]) + 0.5 * dt
    examples = []
    for s in range(anchor, n_imu - config.window + 1, config.stride):
        e = s + config.window
        t_start = float(times[s])
        t_end = float(times[e]) if e < n_imu else float(times[e - 1] + dt)
        if t_end > t_cover:
            break
        i0 = record.pose_index_at(t_start)
        i1 = record.pose_index_at(t_end)
        if i0 is None or i1 is None:
            missing = t_start if i0 is None else t_end
            raise AlignmentError(f"no ground-truth pose within dt/2 of t={missing!r} (window at sample {s})")
        chunk = imu[s:e]
        if config.input_kind == "preintegrated":
            feats = extract_features(chunk, config.n, bias, dt)
        elif config.input_kind == "averaged":
            feats = average_baseline(chunk, config.n)
        else:
            feats = raw_features(chunk)
        i_last = record.pose_index_at(float(times[e - 1]))
        polar = None if i_last is None else polar_labels(record.poses[i0], record.poses[i_last])
        examples.append(
            WindowedExample(
                config.input_kind,
                feats,
                se3_label(record.poses[i0], record.poses[i1]),
                polar,
                s,
                e,
                t_start,
                t_end,
            )
        )
    return examples


# ----------------------------------------------------------------- splits


@dataclass(frozen=True)
class SplitPolicy:
    train: tuple[str, ...]
    test: tuple[str, ...]
    excluded: tuple[str, ...]

    def role(self, seq: str) -> str:
        seq = f"{int(seq):02d}" if str(seq).isdigit() else str(seq)
        for name in ("train", "test", "excluded"):
            if seq in getattr(self, name):
                return name
        raise UnknownDataset(f"sequence {seq!r} is not part of this split")


_SPLITS = {
    "kitti": SplitPolicy(
        train=("00", "01", "02", "04", "06", "08", "09"),
        test=("05", "07", "10"),
        excluded=("03",),
    ),
}


def split_policy(dataset: str = "kitti") -> SplitPolicy:
    try:
        return _SPLITS[dataset.lower()]
    except KeyError:
        raise UnknownDataset(f"no split policy for dataset {dataset!r}") from None
