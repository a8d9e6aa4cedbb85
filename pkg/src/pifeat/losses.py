"""Training losses (evaluated, not optimised here) and odometry metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, expm

from .dataset import EmpiricalCovariance, PolarOdometry, format_rows
from .errors import DegenerateBatch, LengthMismatch, NearCutLocus, TrajectoryTooShort
from .lie import Pose, hat, relative_pose, se3_exp, se3_log, so3_log

KITTI_LENGTHS = tuple(range(100, 801, 100))
CUT_LOCUS_MARGIN = 0.1
FD_STEP = 1e-5
REL_FLOOR = 1e-8


# ------------------------------------------------------------ geodesic loss


@dataclass(frozen=True, eq=False)
class GeodesicLossReport:
    total: float
    residuals: np.ndarray  # (N, 6)


def _cov_matrix(cov) -> np.ndarray:
    m = cov.matrix if isinstance(cov, EmpiricalCovariance) else cov
    return np.asarray(m, dtype=np.float64)


def geodesic_residuals(predictions, gt_deltas: Sequence[Pose]) -> np.ndarray:
    """``g_i = log(dT_i^-1 exp(xi_i))`` for each prediction/label pair."""
    xi = np.asarray(predictions, dtype=np.float64).reshape(-1, 6)
    if xi.shape[0] != len(gt_deltas):
        raise LengthMismatch(f"{xi.shape[0]} predictions vs {len(gt_deltas)} ground-truth deltas")
    return np.array([se3_log(relative_pose(t, se3_exp(x))) for x, t in zip(xi, gt_deltas)]).reshape(-1, 6)


def geodesic_loss(predictions, gt_deltas: Sequence[Pose], cov) -> GeodesicLossReport:
    """Sum of Mahalanobis-weighted squared geodesic residuals."""
    g = geodesic_residuals(predictions, gt_deltas)
    factor = cho_factor(_cov_matrix(cov))
    weighted = cho_solve(factor, g.T).T
    return GeodesicLossReport(float(np.sum(g * weighted)), g)


def se3_adjoint_algebra(xi) -> np.ndarray:
    """``ad(xi)`` for the ``(rho, theta)`` ordering."""
    xi = np.asarray(xi, dtype=np.float64)
    ad = np.zeros((6, 6))
    ad[:3, :3] = hat(xi[3:])
    ad[:3, 3:] = hat(xi[:3])
    ad[3:, 3:] = hat(xi[3:])
    return ad


def se3_right_jacobian(xi) -> np.ndarray:
    """``sum_k (-ad xi)^k / (k+1)!``, read off a block matrix exponential."""
    block = np.zeros((12, 12))
    block[:6, :6] = -se3_adjoint_algebra(xi)
    block[:6, 6:] = np.eye(6)
    return expm(block)[:6, 6:]


def geodesic_loss_gradient(predictions, gt_deltas: Sequence[Pose], cov) -> np.ndarray:
    """Analytic gradient of :func:`geodesic_loss` w.r.t. each prediction, ``(N, 6)``.

    Uses ``d g / d xi = Jr(g)^-1 Jr(xi)``.
    """
    xi = np.asarray(predictions, dtype=np.float64).reshape(-1, 6)
    g = geodesic_residuals(xi, gt_deltas)
    w = cho_solve(cho_factor(_cov_matrix(cov)), g.T).T
    grad = np.empty_like(xi)
    for i in range(xi.shape[0]):
        dg = np.linalg.solve(se3_right_jacobian(g[i]), se3_right_jacobian(xi[i]))
        grad[i] = 2.0 * dg.T @ w[i]
    return grad


def geodesic_loss_gradient_check(predictions, gt_deltas: Sequence[Pose], cov, step: float = FD_STEP) -> float:
    """Max deviation of the analytic gradient from central differences.

    The deviation is ``max |analytic - numeric|`` divided by
    ``max(max |numeric|, 1e-8)``.
    """
    xi = np.asarray(predictions, dtype=np.float64).reshape(-1, 6)
    g = geodesic_residuals(xi, gt_deltas)
    worst = float(np.max(np.linalg.norm(g[:, 3:], axis=1))) if len(g) else 0.0
    if worst >= math.pi - CUT_LOCUS_MARGIN:
        raise NearCutLocus(f"residual rotation angle {worst:.6f} is within {CUT_LOCUS_MARGIN} of pi")
    analytic = geodesic_loss_gradient(xi, gt_deltas, cov)
    numeric = np.empty_like(xi)
    for i in range(xi.shape[0]):
        for j in range(6):
            hi = xi.copy()
            lo = xi.copy()
            hi[i, j] += step
            lo[i, j] -= step
            numeric[i, j] = (
                geodesic_loss(hi, gt_deltas, cov).total - geodesic_loss(lo, gt_deltas, cov).total
            ) / (2.0 * step)
    denom = max(float(np.max(np.abs(numeric))) if numeric.size else 0.0, REL_FLOOR)
    return float(np.max(np.abs(analytic - numeric))) / denom if numeric.size else 0.0


# -------------------------------------------------------------- polar loss


def _polar_array(values) -> np.ndarray:
    if isinstance(values, np.ndarray):
        return np.asarray(values, dtype=np.float64).reshape(-1, 2)
    return np.array(
        [v.as_array() if isinstance(v, PolarOdometry) else v for v in values], dtype=np.float64
    ).reshape(-1, 2)


def _polar_residuals(pred, label) -> tuple[np.ndarray, np.ndarray]:
    p, y = _polar_array(pred), _polar_array(label)
    if p.shape != y.shape:
        raise LengthMismatch(f"{len(p)} predictions vs {len(y)} labels")
    r = p - y
    return r[:, 0], r[:, 1]


@dataclass(frozen=True)
class PolarLossConfig:
    beta: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


def polar_loss(pred, label, cfg: PolarLossConfig | float = PolarLossConfig()) -> float:
    """``sum (dL - dL*)^2 + beta * (dPhi - dPhi*)^2``."""
    beta = cfg.beta if isinstance(cfg, PolarLossConfig) else PolarLossConfig(float(cfg)).beta
    rl, rp = _polar_residuals(pred, label)
    return float(np.sum(rl * rl) + beta * np.sum(rp * rp))


def calibrate_beta(pred, label) -> float:
    """Weight that makes both loss terms equal on this batch."""
    rl, rp = _polar_residuals(pred, label)
    tl, tp = float(np.sum(rl * rl)), float(np.sum(rp * rp))
    if tl == 0.0 or tp == 0.0:
        raise DegenerateBatch("translation or orientation loss term is zero on this batch")
    return tl / tp


def rmse_rates(pred, label, window_seconds: float) -> tuple[float, float]:
    """RMSE of ``dL/T`` (m/s) and ``dPhi/T`` (rad/s) over windows of ``T`` seconds."""
    rl, rp = _polar_residuals(pred, label)
    if rl.size == 0:
        raise LengthMismatch("empty batch")
    return (
        float(np.sqrt(np.mean(rl * rl))) / window_seconds,
        float(np.sqrt(np.mean(rp * rp))) / window_seconds,
    )


# ----------------------------------------------------------- KITTI metrics


@dataclass
class RelativeErrorReport:
    """Per-length translation (%) and rotation (deg/100m) errors."""

    buckets: dict[int, dict] = field(default_factory=dict)
    t_rel: float = 0.0
    r_rel: float = 0.0
    segments: int = 0

    def to_dict(self) -> dict:
        return {
            "t_rel_percent": self.t_rel,
            "r_rel_deg_per_100m": self.r_rel,
            "segments": self.segments,
            "buckets": [{"length_m": k, **v} for k, v in sorted(self.buckets.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        rows = [
            (k, v["t_rel_percent"], v["r_rel_deg_per_100m"], v["segments"]) for k, v in sorted(self.buckets.items())
        ]
        return format_rows(["length_m", "t_rel_percent", "r_rel_deg_per_100m", "segments"], rows)


def trajectory_distances(poses: Sequence[Pose]) -> np.ndarray:
    p = np.array([q.translation for q in poses])
    steps = np.linalg.norm(np.diff(p, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def kitti_relative_errors(
    gt: Sequence[Pose], pred: Sequence[Pose], lengths: Sequence[float] = KITTI_LENGTHS
) -> RelativeErrorReport:
    """Relative pose errors over every sub-trajectory of each length.

    A segment starts at every frame and ends at the first frame whose
    ground-truth arc length from the start reaches the bucket length.
    """
    if len(gt) != len(pred):
        raise LengthMismatch(f"{len(gt)} ground-truth vs {len(pred)} predicted poses")
    if len(gt) < 2:
        raise TrajectoryTooShort("need at least two poses")
    dist = trajectory_distances(gt)
    report = RelativeErrorReport()
    t_all, r_all = [], []
    for length in lengths:
        t_err, r_err = [], []
        for first in range(len(gt)):
            last = int(np.searchsorted(dist, dist[first] + length, side="left"))
            if last >= len(gt):
                break
            err = relative_pose(relative_pose(gt[first], gt[last]), relative_pose(pred[first], pred[last]))
            t_err.append(np.linalg.norm(err.translation) / length * 100.0)
            r_err.append(math.degrees(np.linalg.norm(so3_log(err.rotation))) / length * 100.0)
        if t_err:
            report.buckets[int(length)] = {
                "t_rel_percent": float(np.mean(t_err)),
                "r_rel_deg_per_100m": float(np.mean(r_err)),
                "segments": len(t_err),
            }
            t_all += t_err
            r_all += r_err
    if not t_all:
        raise TrajectoryTooShort(f"trajectory length {dist[-1]:.1f} m is shorter than every bucket")
    report.t_rel = float(np.mean(t_all))
    report.r_rel = float(np.mean(r_all))
    report.segments = len(t_all)
    return report


# ------------------------------------------------------- displacement error


@dataclass(frozen=True)
class DisplacementErrorReport:
    percent: float
    windows: int
    skipped: int


def window_displacements(positions, window: int, stride: int | None = None) -> np.ndarray:
    """Displacement vectors between positions ``window`` samples apart."""
    p = np.asarray(positions, dtype=np.float64)
    stride = stride or window
    starts = range(0, p.shape[0] - window, stride)
    return np.array([p[s + window] - p[s] for s in starts]).reshape(-1, p.shape[1])


def normalized_displacement_error(gt, pred, min_length: float = 1e-9) -> DisplacementErrorReport:
    """Mean of ``|pred - gt| / |gt| * 100`` over windows; zero-length windows are skipped."""
    g = np.asarray(gt, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if g.shape != p.shape:
        raise LengthMismatch(f"ground truth {g.shape} vs prediction {p.shape}")
    g = g.reshape(len(g), -1)
    p = p.reshape(len(p), -1)
    lengths = np.linalg.norm(g, axis=1)
    keep = lengths > min_length
    if not np.any(keep):
        raise TrajectoryTooShort("every window has zero ground-truth displacement")
    err = np.linalg.norm(p[keep] - g[keep], axis=1) / lengths[keep] * 100.0
    return DisplacementErrorReport(float(np.mean(err)), int(keep.sum()), int((~keep).sum()))
