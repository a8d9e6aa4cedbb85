"""SO(3)/SE(3) geometry in float64.

Rotations are plain ``(3, 3)`` numpy arrays. Tangent vectors of se(3) are
6-vectors ordered ``(rho, theta)``: translational part first (meters), then
rotational part (radians). The twist matrix is the usual homogeneous form::

    xi^ = [[theta^, rho],
           [0,      0  ]]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidRotation, NotSkewSymmetric

SMALL_ANGLE = 1e-8
# above this angle the skew part is too small to carry the axis accurately
SYMMETRIC_AXIS_ANGLE = 0.75 * math.pi
ROTATION_TOL = 1e-9


def hat(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=np.float64)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m, tol: float = 1e-9) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise NotSkewSymmetric(f"expected a 3x3 matrix, got shape {m.shape}")
    if np.max(np.abs(m + m.T)) > tol:
        raise NotSkewSymmetric("matrix is not antisymmetric")
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _skew_part(r: np.ndarray) -> np.ndarray:
    # vee((R - R^T) / 2) without the antisymmetry check
    return 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])


def _rodrigues_coeffs(theta: float) -> tuple[float, float]:
    """Return ``sin(t)/t`` and ``(1 - cos(t))/t^2``."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0
    s = math.sin(0.5 * theta)
    return math.sin(theta) / theta, 2.0 * s * s / (theta * theta)


def so3_exp(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    theta = math.sqrt(float(v @ v))
    a, b = _rodrigues_coeffs(theta)
    k = hat(v)
    return np.eye(3) + a * k + b * (k @ k)


def check_rotation(r, tol: float = ROTATION_TOL) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise InvalidRotation(f"not a finite 3x3 matrix (shape {r.shape})")
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        raise InvalidRotation("R^T R deviates from identity")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise InvalidRotation("det(R) != +1")
    return r


def is_rotation(r, tol: float = ROTATION_TOL) -> bool:
    try:
        check_rotation(r, tol)
    except InvalidRotation:
        return False
    return True


def orthonormalize(r) -> np.ndarray:
    """Project a near-rotation back onto SO(3) (closest in Frobenius norm)."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def so3_log(r) -> np.ndarray:
    """Axis-angle vector with angle in ``[0, pi]``."""
    r = check_rotation(r)
    w = _skew_part(r)
    s = math.sqrt(float(w @ w))
    c = 0.5 * (np.trace(r) - 1.0)
    theta = math.atan2(s, c)
    if theta < SMALL_ANGLE:
        return w * (1.0 + theta * theta / 6.0)
    if theta < SYMMETRIC_AXIS_ANGLE:
        return w * (theta / s)
    # (R + R^T)/2 - cos(t) I == (1 - cos(t)) a a^T; the skew part only fixes the sign
    m = 0.5 * (r + r.T) - c * np.eye(3)
    k = int(np.argmax(np.diag(m)))
    axis = m[:, k] / math.sqrt(m[k, k] * (1.0 - c))
    if axis @ w < 0.0:
        axis = -axis
    return theta * axis / np.linalg.norm(axis)


def left_jacobian(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    theta = math.sqrt(float(phi @ phi))
    k = hat(phi)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        b, c = 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    else:
        _, b = _rodrigues_coeffs(theta)
        c = (theta - math.sin(theta)) / theta**3
    return np.eye(3) + b * k + c * (k @ k)


def left_jacobian_inv(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    theta = math.sqrt(float(phi @ phi))
    k = hat(phi)
    if theta < SMALL_ANGLE:
        c = 1.0 / 12.0 + theta * theta / 720.0
    else:
        # (1 + cos t) / (2 t sin t) == cot(t/2) / (2 t)
        c = 1.0 / theta**2 - 1.0 / (2.0 * theta * math.tan(0.5 * theta))
    return np.eye(3) - 0.5 * k + c * (k @ k)


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_matrix(cls, m) -> Pose:
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> Pose:
        rt = self.rotation.T
        return Pose(rt, -(rt @ self.translation))

    def compose(self, other: Pose) -> Pose:
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def apply(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=np.float64) + self.translation

    def validated(self) -> Pose:
        check_rotation(self.rotation)
        return self

    def renormalized(self, tol: float = 0.5 * ROTATION_TOL) -> Pose:
        """Return self, or a re-orthonormalized copy if rotation drift exceeds ``tol``."""
        if is_rotation(self.rotation, tol):
            return self
        return Pose(orthonormalize(self.rotation), self.translation)


def se3_exp(xi) -> Pose:
    xi = np.asarray(xi, dtype=np.float64).reshape(6)
    rho, phi = xi[:3], xi[3:]
    return Pose(so3_exp(phi), left_jacobian(phi) @ rho)


def se3_log(pose: Pose) -> np.ndarray:
    phi = so3_log(pose.rotation)
    rho = left_jacobian_inv(phi) @ pose.translation
    return np.concatenate([rho, phi])


def se3_hat(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=np.float64).reshape(6)
    m = np.zeros((4, 4))
    m[:3, :3] = hat(xi[3:])
    m[:3, 3] = xi[:3]
    return m


def se3_vee(m, tol: float = 1e-9) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (4, 4) or np.max(np.abs(m[3])) > tol:
        raise NotSkewSymmetric("not a 4x4 twist matrix")
    return np.concatenate([m[:3, 3], vee(m[:3, :3], tol)])


def relative_pose(ta: Pose, tb: Pose) -> Pose:
    """``Ta^-1 Tb``, i.e. the motion taking frame a to frame b."""
    return ta.inverse() @ tb


def rotation_angle(r) -> float:
    return float(np.linalg.norm(so3_log(r)))


def wrap_angle(a: float) -> float:
    """Wrap to ``(-pi, pi]``."""
    return math.pi - (math.pi - a) % (2.0 * math.pi)
