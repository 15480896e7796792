"""Rigid pose, pinhole camera and the projection step.

Camera space follows the usual computer-vision convention: x right, y down,
z forward (into the scene).  Screen coordinates are pixels with the origin at
the top-left corner; a pixel (px,py) is sampled at its center (px+0.5, py+0.5).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

__all__ = [
    "RigidPose",
    "Camera",
    "rotation_matrix",
    "rotation_matrix_derivatives",
    "axis_angle_from_matrix",
    "euler_to_matrix",
    "matrix_to_euler",
    "geodesic_angle",
    "project",
]

_TWO_PI = 2.0 * np.pi


def _canonical_axis_angle(w: np.ndarray) -> np.ndarray:
    """Wrap the rotation angle into [0, 2*pi)."""
    theta = float(np.linalg.norm(w))
    if theta < _TWO_PI:
        return w
    wrapped = np.fmod(theta, _TWO_PI)
    return w * (wrapped / theta)


@dataclass
class RigidPose:
    """Axis-angle rotation (radians * unit axis) followed by a translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = _canonical_axis_angle(
            np.ascontiguousarray(self.rotation, dtype=np.float64).reshape(3)
        )
        self.translation = np.ascontiguousarray(self.translation, dtype=np.float64).reshape(3)

    def matrix(self) -> np.ndarray:
        return rotation_matrix(self.rotation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.matrix().T + self.translation

    def copy(self) -> "RigidPose":
        return RigidPose(self.rotation.copy(), self.translation.copy())


@dataclass
class Camera:
    """Pinhole intrinsics plus the output image size and depth bounds."""

    focal: float
    principal: np.ndarray
    width: int
    height: int
    near: float = 1e-3
    far: float = 1e6

    def __post_init__(self):
        self.focal = float(self.focal)
        self.principal = np.ascontiguousarray(self.principal, dtype=np.float64).reshape(2)
        self.width = int(self.width)
        self.height = int(self.height)
        self.near = float(self.near)
        self.far = float(self.far)
        if self.focal <= 0:
            raise DimensionError(f"focal must be positive, got {self.focal}")
        if not (0.0 < self.near < self.far):
            raise DimensionError(f"need 0 < near < far, got {self.near}, {self.far}")

    def copy(self) -> "Camera":
        return Camera(self.focal, self.principal.copy(), self.width, self.height, self.near, self.far)


def _skew(v):
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]], dtype=np.float64
    )


def rotation_matrix(w: np.ndarray) -> np.ndarray:
    """Rodrigues rotation for an axis-angle vector, with a small-angle series."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    theta2 = float(w @ w)
    K = _skew(w)
    if theta2 < 1e-16:
        # second-order Taylor expansion; exact enough below ~1e-8 rad
        return np.eye(3) + K + 0.5 * (K @ K)
    theta = np.sqrt(theta2)
    K /= theta
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def rotation_matrix_derivatives(w: np.ndarray) -> np.ndarray:
    """dR/dw_i for the axis-angle parametrization, shape (3,3,3).

    Uses the closed form via the left Jacobian:
        dR/dw_i = [ (w_i * w + cross(w, (I - R) e_i)) / |w|^2 ]_x  R
    which reduces to [e_i]_x at w = 0.
    """
    w = np.asarray(w, dtype=np.float64).reshape(3)
    R = rotation_matrix(w)
    theta2 = float(w @ w)
    out = np.empty((3, 3, 3))
    eye = np.eye(3)
    if theta2 < 1e-12:
        for i in range(3):
            out[i] = _skew(eye[i]) @ R
        return out
    ImR = eye - R
    for i in range(3):
        v = (w[i] * w + np.cross(w, ImR[:, i])) / theta2
        out[i] = _skew(v) @ R
    return out


def axis_angle_from_matrix(R: np.ndarray) -> np.ndarray:
    """Logarithm map of a rotation matrix (angle in [0, pi])."""
    R = np.asarray(R, dtype=np.float64)
    cos_t = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    theta = float(np.arccos(cos_t))
    if theta < 1e-8:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) * 0.5
    if np.pi - theta < 1e-6:
        # near pi the antisymmetric part degenerates; use the symmetric part
        A = (R + np.eye(3)) * 0.5
        axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
        # fix signs from the off-diagonal terms, anchored at the largest entry
        k = int(np.argmax(axis))
        sign = np.ones(3)
        for j in range(3):
            if j != k and axis[j] > 1e-12:
                sign[j] = np.sign(A[k, j] / axis[k])
        axis = axis * sign
        axis /= np.linalg.norm(axis)
        return theta * axis
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return axis * (theta / (2.0 * np.sin(theta)))


def euler_to_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Compose R = Rz(roll) @ Rx(pitch) @ Ry(yaw), angles in radians.

    Yaw turns the head left/right (about the vertical y axis), pitch nods it
    (about x), roll tilts it (about the optical z axis).
    """
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    Rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return Rz @ Rx @ Ry


def matrix_to_euler(R: np.ndarray):
    """Inverse of :func:`euler_to_matrix`; returns (yaw, pitch, roll)."""
    # R = Rz(r) Rx(p) Ry(y); R[2,:] = (cp*sy... ) derive from composition
    pitch = np.arcsin(np.clip(R[2, 1], -1.0, 1.0))
    cp = np.cos(pitch)
    if abs(cp) < 1e-9:
        # gimbal lock: yaw and roll are coupled; put everything into yaw
        yaw = np.arctan2(R[0, 2], R[0, 0])
        roll = 0.0
    else:
        yaw = np.arctan2(-R[2, 0], R[2, 2])
        roll = np.arctan2(-R[0, 1], R[1, 1])
    return float(yaw), float(pitch), float(roll)


def geodesic_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Rotation angle between two rotation matrices, radians in [0, pi]."""
    cos_t = np.clip((np.trace(Ra @ Rb.T) - 1.0) * 0.5, -1.0, 1.0)
    return float(np.arccos(cos_t))


def project(vertices: np.ndarray, pose: RigidPose, cam: Camera):
    """Rigidly transform and pinhole-project vertices.

    Returns ``(proj, behind)`` where proj[:,0:2] are screen coordinates in
    pixels, proj[:,2] is camera-space depth, and ``behind`` flags vertices
    with depth < cam.near.  Flagged vertices still get (garbage) screen
    coordinates; the rasterizer culls triangles touching them.
    """
    v = np.asarray(vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != 3:
        raise DimensionError(f"vertices must be (N,3), got {v.shape}")
    cam_pts = v @ pose.matrix().T + pose.translation
    z = cam_pts[:, 2]
    behind = z < cam.near
    safe_z = np.where(np.abs(z) < 1e-12, 1e-12, z)
    proj = np.empty_like(cam_pts)
    proj[:, 0] = cam.focal * (cam_pts[:, 0] / safe_z) + cam.principal[0]
    proj[:, 1] = cam.focal * (cam_pts[:, 1] / safe_z) + cam.principal[1]
    proj[:, 2] = z
    return proj, behind
