"""Per-face parameter bundle, its text format, and the composite scene."""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParseError
from .model import MorphableModel, ShapeCoeffs
from .shading import SHLighting
from .transform import Camera, RigidPose

__all__ = ["FaceParams", "RenderScene", "save_params", "load_params",
           "default_camera", "default_pose", "frame_depth"]


@dataclass
class FaceParams:
    """Everything needed to render one face: coefficients, pose, camera, light."""

    coeffs: ShapeCoeffs
    pose: RigidPose
    camera: Camera
    lighting: SHLighting

    def copy(self) -> "FaceParams":
        return FaceParams(self.coeffs.copy(), self.pose.copy(), self.camera.copy(),
                          self.lighting.copy())


@dataclass
class RenderScene:
    """A model + params + texture (+ optional background) describing one
    composite output image."""

    model: MorphableModel
    params: FaceParams
    texture: np.ndarray
    background: Optional[np.ndarray] = None
    feather: float = 0.0


def frame_depth(model: MorphableModel, cam: Camera, fill: float = 0.7) -> float:
    """Depth at which the mean head spans ``fill`` of the image height."""
    v = model.mean.reshape(-1, 3)
    extent = float(v[:, 1].max() - v[:, 1].min())
    return cam.focal * extent / (fill * cam.height)


def default_camera(width: int = 256, height: int = 256) -> Camera:
    return Camera(
        focal=1.2 * min(width, height),
        principal=(width / 2.0, height / 2.0),
        width=width,
        height=height,
        near=0.05,
        far=100.0,
    )


def default_pose(model: MorphableModel, cam: Camera, fill: float = 0.7) -> RigidPose:
    """Identity rotation, head centered at a depth that frames it."""
    return RigidPose(np.zeros(3), np.array([0.0, 0.0, frame_depth(model, cam, fill)]))


def _fmt(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in np.asarray(values).ravel())


def save_params(params: FaceParams, path) -> None:
    """One ``key = values`` line per field; floats at 17 significant digits."""
    lines = [
        "# morphface params v1",
        f"shape_coeffs = {_fmt(params.coeffs.shape)}",
        f"expr_coeffs = {_fmt(params.coeffs.expr)}",
        f"pose_rotation = {_fmt(params.pose.rotation)}",
        f"pose_translation = {_fmt(params.pose.translation)}",
        f"camera_focal = {_fmt([params.camera.focal])}",
        f"camera_principal = {_fmt(params.camera.principal)}",
        f"camera_size = {params.camera.width} {params.camera.height}",
        f"camera_depth_range = {_fmt([params.camera.near, params.camera.far])}",
        f"lighting_r = {_fmt(params.lighting.gamma[0])}",
        f"lighting_g = {_fmt(params.lighting.gamma[1])}",
        f"lighting_b = {_fmt(params.lighting.gamma[2])}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


_REQUIRED_KEYS = (
    "shape_coeffs", "expr_coeffs", "pose_rotation", "pose_translation",
    "camera_focal", "camera_principal", "camera_size", "camera_depth_range",
    "lighting_r", "lighting_g", "lighting_b",
)


def parse_kv_file(path):
    """Parse ``key = value`` lines into {key: (string value, line number)}."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"expected 'key = value', got {line!r}", lineno)
            key, _, value = line.partition("=")
            out[key.strip()] = (value.strip(), lineno)
    return out


def load_params(path) -> FaceParams:
    entries = parse_kv_file(path)
    for key in _REQUIRED_KEYS:
        if key not in entries:
            raise ParseError(f"missing field {key!r}")
    unknown = set(entries) - set(_REQUIRED_KEYS)
    if unknown:
        warnings.warn(f"ignoring unknown params fields: {sorted(unknown)}", RuntimeWarning)

    def floats(key, count=None):
        value, lineno = entries[key]
        try:
            arr = np.array([float(v) for v in value.split()], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"field {key!r}: {exc}", lineno) from None
        if count is not None and arr.size != count:
            raise ParseError(f"field {key!r}: expected {count} values, got {arr.size}", lineno)
        return arr

    size_val, size_line = entries["camera_size"]
    try:
        width, height = (int(v) for v in size_val.split())
    except ValueError as exc:
        raise ParseError(f"field 'camera_size': {exc}", size_line) from None
    near, far = floats("camera_depth_range", 2)
    cam = Camera(
        focal=floats("camera_focal", 1)[0],
        principal=floats("camera_principal", 2),
        width=width,
        height=height,
        near=near,
        far=far,
    )
    gamma = np.stack([floats("lighting_r", 9), floats("lighting_g", 9),
                      floats("lighting_b", 9)])
    return FaceParams(
        coeffs=ShapeCoeffs(floats("shape_coeffs"), floats("expr_coeffs")),
        pose=RigidPose(floats("pose_rotation", 3), floats("pose_translation", 3)),
        camera=cam,
        lighting=SHLighting(gamma),
    )
