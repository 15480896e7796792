"""9-band real spherical-harmonics illumination and the two-pass render.

The band-2 basis constants are pinned for reproducibility:
    P0 = 0.282095
    P1 = 0.488603*y   P2 = 0.488603*z   P3 = 0.488603*x
    P4 = 1.092548*x*y P5 = 1.092548*y*z P6 = 0.315392*(3z^2-1)
    P7 = 1.092548*x*z P8 = 0.546274*(x^2-y^2)
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParseError
from .mesh import Mesh, vertex_normals
from .model import MorphableModel, ShapeCoeffs, synthesize
from .raster import GBuffer, interpolate_attribute, rasterize_mesh, sample_texture
from .transform import Camera, RigidPose

__all__ = ["SHLighting", "sh_basis", "sh_basis_gradient", "illuminate",
           "unit_lighting", "render_illuminated", "render_mesh_illuminated",
           "ForwardState", "save_lighting", "load_lighting", "SH_C"]

SH_C = (0.282095, 0.488603, 1.092548, 0.315392, 0.546274)


@dataclass
class SHLighting:
    """Per-channel coefficients over the 9 band-2 SH basis functions, (3,9)."""

    gamma: np.ndarray = field(default_factory=lambda: np.zeros((3, 9)))

    def __post_init__(self):
        self.gamma = np.ascontiguousarray(self.gamma, dtype=np.float64)
        if self.gamma.shape != (3, 9):
            raise DimensionError(f"gamma must be (3,9), got {self.gamma.shape}")
        if not np.isfinite(self.gamma).all():
            raise DimensionError("gamma must be finite")

    def copy(self) -> "SHLighting":
        return SHLighting(self.gamma.copy())


def unit_lighting() -> SHLighting:
    """DC-only lighting whose irradiance is 1.0 for every normal."""
    g = np.zeros((3, 9))
    g[:, 0] = 1.0 / SH_C[0]
    return SHLighting(g)


def sh_basis(normals: np.ndarray) -> np.ndarray:
    """Evaluate the 9 basis functions at unit normals (...,3) -> (...,9).

    Non-unit inputs are normalized with a warning (tolerance 1e-6).
    """
    n = np.asarray(normals, dtype=np.float64)
    lengths = np.linalg.norm(n, axis=-1)
    if np.any(np.abs(lengths - 1.0) > 1e-6):
        warnings.warn("sh_basis input not unit length; normalizing", RuntimeWarning,
                      stacklevel=2)
        n = n / np.where(lengths < 1e-300, 1.0, lengths)[..., None]
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    c0, c1, c2, c3, c4 = SH_C
    out = np.empty(n.shape[:-1] + (9,), dtype=np.float64)
    out[..., 0] = c0
    out[..., 1] = c1 * y
    out[..., 2] = c1 * z
    out[..., 3] = c1 * x
    out[..., 4] = c2 * x * y
    out[..., 5] = c2 * y * z
    out[..., 6] = c3 * (3.0 * z * z - 1.0)
    out[..., 7] = c2 * x * z
    out[..., 8] = c4 * (x * x - y * y)
    return out


def sh_basis_gradient(normals: np.ndarray) -> np.ndarray:
    """dP_b/dn at unit normals, shape (...,9,3).

    This is the raw polynomial Jacobian; callers differentiating through a
    normalization must chain it themselves.
    """
    n = np.asarray(normals, dtype=np.float64)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    _, c1, c2, c3, c4 = SH_C
    g = np.zeros(n.shape[:-1] + (9, 3), dtype=np.float64)
    g[..., 1, 1] = c1
    g[..., 2, 2] = c1
    g[..., 3, 0] = c1
    g[..., 4, 0] = c2 * y
    g[..., 4, 1] = c2 * x
    g[..., 5, 1] = c2 * z
    g[..., 5, 2] = c2 * y
    g[..., 6, 2] = c3 * 6.0 * z
    g[..., 7, 0] = c2 * z
    g[..., 7, 2] = c2 * x
    g[..., 8, 0] = c4 * 2.0 * x
    g[..., 8, 1] = -c4 * 2.0 * y
    return g


def illuminate(normals: np.ndarray, lighting: SHLighting) -> np.ndarray:
    """Per-vertex RGB irradiance: (N,3) normals -> (N,3).  No clamping."""
    return sh_basis(normals) @ lighting.gamma.T


@dataclass
class ForwardState:
    """Everything the two-pass render produced, kept for the gradient pass."""

    mesh: Mesh
    proj: np.ndarray            # (N,3) screen x, y, camera depth
    cam_pts: np.ndarray         # (N,3) camera-space vertices
    normals_model: np.ndarray   # (N,3) pre-rotation unit vertex normals
    normals_world: np.ndarray   # (N,3) rotated unit vertex normals
    degenerate: np.ndarray      # (N,) zero-area-normal flags
    gbuf: GBuffer
    vertex_irradiance: np.ndarray  # (N,3)
    albedo: np.ndarray          # (H,W,3) sampled texture, 0 where uncovered
    irradiance: np.ndarray      # (H,W,3) interpolated irradiance
    pre_clamp: np.ndarray       # (H,W,3) albedo * irradiance
    image: np.ndarray           # (H,W,3) clamped output


def render_mesh_illuminated(mesh: Mesh, pose: RigidPose, cam: Camera,
                            texture: np.ndarray, lighting: SHLighting,
                            return_state: bool = False):
    """Two renders off one rasterization — albedo and Gouraud irradiance —
    multiplied pixel-wise and clamped to [0,1].  Returns (image, mask)."""
    texture = np.asarray(texture, dtype=np.float64)
    if texture.ndim != 3 or texture.shape[2] != 3:
        raise DimensionError(f"texture must be (H,W,3), got {texture.shape}")
    gbuf, proj = rasterize_mesh(mesh, pose, cam)
    R = pose.matrix()
    cam_pts = mesh.vertices @ R.T + pose.translation
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        normals_model, degenerate = vertex_normals(mesh, return_degenerate=True)
    normals_world = normals_model @ R.T
    vert_irr = illuminate(normals_world, lighting)
    albedo, mask = sample_texture(gbuf, mesh.uv, texture)
    irr = interpolate_attribute(gbuf, vert_irr)
    pre = albedo * irr
    image = np.clip(pre, 0.0, 1.0)
    if return_state:
        return image, mask, ForwardState(
            mesh=mesh, proj=proj, cam_pts=cam_pts, normals_model=normals_model,
            normals_world=normals_world, degenerate=degenerate, gbuf=gbuf,
            vertex_irradiance=vert_irr, albedo=albedo, irradiance=irr,
            pre_clamp=pre, image=image,
        )
    return image, mask


def render_illuminated(model: MorphableModel, coeffs: ShapeCoeffs, pose: RigidPose,
                       cam: Camera, texture: np.ndarray, lighting: SHLighting,
                       return_state: bool = False):
    """Synthesize the geometry and run the two-pass illuminated render."""
    mesh = synthesize(model, coeffs)
    return render_mesh_illuminated(mesh, pose, cam, texture, lighting,
                                   return_state=return_state)


def save_lighting(path, lighting: SHLighting) -> None:
    """Plain text, one row of 9 coefficients per channel (R, G, B)."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in lighting.gamma:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_lighting(path) -> SHLighting:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            vals = line.split()
            if len(vals) != 9:
                raise ParseError(f"expected 9 coefficients, got {len(vals)}", lineno)
            try:
                rows.append([float(v) for v in vals])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    if len(rows) != 3:
        raise ParseError(f"expected 3 channel rows, got {len(rows)}")
    return SHLighting(np.asarray(rows))
