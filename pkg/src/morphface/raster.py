"""Screen-space rasterization to a G-buffer and UV texture sampling."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError
from .mesh import Mesh
from .transform import Camera, RigidPose, project

__all__ = ["GBuffer", "rasterize", "rasterize_mesh", "sample_texture",
           "interpolate_attribute", "uv_space_gbuffer", "bilinear_setup",
           "bilinear_gather", "EMPTY"]

EMPTY = -1


@dataclass
class GBuffer:
    """Per-pixel rasterization record.

    tri_id: (H,W) int32, EMPTY (-1) where uncovered.
    bary:   (H,W,3) perspective-correct attribute weights (sum to 1 on cover).
    depth:  (H,W) camera-space depth, +inf where uncovered.
    triangles: the (F,3) vertex index array the ids refer to.
    """

    tri_id: np.ndarray
    bary: np.ndarray
    depth: np.ndarray
    triangles: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        return self.tri_id >= 0

    @property
    def shape(self):
        return self.tri_id.shape


def rasterize(proj, triangles, width, height, near=1e-3, cull_backfaces=True,
              backend=None) -> GBuffer:
    """Z-buffer rasterization of projected triangles.

    ``proj`` is (N,3): screen x, screen y, camera depth.  A pixel is covered
    by the front-most triangle whose projection contains the pixel center;
    clockwise-on-screen triangles are culled when ``cull_backfaces`` (front
    faces are counter-clockwise in the displayed image).  Triangles with any
    vertex closer than ``near`` are culled.
    """
    proj = np.ascontiguousarray(proj, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int32)
    if proj.ndim != 2 or proj.shape[1] != 3:
        raise DimensionError(f"proj must be (N,3), got {proj.shape}")
    tri_id, bary, depth = kernels.raster_kernel(
        proj, triangles, int(width), int(height), float(near), bool(cull_backfaces),
        backend=backend,
    )
    return GBuffer(tri_id, bary, depth, triangles)


def rasterize_mesh(mesh: Mesh, pose: RigidPose, cam: Camera, cull_backfaces=True,
                   backend=None):
    """Project and rasterize a mesh; returns (gbuffer, proj)."""
    proj, _ = project(mesh.vertices, pose, cam)
    gbuf = rasterize(proj, mesh.triangles, cam.width, cam.height, near=cam.near,
                     cull_backfaces=cull_backfaces, backend=backend)
    return gbuf, proj


def interpolate_attribute(gbuf: GBuffer, attr: np.ndarray) -> np.ndarray:
    """Interpolate per-vertex attributes over covered pixels.

    ``attr`` is (N_v,) or (N_v,C); uncovered pixels are zero.
    """
    attr = np.asarray(attr, dtype=np.float64)
    squeeze = attr.ndim == 1
    if squeeze:
        attr = attr[:, None]
    mask = gbuf.mask
    out = np.zeros(gbuf.shape + (attr.shape[1],), dtype=np.float64)
    if mask.any():
        idx = gbuf.triangles[gbuf.tri_id[mask]]  # (B,3)
        out[mask] = np.einsum("bk,bkc->bc", gbuf.bary[mask], attr[idx])
    return out[..., 0] if squeeze else out


def bilinear_setup(u, v, tex_w, tex_h):
    """Texel footprint of uv samples: corner indices and interpolation offsets.

    v is flipped (uv origin is bottom-left, images are row-major top-left) and
    lookups clamp to the texture edge.  Returns (x0, x1, y0, y1, fx, fy); the
    corner weights are (1-fx)(1-fy), fx(1-fy), (1-fx)fy, fx*fy for the corners
    (x0,y0), (x1,y0), (x0,y1), (x1,y1).
    """
    tx = u * tex_w - 0.5
    ty = (1.0 - v) * tex_h - 0.5
    x0f = np.floor(tx)
    y0f = np.floor(ty)
    fx = tx - x0f
    fy = ty - y0f
    x0 = np.clip(x0f.astype(np.int64), 0, tex_w - 1)
    x1 = np.clip(x0f.astype(np.int64) + 1, 0, tex_w - 1)
    y0 = np.clip(y0f.astype(np.int64), 0, tex_h - 1)
    y1 = np.clip(y0f.astype(np.int64) + 1, 0, tex_h - 1)
    return x0, x1, y0, y1, fx, fy


def bilinear_gather(texture, u, v):
    """Sample a (H,W,C) texture at uv points (arrays of equal shape)."""
    th, tw = texture.shape[:2]
    x0, x1, y0, y1, fx, fy = bilinear_setup(u, v, tw, th)
    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy
    return (
        texture[y0, x0] * w00[..., None]
        + texture[y0, x1] * w10[..., None]
        + texture[y1, x0] * w01[..., None]
        + texture[y1, x1] * w11[..., None]
    )


def sample_texture(gbuf: GBuffer, uv: np.ndarray, texture: np.ndarray):
    """Perspective-correct UV interpolation + bilinear texture lookup.

    Returns (image, mask); uncovered pixels are zero.
    """
    texture = np.asarray(texture, dtype=np.float64)
    if texture.ndim != 3:
        raise DimensionError(f"texture must be (H,W,C), got {texture.shape}")
    mask = gbuf.mask
    out = np.zeros(gbuf.shape + (texture.shape[2],), dtype=np.float64)
    if mask.any():
        uv_pix = interpolate_attribute(gbuf, uv)[mask]  # (B,2)
        out[mask] = bilinear_gather(texture, uv_pix[:, 0], uv_pix[:, 1])
    return out, mask


def uv_space_gbuffer(mesh: Mesh, tex_w: int, tex_h: int, backend=None) -> GBuffer:
    """Rasterize the mesh in its own UV domain at texture resolution.

    Texel (row, col) maps to the triangle covering that texel's uv location;
    used for per-texel canonical attributes (normals, validity accounting).
    Orientation in uv space is arbitrary, so no culling, and depth is constant.
    """
    n = mesh.num_vertices
    proj = np.empty((n, 3), dtype=np.float64)
    proj[:, 0] = mesh.uv[:, 0] * tex_w
    proj[:, 1] = (1.0 - mesh.uv[:, 1]) * tex_h
    proj[:, 2] = 1.0
    return rasterize(proj, mesh.triangles, tex_w, tex_h, near=0.5,
                     cull_backfaces=False, backend=backend)
