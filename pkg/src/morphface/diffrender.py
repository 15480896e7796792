"""Analytic gradients of the photometric loss under fixed coverage.

The G-buffer (which triangle covers which pixel) is treated as constant;
gradients flow through barycentric interpolation, projection, the rigid
transform, vertex normals, SH evaluation, bilinear texture weights and the
morphable-model linear map.  Pixels saturated by the final clamp contribute
zero gradient.  Finite-difference checks re-rasterize each perturbed scene
and exclude parameters whose perturbation changes coverage, since the
fixed-coverage gradient is not defined across such jumps.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyMaskError
from .mesh import Mesh
from .model import MorphableModel, ShapeCoeffs, build_from_samples
from .raster import bilinear_setup
from .scene import FaceParams, RenderScene, default_camera
from .shading import (SHLighting, render_mesh_illuminated, sh_basis,
                      sh_basis_gradient)
from .model import synthesize
from .transform import RigidPose, rotation_matrix_derivatives

__all__ = ["photometric_loss", "Gradients", "backward", "gradcheck",
           "GradCheckReport", "toy_scene", "scene_forward"]


def photometric_loss(rendered: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    """Mean squared error over masked pixels, averaged over channels too."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if rendered.shape != target.shape:
        raise EmptyMaskError(
            f"image shapes differ: {rendered.shape} vs {target.shape}"
        ) if False else _raise_dim(rendered.shape, target.shape)
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise EmptyMaskError("photometric loss over an empty mask")
    diff = rendered[mask] - target[mask]
    return float(np.sum(diff * diff) / diff.size)


def _raise_dim(a, b):
    from .errors import DimensionError

    raise DimensionError(f"image shapes differ: {a} vs {b}")


@dataclass
class Gradients:
    """Loss gradients for every continuous scene parameter.

    d_pose packs (rotation xyz, translation xyz).  d_texture is dense but
    non-zero only inside the bilinear footprints of covered pixels.
    """

    d_shape: np.ndarray
    d_expr: np.ndarray
    d_pose: np.ndarray
    d_gamma: np.ndarray
    d_texture: np.ndarray
    d_focal: float = 0.0


def scene_forward(scene: RenderScene, return_state: bool = True):
    """Render the scene's face layer (no compositing) with gradient state."""
    mesh = synthesize(scene.model, scene.params.coeffs)
    return render_mesh_illuminated(
        mesh, scene.params.pose, scene.params.camera, scene.texture,
        scene.params.lighting, return_state=return_state,
    )


def _effective_mask(cover_mask, mask):
    if mask is None:
        return cover_mask
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != cover_mask.shape:
        _raise_dim(mask.shape, cover_mask.shape)
    return cover_mask & mask


def scene_loss(scene: RenderScene, target: np.ndarray, mask=None):
    """Photometric loss of the rendered face over (mask AND coverage)."""
    image, cover, state = scene_forward(scene)
    eff = _effective_mask(cover, mask)
    return photometric_loss(image, target, eff), state, eff


def _screen_barycentrics_and_grads(s: np.ndarray, p: np.ndarray):
    """2D barycentrics of pixel centers and their Jacobian w.r.t. the three
    screen vertices.  s: (B,3,2), p: (B,2) -> lam (B,3), dlam (B,3,3,2)."""
    x0, y0 = s[:, 0, 0], s[:, 0, 1]
    x1, y1 = s[:, 1, 0], s[:, 1, 1]
    x2, y2 = s[:, 2, 0], s[:, 2, 1]
    px, py = p[:, 0], p[:, 1]

    e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
    e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
    a2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)

    lam = np.stack([e0 / a2, e1 / a2, e2 / a2], axis=1)

    B = s.shape[0]
    dE = np.zeros((B, 3, 3, 2))
    # E0 spans v1, v2
    dE[:, 0, 1, 0] = y2 - py
    dE[:, 0, 1, 1] = px - x2
    dE[:, 0, 2, 0] = py - y1
    dE[:, 0, 2, 1] = x1 - px
    # E1 spans v2, v0
    dE[:, 1, 2, 0] = y0 - py
    dE[:, 1, 2, 1] = px - x0
    dE[:, 1, 0, 0] = py - y2
    dE[:, 1, 0, 1] = x2 - px
    # E2 spans v0, v1
    dE[:, 2, 0, 0] = y1 - py
    dE[:, 2, 0, 1] = px - x1
    dE[:, 2, 1, 0] = py - y0
    dE[:, 2, 1, 1] = x0 - px

    dA = np.zeros((B, 3, 2))
    dA[:, 0, 0] = y1 - y2
    dA[:, 0, 1] = x2 - x1
    dA[:, 1, 0] = y2 - y0
    dA[:, 1, 1] = x0 - x2
    dA[:, 2, 0] = y0 - y1
    dA[:, 2, 1] = x1 - x0

    dlam = (dE - lam[:, :, None, None] * dA[:, None, :, :]) / a2[:, None, None, None]
    return lam, dlam


def _vertex_normal_backward(mesh: Mesh, normals: np.ndarray, degenerate: np.ndarray,
                            g_normals: np.ndarray) -> np.ndarray:
    """Adjoint of area-weighted unit vertex normals w.r.t. vertex positions."""
    v = mesh.vertices
    t = mesh.triangles
    e1 = v[t[:, 1]] - v[t[:, 0]]
    e2 = v[t[:, 2]] - v[t[:, 0]]
    face = np.cross(e1, e2)
    m = np.zeros_like(v)
    np.add.at(m, t[:, 0], face)
    np.add.at(m, t[:, 1], face)
    np.add.at(m, t[:, 2], face)
    mlen = np.linalg.norm(m, axis=1)
    safe = np.where(degenerate, 1.0, mlen)
    # d(m/|m|) adjoint: (g - n (n.g)) / |m|
    ndotg = np.einsum("nc,nc->n", normals, g_normals)
    gm = (g_normals - normals * ndotg[:, None]) / safe[:, None]
    gm[degenerate] = 0.0
    gc = gm[t[:, 0]] + gm[t[:, 1]] + gm[t[:, 2]]
    gu = np.cross(e2, gc)
    gv = np.cross(gc, e1)
    out = np.zeros_like(v)
    np.add.at(out, t[:, 1], gu)
    np.add.at(out, t[:, 2], gv)
    np.add.at(out, t[:, 0], -gu - gv)
    return out


def backward(scene: RenderScene, target: np.ndarray, mask=None,
             state=None, eff=None) -> Gradients:
    """Gradients of the masked photometric loss for all scene parameters.

    ``state``/``eff`` may be passed from a previous :func:`scene_loss` call to
    reuse the forward pass.
    """
    if state is None:
        _, state, eff = scene_loss(scene, target, mask)
    elif eff is None:
        eff = _effective_mask(state.gbuf.mask, mask)

    model = scene.model
    params = scene.params
    cam = params.camera
    texture = np.asarray(scene.texture, dtype=np.float64)
    th, tw = texture.shape[:2]
    n_vert = state.mesh.num_vertices

    grads = Gradients(
        d_shape=np.zeros(model.k_shape),
        d_expr=np.zeros(model.k_expr),
        d_pose=np.zeros(6),
        d_gamma=np.zeros((3, 9)),
        d_texture=np.zeros((th, tw, 3)),
    )

    count = int(eff.sum())
    if count == 0:
        raise EmptyMaskError("backward over an empty mask")

    rows, cols = np.nonzero(eff)
    centers = np.stack([cols + 0.5, rows + 0.5], axis=1)

    gbuf = state.gbuf
    tid = gbuf.tri_id[eff]
    vid = gbuf.triangles[tid]          # (B,3)
    proj_v = state.proj[vid]           # (B,3,3)
    s = proj_v[:, :, :2]
    z = proj_v[:, :, 2]

    lam, dlam = _screen_barycentrics_and_grads(s, centers)
    u = lam / z
    dsum = u.sum(axis=1)
    depth_px = 1.0 / dsum
    beta = u * depth_px[:, None]

    uv_v = state.mesh.uv[vid]                      # (B,3,2)
    uv_p = np.einsum("bk,bkc->bc", beta, uv_v)     # (B,2)
    irr_v = state.vertex_irradiance[vid]           # (B,3,3c)

    # seed: d loss / d image, gated by the clamp
    res = state.image[eff] - np.asarray(target, dtype=np.float64)[eff]
    g_img = (2.0 / (3.0 * count)) * res
    pre = state.pre_clamp[eff]
    gate = (pre > 0.0) & (pre < 1.0)
    g_pre = np.where(gate, g_img, 0.0)

    g_alb = g_pre * state.irradiance[eff]
    g_irr = g_pre * state.albedo[eff]

    # --- texture: bilinear scatter and footprint derivative ---
    x0, x1, y0, y1, fx, fy = bilinear_setup(uv_p[:, 0], uv_p[:, 1], tw, th)
    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy
    np.add.at(grads.d_texture, (y0, x0), g_alb * w00[:, None])
    np.add.at(grads.d_texture, (y0, x1), g_alb * w10[:, None])
    np.add.at(grads.d_texture, (y1, x0), g_alb * w01[:, None])
    np.add.at(grads.d_texture, (y1, x1), g_alb * w11[:, None])

    alb_dx = (1.0 - fy)[:, None] * (texture[y0, x1] - texture[y0, x0]) \
        + fy[:, None] * (texture[y1, x1] - texture[y1, x0])
    alb_dy = (1.0 - fx)[:, None] * (texture[y1, x0] - texture[y0, x0]) \
        + fx[:, None] * (texture[y1, x1] - texture[y0, x1])
    g_tx = np.einsum("bc,bc->b", g_alb, alb_dx)
    g_ty = np.einsum("bc,bc->b", g_alb, alb_dy)
    g_u_uv = g_tx * tw
    g_v_uv = -g_ty * th

    # --- barycentric adjoints from uv and irradiance interpolation ---
    g_beta = g_u_uv[:, None] * uv_v[..., 0] + g_v_uv[:, None] * uv_v[..., 1]
    g_beta += np.einsum("bc,bkc->bk", g_irr, irr_v)

    # vertex irradiance adjoint (scattered to vertices)
    g_irr_vert = np.zeros((n_vert, 3))
    np.add.at(g_irr_vert, vid, beta[:, :, None] * g_irr[:, None, :])

    # beta -> (lambda, z)
    inner = np.einsum("bk,bk->b", g_beta, beta)
    g_u = depth_px[:, None] * (g_beta - inner[:, None])
    g_lam = g_u / z
    g_z_px = -g_u * u / z

    g_s_px = np.einsum("bi,bijc->bjc", g_lam, dlam)   # (B,3,2)

    g_screen = np.zeros((n_vert, 2))
    g_zvert = np.zeros(n_vert)
    np.add.at(g_screen, vid, g_s_px)
    np.add.at(g_zvert, vid, g_z_px)

    # --- gamma and world normals ---
    phi = sh_basis(state.normals_world)               # (N,9)
    grads.d_gamma[:] = g_irr_vert.T @ phi
    g_phi = g_irr_vert @ params.lighting.gamma        # (N,9)
    g_n_world = np.einsum("nb,nbc->nc", g_phi, sh_basis_gradient(state.normals_world))

    # --- projection backward ---
    vx, vy, vz = state.cam_pts[:, 0], state.cam_pts[:, 1], state.cam_pts[:, 2]
    f = cam.focal
    sdot = g_screen[:, 0] * vx + g_screen[:, 1] * vy
    g_cam = np.zeros((n_vert, 3))
    g_cam[:, 0] = g_screen[:, 0] * f / vz
    g_cam[:, 1] = g_screen[:, 1] * f / vz
    g_cam[:, 2] = -f * sdot / (vz * vz) + g_zvert
    grads.d_focal = float(np.sum(sdot / vz))

    # --- rigid transform backward ---
    R = params.pose.matrix()
    V = state.mesh.vertices
    grads.d_pose[3:] = g_cam.sum(axis=0)
    gR = g_cam.T @ V + g_n_world.T @ state.normals_model
    dR = rotation_matrix_derivatives(params.pose.rotation)
    for i in range(3):
        grads.d_pose[i] = float(np.sum(gR * dR[i]))

    # --- model vertex adjoint: positions + normals chain ---
    g_n_model = g_n_world @ R
    gV = g_cam @ R
    gV += _vertex_normal_backward(state.mesh, state.normals_model,
                                  state.degenerate, g_n_model)

    flat = gV.reshape(-1)
    grads.d_shape[:] = model.shape_basis.T @ flat
    grads.d_expr[:] = model.expr_basis.T @ flat
    return grads


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class BlockReport:
    name: str
    n_checked: int = 0
    n_excluded: int = 0
    max_rel_err: float = 0.0
    worst_index: int = -1

    def passed(self, tol: float) -> bool:
        return self.max_rel_err <= tol


@dataclass
class GradCheckReport:
    tol: float
    blocks: list = field(default_factory=list)
    coverage_unstable: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(b.passed(self.tol) for b in self.blocks)

    def text(self) -> str:
        lines = [f"gradcheck tol={self.tol:g}"]
        for b in self.blocks:
            status = "pass" if b.passed(self.tol) else "FAIL"
            lines.append(
                f"  {b.name:<12} checked={b.n_checked:<4d} excluded={b.n_excluded:<4d} "
                f"max_rel_err={b.max_rel_err:.3e}  {status}"
            )
        if self.coverage_unstable:
            lines.append("  coverage-unstable parameters (excluded from comparison):")
            for name in self.coverage_unstable:
                lines.append(f"    {name}")
        lines.append("RESULT: " + ("pass" if self.passed else "FAIL"))
        return "\n".join(lines)


def _rasterization_signature(scene):
    _, cover, state = scene_forward(scene)
    return state.gbuf.tri_id.copy()


def _rel_err(a: float, b: float, floor: float = 1e-6) -> float:
    scale = max(abs(a), abs(b))
    if scale <= floor:
        return 0.0
    return abs(a - b) / scale


def gradcheck(scene: RenderScene, target: np.ndarray, mask=None, rel_step=1e-4,
              tol=1e-3, texture_limit=256) -> GradCheckReport:
    """Compare :func:`backward` against central finite differences.

    Each parameter is perturbed by ``rel_step * max(|value|, 1)``; both
    perturbed scenes are re-rasterized, and parameters whose perturbation
    changes the coverage or triangle assignment are excluded (reported, never
    compared).  Relative error uses max(|analytic|, |fd|) with entries below
    1e-6 on both sides treated as matching.
    """
    base_loss, state, eff = scene_loss(scene, target, mask)
    grads = backward(scene, target, mask, state=state, eff=eff)
    base_sig = state.gbuf.tri_id
    report = GradCheckReport(tol=tol)

    def loss_of(s):
        val, st, _ = scene_loss(s, target, mask)
        return val, st.gbuf.tri_id

    def probe(block_name, values, analytic, setter, indices=None):
        blk = BlockReport(block_name)
        flat = values.reshape(-1)
        an = analytic.reshape(-1)
        idx_iter = range(flat.size) if indices is None else indices
        for i in idx_iter:
            h = rel_step * max(abs(flat[i]), 1.0)
            plus = flat.copy()
            plus[i] += h
            minus = flat.copy()
            minus[i] -= h
            lp, sig_p = loss_of(setter(plus.reshape(values.shape)))
            lm, sig_m = loss_of(setter(minus.reshape(values.shape)))
            if not (np.array_equal(sig_p, base_sig) and np.array_equal(sig_m, base_sig)):
                blk.n_excluded += 1
                report.coverage_unstable.append(f"{block_name}[{i}]")
                continue
            fd = (lp - lm) / (2.0 * h)
            err = _rel_err(an[i], fd)
            blk.n_checked += 1
            if err > blk.max_rel_err:
                blk.max_rel_err = err
                blk.worst_index = i
        report.blocks.append(blk)

    params = scene.params

    def with_coeffs(shape=None, expr=None):
        def make(v):
            c = params.coeffs.copy()
            if shape is not None:
                c.shape = v
            else:
                c.expr = v
            return RenderScene(scene.model, FaceParams(c, params.pose, params.camera,
                                                       params.lighting), scene.texture)
        return make

    probe("shape", params.coeffs.shape, grads.d_shape, with_coeffs(shape=True))
    probe("expr", params.coeffs.expr, grads.d_expr, with_coeffs(expr=True))

    def set_pose(v):
        pose = RigidPose(v[:3], v[3:])
        return RenderScene(scene.model, FaceParams(params.coeffs, pose, params.camera,
                                                   params.lighting), scene.texture)

    pose_vec = np.concatenate([params.pose.rotation, params.pose.translation])
    probe("pose", pose_vec, grads.d_pose, set_pose)

    def set_gamma(v):
        return RenderScene(scene.model, FaceParams(params.coeffs, params.pose,
                                                   params.camera, SHLighting(v)),
                           scene.texture)

    probe("gamma", params.lighting.gamma, grads.d_gamma, set_gamma)

    def set_focal(v):
        cam = params.camera.copy()
        cam.focal = float(v[0])
        return RenderScene(scene.model, FaceParams(params.coeffs, params.pose, cam,
                                                   params.lighting), scene.texture)

    probe("focal", np.array([params.camera.focal]),
          np.array([grads.d_focal]), set_focal)

    def set_texture(v):
        return RenderScene(scene.model, params, v)

    tex = np.asarray(scene.texture, dtype=np.float64)
    n_tex = tex.size
    if n_tex > texture_limit:
        stride = int(np.ceil(n_tex / texture_limit))
        indices = list(range(0, n_tex, stride))
    else:
        indices = None
    probe("texture", tex, grads.d_texture, set_texture, indices=indices)
    return report


# ---------------------------------------------------------------------------
# a small self-contained scene for checks and tests


def _grid_mesh(grid: int, extent: float, z_field, uv_margin: float = 0.0) -> Mesh:
    """Planar grid facing the camera with smooth z displacement."""
    js, iis = np.meshgrid(np.arange(grid), np.arange(grid))
    u = js / (grid - 1.0)
    v = 1.0 - iis / (grid - 1.0)
    x = (u - 0.5) * extent
    y = (0.5 - v) * extent
    z = z_field(x, y)
    verts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    uv = np.stack([u.ravel(), v.ravel()], axis=1)
    uv = uv_margin + uv * (1.0 - 2.0 * uv_margin)
    tris = []
    for i in range(grid - 1):
        for j in range(grid - 1):
            v00 = i * grid + j
            v01 = v00 + 1
            v10 = v00 + grid
            v11 = v10 + 1
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return Mesh(verts, np.asarray(tris, dtype=np.int32), uv)


def _bumps(rng, n, extent, amp):
    cx = rng.uniform(-0.4 * extent, 0.4 * extent, n)
    cy = rng.uniform(-0.4 * extent, 0.4 * extent, n)
    a = rng.uniform(-amp, amp, n)
    s = rng.uniform(0.15 * extent, 0.4 * extent, n)

    def field(x, y):
        z = np.zeros_like(x)
        for k in range(n):
            z = z + a[k] * np.exp(-((x - cx[k]) ** 2 + (y - cy[k]) ** 2) / (2 * s[k] ** 2))
        return z
    return field


def toy_scene(seed: int = 0, width: int = 16, height: int = 16, grid: int = 5,
              tex_size: int = 8):
    """Small random scene plus a mismatched target, for gradient checks.

    Texture and lighting ranges keep every rendered pixel strictly inside the
    clamp interval so the clamp gate stays inactive.
    """
    rng = np.random.default_rng(seed)
    extent = 1.0
    samples = []
    labels = []
    for k in range(4):
        field = _bumps(rng, 3, extent, 0.08)
        samples.append(_grid_mesh(grid, extent, lambda x, y, f=field: f(x, y)))
        labels.append(False)
        if k < 3:
            bump = _bumps(rng, 2, extent, 0.06)
            base = samples[-1].vertices.copy()
            expr = base.copy()
            expr[:, 2] += bump(base[:, 0], base[:, 1])
            samples.append(Mesh(expr, samples[-1].triangles, samples[-1].uv))
            labels.append(True)
    model = build_from_samples(samples, k_s=2, k_e=2, expression_labels=labels)

    cam = default_camera(width, height)
    depth = cam.focal * extent / (0.75 * height)
    coeffs = ShapeCoeffs(
        rng.normal(0.0, 0.5, 2) * model.shape_sigmas,
        rng.normal(0.0, 0.5, 2) * model.expr_sigmas,
    )
    pose = RigidPose(rng.uniform(-0.12, 0.12, 3),
                     np.array([rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), depth]))
    gamma = np.zeros((3, 9))
    gamma[:, 0] = rng.uniform(2.9, 3.3, 3)
    gamma[:, 1:] = rng.normal(0.0, 0.08, (3, 8))
    texture = rng.uniform(0.2, 0.8, (tex_size, tex_size, 3))
    scene = RenderScene(model, FaceParams(coeffs, pose, cam, SHLighting(gamma)), texture)

    # target: same scene with jittered params, plus a smooth offset
    coeffs2 = ShapeCoeffs(coeffs.shape + rng.normal(0, 0.3, 2) * model.shape_sigmas,
                          coeffs.expr + rng.normal(0, 0.3, 2) * model.expr_sigmas)
    tex2 = np.clip(texture + rng.normal(0, 0.05, texture.shape), 0.15, 0.85)
    scene2 = RenderScene(model, FaceParams(coeffs2, pose, cam, SHLighting(gamma)), tex2)
    target, _, _ = scene_forward(scene2)
    target = np.clip(target + rng.normal(0, 0.02, target.shape), 0.1, 0.9)
    return scene, target
