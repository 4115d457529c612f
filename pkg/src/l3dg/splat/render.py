"""Differentiable splatting: projection, kernel evaluation, alpha compositing.

The compositing over depth-sorted primitives is a single taped operation with
a hand-derived adjoint. Writing the blending recurrence back-to-front keeps
the backward pass free of divisions by (1 - omega), which go singular for
near-opaque splats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..numcore import (
    Tensor,
    apply_op,
    clip,
    concat,
    gather_rows,
    l2_normalize,
    matmul,
    reshape,
    sigmoid,
    texp,
    transpose,
)
from .camera import Camera
from .gaussians import build_covariance
from .sh import sh_color

# anti-aliasing dilation added to the projected covariance diagonal (px^2)
COV2D_REG = 0.3
# kernel support: drop contributions outside 3 sigma or below 1/255
CUTOFF_MAHALANOBIS_SQ = 9.0
CUTOFF_WEIGHT = 1.0 / 255.0
NEAR_PLANE = 0.01


class ProjectedGaussian(NamedTuple):
    mu2d: np.ndarray
    cov2d: np.ndarray
    depth: float


def project_gaussian(mu, cov3d, cam: Camera) -> ProjectedGaussian | None:
    """EWA projection of one world-space Gaussian; None when behind the camera."""
    mu = np.asarray(mu, dtype=np.float64)
    cov3d = np.asarray(cov3d, dtype=np.float64)
    W = cam.rotation
    t = W @ mu + cam.translation
    if t[2] <= NEAR_PLANE:
        return None
    x, y, z = t
    J = np.array(
        [
            [cam.fx / z, 0.0, -cam.fx * x / z**2],
            [0.0, cam.fy / z, -cam.fy * y / z**2],
        ]
    )
    cov2d = J @ W @ cov3d @ W.T @ J.T
    mu2d = np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy])
    return ProjectedGaussian(mu2d=mu2d, cov2d=cov2d, depth=float(z))


def eval_kernel(u, mu2d, cov2d) -> float:
    """2D Gaussian kernel value at pixel ``u``; None when the covariance is singular."""
    u = np.asarray(u, dtype=np.float64)
    mu2d = np.asarray(mu2d, dtype=np.float64)
    cov2d = np.asarray(cov2d, dtype=np.float64)
    det = cov2d[0, 0] * cov2d[1, 1] - cov2d[0, 1] * cov2d[1, 0]
    if det <= 1e-12:
        return None
    d = u - mu2d
    q = (cov2d[1, 1] * d[0] ** 2 - 2.0 * cov2d[0, 1] * d[0] * d[1] + cov2d[0, 0] * d[1] ** 2) / det
    return float(np.exp(-0.5 * q))


@dataclass
class RenderedImage:
    """RGB in [0, 1] plus accumulated opacity, both taped tensors."""

    rgb: Tensor
    alpha: Tensor | None = None
    diagnostics: dict = field(default_factory=dict)


def alpha_composite(omega: Tensor, colors: Tensor, background: Tensor) -> Tensor:
    """Front-to-back blend of (N, P) weights with (N, 3) colors over a background.

    Returns (P, 4): composited RGB and the residual transmittance.
    """
    om = omega.data
    c = colors.data
    bg = background.data
    n, p = om.shape
    trans = np.ones((n + 1, p), dtype=om.dtype)
    np.cumprod(1.0 - om, axis=0, out=trans[1:])
    weights = om * trans[:n]
    rgb = weights.T @ c + np.outer(trans[n], bg)
    out = np.concatenate([rgb, trans[n][:, None]], axis=1)

    def vjp(g):
        g_rgb = np.ascontiguousarray(g[:, :3])
        g_t = g[:, 3]
        g_colors = weights @ g_rgb
        gamma = c @ g_rgb.T  # (N, P): dL/d(contribution of primitive i at pixel)
        s = bg @ g_rgb.T + g_t  # gradient lump for everything behind the last splat
        behind = np.empty_like(gamma)
        if n > 0:
            behind[n - 1] = s
            for k in range(n - 2, -1, -1):
                ok = om[k + 1]
                behind[k] = ok * gamma[k + 1] + (1.0 - ok) * behind[k + 1]
        g_omega = trans[:n] * (gamma - behind)
        g_bg = g_rgb.T @ trans[n]
        return g_omega, g_colors, g_bg

    return apply_op(out, (omega, colors, background), vjp)


def _pixel_grid(cam: Camera, dtype) -> np.ndarray:
    us = np.arange(cam.width, dtype=dtype) + 0.5
    vs = np.arange(cam.height, dtype=dtype) + 0.5
    uu, vv = np.meshgrid(us, vs)
    return np.stack([uu.reshape(-1), vv.reshape(-1)], axis=1)


def render(scene, cam: Camera, background=(1.0, 1.0, 1.0), *, with_diagnostics: bool = False,
           apply_cutoff: bool = True) -> RenderedImage:
    """Render a grid of Gaussians through depth-ordered alpha blending.

    ``scene`` provides ``world_centers()`` plus the raw parameter tensors;
    gradients flow to every primitive parameter. Diagnostics (projected means,
    blend weights, visible indices) are retained on request so that training
    can read per-primitive view-space gradients after backward.
    """
    dtype = scene.log_scale.dtype
    bg = Tensor(np.asarray(background), dtype=dtype)
    h, w = cam.height, cam.width

    def flat_background():
        rgb = Tensor(np.tile(bg.data, (h, w, 1)))
        return RenderedImage(rgb=rgb, alpha=Tensor(np.zeros((h, w), dtype=dtype)))

    n = scene.n
    if n == 0:
        return flat_background()

    centers = scene.world_centers()  # (N, 3) taped
    W = Tensor(cam.rotation, dtype=dtype)
    t = Tensor(cam.translation, dtype=dtype)
    p_cam = matmul(centers, W.T) + t

    depth = p_cam.data[:, 2]
    visible = np.nonzero(depth > NEAR_PLANE)[0]
    if visible.size == 0:
        return flat_background()
    order = visible[np.lexsort((visible, depth[visible]))]

    pc = gather_rows(p_cam, order)
    mu_w = gather_rows(centers, order)
    log_scale = gather_rows(scene.log_scale, order)
    rotation = gather_rows(scene.rotation, order)
    sh = gather_rows(scene.sh, order)
    opacity_logit = gather_rows(scene.opacity_logit, order)
    v = order.size

    x = pc[:, 0]
    y = pc[:, 1]
    z = pc[:, 2]
    inv_z = 1.0 / z
    mu2d = concat(
        [reshape(cam.fx * x * inv_z + cam.cx, (v, 1)), reshape(cam.fy * y * inv_z + cam.cy, (v, 1))],
        axis=1,
    )

    # projected covariance: J W Sigma W^T J^T with the affine Jacobian at mu
    cov3d = build_covariance(log_scale, rotation)
    cov_cam = matmul(matmul(W, cov3d), W.T)
    zero = x * 0.0
    j_entries = [
        cam.fx * inv_z, zero, -cam.fx * x * inv_z * inv_z,
        zero, cam.fy * inv_z, -cam.fy * y * inv_z * inv_z,
    ]
    J = reshape(concat([reshape(e, (v, 1)) for e in j_entries], axis=1), (v, 2, 3))
    cov2d = matmul(matmul(J, cov_cam), transpose(J, (0, 2, 1)))

    a = cov2d[:, 0, 0] + COV2D_REG
    b = cov2d[:, 0, 1]
    cdiag = cov2d[:, 1, 1] + COV2D_REG
    det = a * cdiag - b * b
    valid = det.data > 1e-12  # singular after regularization: skip primitive
    inv_a = cdiag / det
    inv_b = -1.0 * (b / det)
    inv_c = a / det

    pix = Tensor(_pixel_grid(cam, np.dtype(dtype).type))  # (P, 2)
    dx = reshape(pix[:, 0], (1, -1)) - reshape(mu2d[:, 0], (v, 1))
    dy = reshape(pix[:, 1], (1, -1)) - reshape(mu2d[:, 1], (v, 1))
    quad = (
        reshape(inv_a, (v, 1)) * dx * dx
        + 2.0 * reshape(inv_b, (v, 1)) * dx * dy
        + reshape(inv_c, (v, 1)) * dy * dy
    )
    kernel = texp(-0.5 * quad)
    alpha = sigmoid(reshape(opacity_logit, (v, 1)))
    omega = alpha * kernel

    mask = valid[:, None] & np.isfinite(omega.data)
    if apply_cutoff:
        mask &= (quad.data <= CUTOFF_MAHALANOBIS_SQ) & (omega.data >= CUTOFF_WEIGHT)
    omega = omega * Tensor(mask.astype(omega.dtype))

    view_dir = l2_normalize(mu_w - Tensor(cam.position, dtype=dtype), axis=1)
    colors = sh_color(sh, view_dir)

    composite = alpha_composite(omega, colors, bg)
    rgb = clip(reshape(composite[:, :3], (h, w, 3)), 0.0, 1.0)
    alpha_img = reshape(1.0 - composite[:, 3], (h, w))

    diagnostics = {}
    if with_diagnostics:
        diagnostics = {
            "visible": order,
            "mu2d": mu2d,
            "omega": omega,
            "transmittance": composite[:, 3],
        }
    return RenderedImage(rgb=rgb, alpha=alpha_img, diagnostics=diagnostics)
