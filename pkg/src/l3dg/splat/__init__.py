from .camera import Camera, load_cameras, look_at, save_cameras
from .gaussians import PARAM_DIM, GaussianPrimitive, build_covariance, quat_to_rotmat
from .image import load_png, save_png
from .losses import gaussian_window, l1, loss_3dg, psnr, ssim
from .render import (
    RenderedImage,
    alpha_composite,
    eval_kernel,
    project_gaussian,
    render,
)
from .sh import SH_C0, SH_C1, dc_from_rgb, sh_color

__all__ = [
    "Camera",
    "load_cameras",
    "look_at",
    "save_cameras",
    "PARAM_DIM",
    "GaussianPrimitive",
    "build_covariance",
    "quat_to_rotmat",
    "load_png",
    "save_png",
    "gaussian_window",
    "l1",
    "loss_3dg",
    "psnr",
    "ssim",
    "RenderedImage",
    "alpha_composite",
    "eval_kernel",
    "project_gaussian",
    "render",
    "SH_C0",
    "SH_C1",
    "dc_from_rgb",
    "sh_color",
]
