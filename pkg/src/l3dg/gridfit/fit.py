"""Optimization loop for grid-assigned Gaussians from posed images."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..numcore import Adam
from ..splat.camera import Camera
from ..splat.losses import loss_3dg, psnr
from ..splat.render import render
from .densify import DensifyConfig, ViewGradStats, densify_step, prune_step
from .grid import SceneNormalization, SparseGaussianGrid, assign_to_grid

log = logging.getLogger(__name__)


@dataclass
class FitConfig:
    iterations: int = 2000
    resolution: int = 16
    lambda_3dg: float = 0.2
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)
    # per-parameter learning rates (positions move slower than appearance)
    lr_delta: float = 0.02
    lr_log_scale: float = 0.005
    lr_rotation: float = 0.001
    lr_sh: float = 0.01
    lr_opacity: float = 0.05
    densify: DensifyConfig = field(default_factory=DensifyConfig)
    init_points: int = 2000  # random-cube fallback when no cloud is given
    log_every: int = 50


def init_grid(config: FitConfig, rng: np.random.Generator,
              points: np.ndarray | None = None, colors: np.ndarray | None = None,
              dtype=np.float32) -> SparseGaussianGrid:
    """Grid from a point cloud, or from uniform random points in the unit cube."""
    if points is None:
        points = rng.uniform(0.05, 0.95, (config.init_points, 3))
        colors = rng.uniform(0.2, 0.8, (config.init_points, 3))
        norm = SceneNormalization()  # keep the cube as-is for synthetic fallbacks
    else:
        norm = None
    if colors is None:
        colors = np.full_like(points, 0.5)
    return assign_to_grid(points, colors, config.resolution, normalization=norm, dtype=dtype)


def fit(images: list[np.ndarray], cameras: list[Camera], config: FitConfig,
        rng: np.random.Generator, grid: SparseGaussianGrid | None = None,
        points: np.ndarray | None = None, colors: np.ndarray | None = None,
        log_fn=None, dtype=np.float32) -> SparseGaussianGrid:
    """Minimize the blended L1/SSIM loss with periodic densify/prune steps."""
    if len(images) == 0 or len(images) != len(cameras):
        raise ValueError("need at least one posed image, with cameras aligned to images")
    if grid is None:
        grid = init_grid(config, rng, points=points, colors=colors, dtype=dtype)

    _warn_if_invisible(grid, cameras)
    opt = _make_optimizer(grid, config)
    stats = ViewGradStats(grid.n)
    views = np.arange(len(images))
    order = rng.permutation(views)
    cursor = 0
    t0 = time.time()

    for it in range(1, config.iterations + 1):
        if cursor >= len(order):
            order = rng.permutation(views)
            cursor = 0
        vi = int(order[cursor])
        cursor += 1

        out = render(grid, cameras[vi], config.background, with_diagnostics=True)
        loss = loss_3dg(out.rgb, images[vi], config.lambda_3dg)
        opt.zero_grad()
        loss.backward()

        mu2d = out.diagnostics["mu2d"]
        if mu2d.grad is not None:
            stats.accumulate(out.diagnostics["visible"], mu2d.grad)
        opt.step()

        structural_window = it <= config.densify.stop_fraction * config.iterations
        if structural_window and it % config.densify.interval == 0:
            grid, stats = _structural_step(grid, stats, config, opt)

        if log_fn is not None and (it % config.log_every == 0 or it == config.iterations):
            log_fn(
                {
                    "step": it,
                    "loss": float(loss.data),
                    "psnr": psnr(out.rgb, images[vi]),
                    "n_primitives": grid.n,
                    "elapsed_s": round(time.time() - t0, 3),
                }
            )
    return grid


def _make_optimizer(grid: SparseGaussianGrid, config: FitConfig) -> Adam:
    return Adam(
        [
            (grid.delta, config.lr_delta),
            (grid.log_scale, config.lr_log_scale),
            (grid.rotation, config.lr_rotation),
            (grid.sh, config.lr_sh),
            (grid.opacity_logit, config.lr_opacity),
        ],
        lr=1.0,
    )


def _structural_step(grid, stats, config, opt):
    old_params = grid.parameters()
    grid2, keep_dense, created = densify_step(grid, stats.averages(), config.densify)
    grid3, keep_prune, removed = prune_step(grid2, config.densify.eps_alpha)
    # compose row maps: new row -> original row (or -1 for spawned rows)
    keep = keep_dense[keep_prune]
    for old, new in zip(old_params, grid3.parameters()):
        opt.replace_param(old, new, keep_rows=keep)
    if created or removed:
        log.debug("structural step: +%d / -%d primitives (now %d)", created, removed, grid3.n)
    return grid3, ViewGradStats(grid3.n)


def _warn_if_invisible(grid: SparseGaussianGrid, cameras: list[Camera]) -> None:
    centers = grid.world_centers().data
    for cam in cameras:
        z = centers @ cam.rotation[2] + cam.translation[2]
        if np.any(z > 0):
            return
    log.warning("no primitives are visible from any camera; fit will not progress")
