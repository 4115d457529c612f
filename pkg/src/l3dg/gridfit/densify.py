"""Structural edits on the Gaussian grid: densification and pruning.

A primitive that has drifted into an empty neighbour voxel and carries a large
averaged view-space positional gradient spawns a fresh primitive at that
voxel's centre. Pruning drops primitives whose opacity fell below threshold.
Both return a new grid plus a row map so optimizer moments can follow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import DEFAULT_NEW_OPACITY, SparseGaussianGrid, _logit


@dataclass
class DensifyConfig:
    eps_delta: float = 0.0008  # view-space positional gradient threshold
    eps_alpha: float = 0.005  # opacity pruning threshold
    interval: int = 100  # iterations between structural steps
    new_opacity: float = DEFAULT_NEW_OPACITY
    stop_fraction: float = 0.8  # no structural edits in the last 20% of training

    def __post_init__(self):
        if self.eps_delta <= 0 or self.eps_alpha <= 0:
            raise ValueError("thresholds must be positive")


class ViewGradStats:
    """Accumulated 2-norms of d(loss)/d(mu2d) per primitive since the last edit."""

    def __init__(self, n: int):
        self.norm_sum = np.zeros(n)
        self.count = np.zeros(n, dtype=np.int64)

    def accumulate(self, rows: np.ndarray, mu2d_grad: np.ndarray) -> None:
        norms = np.linalg.norm(mu2d_grad, axis=1)
        np.add.at(self.norm_sum, rows, norms)
        np.add.at(self.count, rows, 1)

    def averages(self) -> np.ndarray:
        return self.norm_sum / np.maximum(self.count, 1)


def densify_step(grid: SparseGaussianGrid, avg_view_grad: np.ndarray,
                 config: DensifyConfig) -> tuple[SparseGaussianGrid, np.ndarray, int]:
    """Spawn primitives in neighbour voxels entered by high-gradient splats.

    Returns (grid', old-row-for-each-new-row map, number created). New rows get
    zero displacement, isotropic scale of one voxel, identity rotation, a small
    fixed opacity, and the mean appearance of all competitors for that voxel.
    """
    avg_view_grad = np.asarray(avg_view_grad).reshape(-1)
    if avg_view_grad.shape[0] != grid.n:
        raise ValueError("gradient statistics do not match grid size")
    res = grid.resolution
    centers = grid.centers_unit().data
    current = np.clip(np.floor(centers * res).astype(np.int64), 0, res - 1)
    crossed = np.any(current != grid.voxel_indices, axis=1)
    hot = crossed & (avg_view_grad > config.eps_delta)

    targets: dict[tuple[int, int, int], list[int]] = {}
    index_map = grid.index_map
    for i in np.nonzero(hot)[0]:
        key = tuple(current[i])
        if key in index_map:
            continue  # voxel already active
        targets.setdefault(key, []).append(i)

    if not targets:
        identity = np.arange(grid.n)
        return grid, identity, 0

    keys = sorted(targets)
    new_vox = np.array(keys, dtype=np.int64)
    k = len(keys)
    new_delta = np.zeros((k, 3))
    new_log_scale = np.full((k, 3), np.log(grid.voxel_size_world))
    new_rotation = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (k, 1))
    new_sh = np.stack([grid.sh.data[targets[key]].mean(axis=0) for key in keys])
    new_opacity = np.full((k, 1), _logit(config.new_opacity))

    def cat(tensor, new_rows):
        return np.concatenate([tensor.data, new_rows.astype(tensor.dtype)], axis=0)

    grid2 = grid.replace_parameters(
        np.concatenate([grid.voxel_indices, new_vox], axis=0),
        {
            "delta": cat(grid.delta, new_delta),
            "log_scale": cat(grid.log_scale, new_log_scale),
            "rotation": cat(grid.rotation, new_rotation),
            "sh": cat(grid.sh, new_sh),
            "opacity_logit": cat(grid.opacity_logit, new_opacity),
        },
    )
    keep_rows = np.concatenate([np.arange(grid.n), np.full(k, -1, dtype=np.int64)])
    return grid2, keep_rows, k


def prune_step(grid: SparseGaussianGrid, eps_alpha: float) -> tuple[SparseGaussianGrid, np.ndarray, int]:
    """Remove primitives with opacity below ``eps_alpha``."""
    keep = np.nonzero(grid.opacities() >= eps_alpha)[0]
    removed = grid.n - keep.size
    if removed == 0:
        return grid, np.arange(grid.n), 0
    grid2 = grid.replace_parameters(
        grid.voxel_indices[keep],
        {
            "delta": grid.delta.data[keep],
            "log_scale": grid.log_scale.data[keep],
            "rotation": grid.rotation.data[keep],
            "sh": grid.sh.data[keep],
            "opacity_logit": grid.opacity_logit.data[keep],
        },
    )
    return grid2, keep, removed
