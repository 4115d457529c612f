"""Degree-1 real spherical harmonics shading."""

from __future__ import annotations

import numpy as np

from ..numcore import Tensor, relu, reshape

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199


def sh_color(sh: Tensor, view_dir) -> Tensor:
    """Per-primitive RGB from SH coefficients and unit viewing directions.

    ``sh`` is (N, 12) laid out basis-major; ``view_dir`` is (N, 3) (Tensor or
    array). Output is offset by 0.5 and clamped to be nonnegative.
    """
    if not isinstance(view_dir, Tensor):
        view_dir = Tensor(np.asarray(view_dir), dtype=sh.dtype)
    n = sh.shape[0]
    coeffs = reshape(sh, (n, 4, 3))
    x = reshape(view_dir[:, 0], (n, 1))
    y = reshape(view_dir[:, 1], (n, 1))
    z = reshape(view_dir[:, 2], (n, 1))
    color = (
        SH_C0 * coeffs[:, 0, :]
        - SH_C1 * (y * coeffs[:, 1, :])
        + SH_C1 * (z * coeffs[:, 2, :])
        - SH_C1 * (x * coeffs[:, 3, :])
    )
    return relu(color + 0.5)


def dc_from_rgb(rgb: np.ndarray) -> np.ndarray:
    """Inverse of the DC term: SH coefficients that reproduce ``rgb`` head-on."""
    return (np.asarray(rgb) - 0.5) / SH_C0
