"""Image losses: L1, SSIM (11x11 Gaussian window, valid region), and the
blended fitting loss."""

from __future__ import annotations

import numpy as np

from ..numcore import Tensor, tabs, tmean
from ..numcore.nn import conv2d_window

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    xs = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(xs**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _as_tensor(img, dtype) -> Tensor:
    if isinstance(img, Tensor):
        return img
    return Tensor(np.asarray(img), dtype=dtype)


def ssim(img1: Tensor, img2, window_size: int = 11, sigma: float = 1.5) -> Tensor:
    """Mean structural similarity over the valid convolution region."""
    img2 = _as_tensor(img2, img1.dtype)
    if img1.shape != img2.shape:
        raise ValueError(f"image shapes differ: {img1.shape} vs {img2.shape}")
    if img1.shape[0] < window_size or img1.shape[1] < window_size:
        raise ValueError(f"image smaller than the {window_size}x{window_size} SSIM window")
    win = gaussian_window(window_size, sigma)
    mu1 = conv2d_window(img1, win)
    mu2 = conv2d_window(img2, win)
    mu1_sq = mu1 * mu1
    mu2_sq = mu2 * mu2
    mu12 = mu1 * mu2
    sigma1_sq = conv2d_window(img1 * img1, win) - mu1_sq
    sigma2_sq = conv2d_window(img2 * img2, win) - mu2_sq
    sigma12 = conv2d_window(img1 * img2, win) - mu12
    num = (2.0 * mu12 + SSIM_C1) * (2.0 * sigma12 + SSIM_C2)
    den = (mu1_sq + mu2_sq + SSIM_C1) * (sigma1_sq + sigma2_sq + SSIM_C2)
    return tmean(num / den)


def l1(img1: Tensor, img2) -> Tensor:
    img2 = _as_tensor(img2, img1.dtype)
    if img1.shape != img2.shape:
        raise ValueError(f"image shapes differ: {img1.shape} vs {img2.shape}")
    return tmean(tabs(img1 - img2))


def loss_3dg(rendered: Tensor, target, lambda_3dg: float = 0.2) -> Tensor:
    """(1 - lambda) * L1 + lambda * (1 - SSIM)."""
    return (1.0 - lambda_3dg) * l1(rendered, target) + lambda_3dg * (
        1.0 - ssim(rendered, target)
    )


def psnr(img1, img2) -> float:
    a = img1.data if isinstance(img1, Tensor) else np.asarray(img1)
    b = img2.data if isinstance(img2, Tensor) else np.asarray(img2)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return float("inf")
    return -10.0 * np.log10(mse)
