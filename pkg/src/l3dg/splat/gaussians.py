"""Gaussian primitive parameters and their geometric activations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numcore import Tensor, concat, l2_normalize, reshape, texp, matmul, transpose

# raw parameter vector layout: [delta(3), log_scale(3), rotation(4), sh(12), opacity_logit(1)]
PARAM_DIM = 23
SH_COEFFS = 12  # degree-1 basis (4) x RGB


@dataclass
class GaussianPrimitive:
    """One splat in its unconstrained parametrization.

    ``exp(log_scale)`` gives the world-unit scales, ``sigmoid(opacity_logit)``
    the opacity, and the displacement activation bounds the centre offset.
    """

    delta: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    sh: np.ndarray
    opacity_logit: float

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.delta, self.log_scale, self.rotation, self.sh, [self.opacity_logit]]
        )

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "GaussianPrimitive":
        v = np.asarray(v, dtype=np.float64)
        return cls(
            delta=v[0:3].copy(),
            log_scale=v[3:6].copy(),
            rotation=v[6:10].copy(),
            sh=v[10:22].copy(),
            opacity_logit=float(v[22]),
        )

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    @property
    def opacity(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.opacity_logit)))


def quat_to_rotmat(q: Tensor) -> Tensor:
    """Batched unit-quaternion (w, x, y, z) to rotation matrices, (N, 3, 3)."""
    q = l2_normalize(q, axis=1)
    w, x, y, z = (q[:, i] for i in range(4))
    entries = [
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ]
    flat = concat([reshape(e, (-1, 1)) for e in entries], axis=1)
    return reshape(flat, (q.shape[0], 3, 3))


def build_covariance(log_scale: Tensor, rotation: Tensor) -> Tensor:
    """World covariance R S^2 R^T from log-scales and quaternions, (N, 3, 3)."""
    R = quat_to_rotmat(rotation)
    s = texp(log_scale)  # (N, 3)
    M = R * reshape(s, (-1, 1, 3))  # scales columns: R @ diag(s)
    return matmul(M, transpose(M, (0, 2, 1)))
