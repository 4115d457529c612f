"""Sparse grid-assigned Gaussians over a normalized unit cube.

Each occupied voxel holds exactly one primitive. Primitive centres are the
voxel centre plus a bounded displacement, so a splat can drift into adjacent
voxels but never further than 1.5 voxel sizes per axis.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..numcore import Tensor, tanh
from ..splat.gaussians import GaussianPrimitive
from ..splat.sh import dc_from_rgb

DISPLACEMENT_RANGE = 1.5
DEFAULT_NEW_OPACITY = 0.1


def psi(delta, voxel_size: float):
    """Bounded displacement 1.5 * tanh(delta) * voxel_size (numpy or Tensor)."""
    if isinstance(delta, Tensor):
        return DISPLACEMENT_RANGE * tanh(delta) * voxel_size
    return DISPLACEMENT_RANGE * np.tanh(np.asarray(delta)) * voxel_size


@dataclass
class SceneNormalization:
    """Affine map between world space and the unit cube: world = (u - 0.5) * scale + center."""

    scale: float = 1.0
    center: tuple[float, float, float] = (0.5, 0.5, 0.5)

    def to_unit(self, p: np.ndarray) -> np.ndarray:
        return (np.asarray(p) - np.asarray(self.center)) / self.scale + 0.5

    def to_world(self, u: np.ndarray) -> np.ndarray:
        return (np.asarray(u) - 0.5) * self.scale + np.asarray(self.center)

    def to_dict(self) -> dict:
        return {"scale": self.scale, "center": list(self.center)}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneNormalization":
        return cls(scale=float(d["scale"]), center=tuple(d["center"]))

    @classmethod
    def fit(cls, points: np.ndarray) -> "SceneNormalization":
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        center = (lo + hi) / 2.0
        scale = float(max(np.max(hi - lo), 1e-6))
        return cls(scale=scale, center=tuple(center))


class SparseGaussianGrid:
    """Voxel-indexed Gaussian parameters stored as (N, k) leaf tensors."""

    def __init__(self, resolution: int, voxel_indices: np.ndarray, delta, log_scale,
                 rotation, sh, opacity_logit,
                 normalization: SceneNormalization | None = None, dtype=np.float32):
        self.resolution = int(resolution)
        self.voxel_indices = np.asarray(voxel_indices, dtype=np.int64).reshape(-1, 3)
        if self.voxel_indices.size and (
            self.voxel_indices.min() < 0 or self.voxel_indices.max() >= self.resolution
        ):
            raise ValueError("voxel index out of grid bounds")
        if len(np.unique(self.voxel_indices, axis=0)) != len(self.voxel_indices):
            raise ValueError("duplicate voxel assignment")
        self.normalization = normalization or SceneNormalization()

        def leaf(x, cols):
            t = x if isinstance(x, Tensor) else Tensor(np.asarray(x), requires_grad=True, dtype=dtype)
            if t.data.shape != (len(self.voxel_indices), cols):
                raise ValueError(f"parameter shape {t.data.shape} != ({len(self.voxel_indices)}, {cols})")
            return t

        self.delta = leaf(delta, 3)
        self.log_scale = leaf(log_scale, 3)
        self.rotation = leaf(rotation, 4)
        self.sh = leaf(sh, 12)
        self.opacity_logit = leaf(opacity_logit, 1)
        self._index_map: dict[tuple[int, int, int], int] | None = None

    # -- geometry -------------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.voxel_indices)

    @property
    def voxel_size(self) -> float:
        """Voxel edge length in unit-cube coordinates."""
        return 1.0 / self.resolution

    @property
    def voxel_size_world(self) -> float:
        return self.normalization.scale / self.resolution

    @property
    def dtype(self):
        return self.delta.dtype

    @property
    def index_map(self) -> dict[tuple[int, int, int], int]:
        if self._index_map is None:
            self._index_map = {tuple(v): i for i, v in enumerate(self.voxel_indices)}
        return self._index_map

    def anchors(self) -> np.ndarray:
        """Voxel centres in unit-cube coordinates, (N, 3)."""
        return (self.voxel_indices + 0.5) * self.voxel_size

    def centers_unit(self) -> Tensor:
        anchors = Tensor(self.anchors(), dtype=self.dtype)
        return anchors + psi(self.delta, self.voxel_size)

    def world_centers(self) -> Tensor:
        norm = self.normalization
        u = self.centers_unit()
        return (u - 0.5) * norm.scale + Tensor(np.asarray(norm.center), dtype=self.dtype)

    def parameters(self) -> list[Tensor]:
        return [self.delta, self.log_scale, self.rotation, self.sh, self.opacity_logit]

    def opacities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.opacity_logit.data[:, 0]))

    def primitive(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            delta=self.delta.data[i].astype(np.float64),
            log_scale=self.log_scale.data[i].astype(np.float64),
            rotation=self.rotation.data[i].astype(np.float64),
            sh=self.sh.data[i].astype(np.float64),
            opacity_logit=float(self.opacity_logit.data[i, 0]),
        )

    def replace_parameters(self, voxel_indices, params: dict[str, np.ndarray]) -> "SparseGaussianGrid":
        """New grid with the given rows; used by structural (densify/prune) steps."""
        return SparseGaussianGrid(
            resolution=self.resolution,
            voxel_indices=voxel_indices,
            delta=params["delta"],
            log_scale=params["log_scale"],
            rotation=params["rotation"],
            sh=params["sh"],
            opacity_logit=params["opacity_logit"],
            normalization=self.normalization,
            dtype=self.dtype,
        )

    # -- persistence ------------------------------------------------------------

    def save(self, ply_path) -> None:
        ply_path = Path(ply_path)
        _write_ply(ply_path, self)
        sidecar = {
            "resolution": self.resolution,
            "voxel_size": self.voxel_size,
            "normalization": self.normalization.to_dict(),
            "count": self.n,
        }
        ply_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1))

    @classmethod
    def load(cls, ply_path, dtype=np.float32) -> "SparseGaussianGrid":
        ply_path = Path(ply_path)
        sidecar = json.loads(ply_path.with_suffix(".json").read_text())
        fields = _read_ply(ply_path)
        return cls(
            resolution=sidecar["resolution"],
            voxel_indices=fields["voxel"],
            delta=fields["delta"],
            log_scale=fields["log_scale"],
            rotation=fields["rotation"],
            sh=fields["sh"],
            opacity_logit=fields["opacity_logit"],
            normalization=SceneNormalization.from_dict(sidecar["normalization"]),
            dtype=dtype,
        )


def assign_to_grid(points: np.ndarray, colors: np.ndarray, resolution: int,
                   normalization: SceneNormalization | None = None,
                   dtype=np.float32) -> SparseGaussianGrid:
    """Quantize a colored point cloud into one Gaussian per occupied voxel."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError("assign_to_grid needs at least one point")
    if len(points) != len(colors):
        raise ValueError("points and colors must align")
    norm = normalization or SceneNormalization.fit(points)
    unit = norm.to_unit(points)
    d = 1.0 / resolution
    vox = np.clip(np.floor(unit * resolution).astype(np.int64), 0, resolution - 1)

    uniq, inverse = np.unique(vox, axis=0, return_inverse=True)
    k = len(uniq)
    pos_mean = np.zeros((k, 3))
    col_mean = np.zeros((k, 3))
    counts = np.bincount(inverse, minlength=k).astype(np.float64)
    for axis in range(3):
        pos_mean[:, axis] = np.bincount(inverse, weights=unit[:, axis], minlength=k) / counts
        col_mean[:, axis] = np.bincount(inverse, weights=colors[:, axis], minlength=k) / counts

    anchors = (uniq + 0.5) * d
    ratio = np.clip((pos_mean - anchors) / (DISPLACEMENT_RANGE * d), -0.999999, 0.999999)
    delta = np.arctanh(ratio)

    sh = np.zeros((k, 12))
    sh[:, 0:3] = dc_from_rgb(col_mean)
    log_scale = np.full((k, 3), np.log(norm.scale * d))
    rotation = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (k, 1))
    opacity_logit = np.full((k, 1), _logit(DEFAULT_NEW_OPACITY))
    return SparseGaussianGrid(
        resolution=resolution,
        voxel_indices=uniq,
        delta=delta,
        log_scale=log_scale,
        rotation=rotation,
        sh=sh,
        opacity_logit=opacity_logit,
        normalization=norm,
        dtype=dtype,
    )


def _logit(p: float) -> float:
    return float(np.log(p / (1.0 - p)))


_PLY_FLOAT_FIELDS = [
    ("delta", 3),
    ("log_scale", 3),
    ("rotation", 4),
    ("sh", 12),
    ("opacity_logit", 1),
]


def _write_ply(path: Path, grid: SparseGaussianGrid) -> None:
    names = []
    for base, width in _PLY_FLOAT_FIELDS:
        names += [f"{base}_{i}" for i in range(width)]
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {grid.n}"]
    header += [f"property int voxel_{ax}" for ax in "xyz"]
    header += [f"property float {name}" for name in names]
    header.append("end_header")
    payload = np.concatenate(
        [
            grid.delta.data,
            grid.log_scale.data,
            grid.rotation.data,
            grid.sh.data,
            grid.opacity_logit.data,
        ],
        axis=1,
    ).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for i in range(grid.n):
            fh.write(struct.pack("<3i", *grid.voxel_indices[i]))
            fh.write(payload[i].tobytes())


def _read_ply(path: Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        header = []
        while True:
            line = fh.readline().decode("ascii").strip()
            header.append(line)
            if line == "end_header":
                break
        count = next(int(h.split()[-1]) for h in header if h.startswith("element vertex"))
        row = struct.Struct("<3i23f")
        voxel = np.zeros((count, 3), dtype=np.int64)
        values = np.zeros((count, 23), dtype=np.float64)
        for i in range(count):
            fields = row.unpack(fh.read(row.size))
            voxel[i] = fields[:3]
            values[i] = fields[3:]
    out = {"voxel": voxel}
    offset = 0
    for base, width in _PLY_FLOAT_FIELDS:
        out[base] = values[:, offset : offset + width]
        offset += width
    return out
