from .densify import DensifyConfig, ViewGradStats, densify_step, prune_step
from .fit import FitConfig, fit, init_grid
from .grid import (
    DISPLACEMENT_RANGE,
    SceneNormalization,
    SparseGaussianGrid,
    assign_to_grid,
    psi,
)

__all__ = [
    "DensifyConfig",
    "ViewGradStats",
    "densify_step",
    "prune_step",
    "FitConfig",
    "fit",
    "init_grid",
    "DISPLACEMENT_RANGE",
    "SceneNormalization",
    "SparseGaussianGrid",
    "assign_to_grid",
    "psi",
]
