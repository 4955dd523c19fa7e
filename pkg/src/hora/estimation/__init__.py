"""Least-squares estimation of mixing measures for the shared and non-shared families."""
from .fitting import FitOptions, FitResult, fit_least_squares, minimize_projected
from .measures import (
    Box,
    Dims,
    FrozenProjections,
    MixingMeasure,
    SharedMixingMeasure,
    atoms,
    generate_ground_truth,
    project_simplex,
    random_measure,
)
from .regression import (
    RegressionDataset,
    eval_g,
    eval_g_nonshared,
    eval_g_shared,
    generate_dataset,
    l2_error,
    ls_objective,
    ls_objective_grad,
)
from .voronoi import VoronoiCells, loss_d1_rho, loss_d2, voronoi_cells

__all__ = [
    "Box", "Dims", "FitOptions", "FitResult", "FrozenProjections", "MixingMeasure", "RegressionDataset",
    "SharedMixingMeasure", "VoronoiCells", "atoms", "eval_g", "eval_g_nonshared", "eval_g_shared",
    "fit_least_squares", "generate_dataset", "generate_ground_truth", "l2_error", "loss_d1_rho", "loss_d2",
    "ls_objective", "ls_objective_grad", "minimize_projected", "project_simplex", "random_measure",
    "voronoi_cells",
]
