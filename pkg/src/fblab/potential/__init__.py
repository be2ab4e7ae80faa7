"""Conjugated Dirichlet solves, interface gradient ratios and walk-on-spheres."""

from .grid import (
    FIXED,
    OTHER,
    OUT,
    UNKNOWN,
    CutCells,
    GridSolution,
    SolverError,
    SolveSpec,
    assemble,
    read_grid,
    solve_conjugated,
    write_grid,
)
from .gradient import (
    GradientRatios,
    NotAdjacentError,
    interface_gradient,
    interface_gradient_ratio,
    interface_samples,
)
from .wos import (
    LogHEstimate,
    MeasureHistogram,
    PatchPartition,
    halfspace_patch_measure,
    log_h_profile,
    symmetric_patch_z,
    wos_sample,
)
