"""Sampling, set distances and geometric experiments on the model interfaces."""

from .blowup import (
    BestRotation,
    BlowupSequence,
    BlowupStep,
    CoverageReport,
    LemmaCheck,
    accumulation_coverage,
    best_rotation_distance,
    blowup_convergence,
    blowup_log_scales,
    circular_diameter,
    hd_lemma_check,
    matched_shell_bound,
    relative_twist,
    self_similarity_distance,
    shell_hausdorff,
)
from .clouds import (
    Measured,
    PointCloud,
    ResolutionError,
    excess,
    hausdorff_in_ball,
    read_ply,
    sample_graph,
    sample_interface,
    sample_twisted,
    write_ply,
)
from .curve import (
    BaseCurve,
    TracingError,
    default_curve,
    rotation_excess,
    rotation_hausdorff,
    trace_base_curve,
)
from .probes import (
    CorkscrewResult,
    SlopeTargets,
    area_ratio_probe,
    clearance,
    corkscrew_probe,
    graph_slope_targets,
    interface_point,
)

__all__ = [name for name in dir() if not name.startswith("_")]
