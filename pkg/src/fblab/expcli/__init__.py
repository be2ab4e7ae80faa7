"""Command-line front end: configuration, run manifests, experiments and figures."""

from .experiments import REGISTRY, MissingArtifact, RunContext, export_figures
from .manifest import OutputCollision, RunManifest, manifest_id
from .params import Param, ParameterError
from .suites import Check, run_suites

__all__ = [
    "REGISTRY", "Check", "MissingArtifact", "OutputCollision", "Param", "ParameterError", "RunContext",
    "RunManifest", "export_figures", "manifest_id", "run_suites",
]
