"""Numerical laboratory for two-phase free boundaries with non-unique blow-ups.

Subpackages
-----------
fields
    Cubic cone, twist maps, oscillating graph and their pulled-back coefficients.
surfgeo
    Interface sampling, Hausdorff distances, blow-up sequences and geometric probes.
potential
    Conjugated Dirichlet solves, interface gradient ratios and walk-on-spheres.
expcli
    Command-line experiments, manifests and figure export.
"""

__version__ = "0.1.0"
# bumped whenever a CSV layout changes; recorded in every manifest
CSV_SCHEMA = 1
