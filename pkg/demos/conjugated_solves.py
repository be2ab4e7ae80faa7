"""Gradient ratios from conjugated Dirichlet solves on a coarse grid.

Each side of the interface is pulled back to a fixed template domain, where
the Laplacian becomes a divergence-form operator with coefficient matrix B.
The ratio of the two one-sided normal gradients at the interface is the
quantity whose logarithm should flatten out at small scales.

Run with ``python3 demos/conjugated_solves.py``; a coarse grid keeps it to a
couple of minutes, so expect the numbers to be noisier than the acceptance run.
"""

import warnings

import numpy as np

from fblab.fields import LogScale, OscillatingGraph, TwistedSzulkin, TwistProfile, coefficient_array
from fblab.potential import SolveSpec, interface_gradient_ratio, interface_samples, solve_conjugated
from fblab.surfgeo import graph_slope_targets

warnings.filterwarnings("ignore", message=".*TBB.*")


def pair(kind, scale, **grid):
    plus = solve_conjugated(SolveSpec(kind.with_side(1), scale, **grid))
    minus = solve_conjugated(SolveSpec(kind.with_side(-1), scale, **grid))
    return plus, minus


# B tends to the identity like 1/rho for the twist
twist = TwistedSzulkin(TwistProfile.loglog())
x = np.array([[0.6, 0.2, 0.3]])
for rho in (10.0, 1e3):
    B = coefficient_array(twist, LogScale(rho), x)[0]
    print(f"rho = {rho:6g}: max |B - I| = {np.max(np.abs(B - np.eye(3))):.2e}")

grid = dict(K=2.0, h=1 / 32)
pts = interface_samples(twist)
print("\ntwisted cone, max |log gradient ratio| on the template interface")
for rho in (10.0, 100.0, 1000.0):
    plus, minus = pair(twist, LogScale(rho), **grid)
    r = interface_gradient_ratio(plus, minus, pts)
    print(f"  rho = {rho:6g}: {r.max_abs_log:.4f}  ({plus.iterations} CG iterations)")
flat = interface_gradient_ratio(*pair(TwistedSzulkin(TwistProfile.none()), None, **grid), pts)
print(f"  untwisted cone (discretization floor): {flat.max_abs_log:.4f}")

# For the graph the rescalings only converge along scales where the slope
# at the unit circle is frozen, here slope 1.
graph = OscillatingGraph()
gpts = interface_samples(graph, radii=(0.25, 0.5, 0.75), per_shell=30)
targets = graph_slope_targets(1.0, range(0, 8))
print("\noscillating graph along slope-1 scales")
for k, sc in zip(targets.ks, targets):
    plus, minus = pair(graph, sc, K=1.0, h=1 / 32)
    r = interface_gradient_ratio(plus, minus, gpts)
    print(f"  branch k = {k}: max |log ratio| = {r.max_abs_log:.2e}")
