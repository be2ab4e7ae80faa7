"""Twisted cone walkthrough: rotation law, blow-ups and the corkscrew probe.

Run with ``python3 demos/twisted_cone_geometry.py``; takes about a minute.
"""

import math
import warnings

import numpy as np

from fblab.fields import LogScale, TwistedSzulkin, TwistProfile, szulkin, twist_map
from fblab.surfgeo import (
    accumulation_coverage,
    best_rotation_distance,
    blowup_convergence,
    corkscrew_probe,
    interface_point,
)

warnings.filterwarnings("ignore", message=".*TBB.*")
loglog = TwistProfile.loglog()

# The twist rotates each sphere |x| = r by theta(rho) with rho = log 1/r.
# Under the log log law theta = log rho keeps growing, but ever more slowly.
print("rotation angle theta(rho) under the log log law")
for rho in (10.0, 1e2, 1e4, 1e8):
    print(f"  rho = {rho:8.0e}   theta = {float(loglog.theta(rho)):.4f}")

# Interface points of the twisted cone are rotated Szulkin zeros, so the
# backward twist map sends them back onto s = 0.
kind = TwistedSzulkin(loglog)
scale = LogScale(1e3)
q = np.array([interface_point(kind, scale, t) for t in (0.25, 0.5, 1.0, 2.0)])
print(f"\n|s| on the twisted interface:     {np.max(np.abs(szulkin(q))):.2e}")
print(f"|s| after the backward twist map: {np.max(np.abs(szulkin(twist_map(loglog, 'backward', q, scale)))):.1e}")

# Blow-ups at log-scales a full turn apart approach the same rotated cone.
# The distance to it shrinks by roughly e^(-2 pi) per turn.
print("\nblow-up distances for theta0 = 0")
for step in blowup_convergence(0.0, range(1, 4), 2.0, loglog, matched_from=3):
    print(f"  k = {step.k}   rho = {step.rho:10.4g}   D = {max(step.d_shell, step.d_matched):.3e}  ({step.method})")

# Because theta is unbounded every angle is a limit of rotations, so the
# blow-up set is a whole circle of cones rather than a single one.
report = accumulation_coverage(np.arange(1, 200_001) * math.log(2.0), 0.01)
print(f"\nfraction of angle bins hit by dyadic scales: {report.coverage:.0%}")

best = best_rotation_distance(loglog, LogScale(math.exp(4 * math.pi)), 2.0)
print(f"best frozen rotation at rho = e^(4 pi): phi* = {best.phi_star:.4f}, distance {best.d_star:.2e}")

# A stronger power law makes the interface spiral: the probe counts how
# many dyadic shells a short segment must cross before it reaches the far side.
power = TwistedSzulkin(TwistProfile.parse("power:2"))
for rho in (10.0, 100.0):
    res = corkscrew_probe(power, LogScale(rho), interface_point(power, LogScale(rho)), 0.25)
    print(f"corkscrew count at rho = {rho:g}: M = {res.M:.1f}")
