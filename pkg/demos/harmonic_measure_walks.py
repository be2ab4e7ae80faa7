"""Harmonic measure seen from the poles, estimated by walk on spheres.

Walks start at (0, 0, 1) on the plus side and (0, 0, -1) on the minus side
and stop within ``eps`` of the interface.  Comparing where the two sides land,
patch by patch, gives a Monte Carlo view of log h near the cone point.

Run with ``python3 demos/harmonic_measure_walks.py``; about two minutes.
"""

import math
import warnings

import numpy as np

from fblab.fields import TwistedSzulkin, half_space
from fblab.potential import log_h_profile, symmetric_patch_z, wos_sample

warnings.filterwarnings("ignore", message=".*TBB.*")

# Sanity check on the half-space, where the hitting density from (0,0,1)
# is the Poisson kernel and the unit disc carries 1 - 1/sqrt(2).
hist = wos_sample(half_space(), walks=200_000, master_seed=7)
disc, se = hist.measure(hist.ball_mask(0))
print(f"half-space: unit disc measure {disc:.4f} +- {se:.4f}, exact {1 - 1 / math.sqrt(2):.4f}")

# Twisted cone, both sides.  Splitting at the dyadic spheres keeps the deep
# annuli populated even though few walks get that far.
kind = TwistedSzulkin()
kw = dict(walks=40_000, master_seed=7, eps=1e-5, split_levels=tuple(range(1, 9)), split_factor=16)
plus = wos_sample(kind.with_side(1), **kw)
minus = wos_sample(kind.with_side(-1), **kw)

# The untwisted Szulkin cone is symmetric under x -> -x, so matching
# patches should carry equal measure up to Monte Carlo noise.
z = symmetric_patch_z(plus, minus)
print(f"patches with |z| <= 3: {np.mean(np.abs(z) <= 3):.1%} of {len(z)}")

est = log_h_profile(plus, minus, range(3, 9))
print("\nlevel  largest |log(minus/plus)| over the sector patches")
for j, s, b in zip(est.levels, est.statistic, est.band):
    print(f"  {j:3d}   {s:.3f} +- {b:.3f}")
