"""Point clouds with certified sampling gaps and distances between them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from ..fields import (
    GRAPH_AMPLITUDE,
    DomainError,
    LogScale,
    OscillatingGraph,
    TwistedSzulkin,
    TwistProfile,
    combined_rho,
    graph_jet,
    rotate_z,
)
from .curve import BaseCurve, default_curve, trace_base_curve

MAX_POINTS = 40_000_000


class ResolutionError(RuntimeError):
    pass


@dataclass
class PointCloud:
    """Finite sample of a set together with a certified covering radius.

    Every point of the sampled set within ``radius`` of the origin lies within
    ``gap`` of some point of the cloud.
    """

    points: np.ndarray
    gap: float
    radius: float = math.inf
    label: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)

    def __len__(self):
        return len(self.points)

    def clip(self, radius: float) -> "PointCloud":
        keep = np.linalg.norm(self.points, axis=1) <= radius
        return PointCloud(self.points[keep], self.gap, min(radius, self.radius), self.label)


class Measured(NamedTuple):
    """A distance together with its discretisation uncertainty."""

    value: float
    uncertainty: float

    def __float__(self):
        return float(self.value)


def _as_cloud(s) -> PointCloud:
    return s if isinstance(s, PointCloud) else PointCloud(np.asarray(s, dtype=float), 0.0)


def excess(S, T) -> Measured:
    """One-sided distance ``sup_{x in S} dist(x, T)`` between finite clouds."""
    S, T = _as_cloud(S), _as_cloud(T)
    if len(S) == 0:
        return Measured(0.0, S.gap + T.gap)
    if len(T) == 0:
        raise ValueError("excess of a nonempty set over an empty set is infinite")
    d, _ = cKDTree(T.points).query(S.points)
    return Measured(float(np.max(d)), S.gap + T.gap)


def hausdorff_in_ball(S, T, R: float) -> Measured:
    """Hausdorff distance between the parts of ``S`` and ``T`` in the closed ball ``B_R``."""
    S, T = _as_cloud(S).clip(R), _as_cloud(T).clip(R)
    if len(S) == 0 and len(T) == 0:
        return Measured(0.0, S.gap + T.gap)
    a, b = excess(S, T), excess(T, S)
    return Measured(max(a.value, b.value), S.gap + T.gap)


# ---------------------------------------------------------------------------
# sampling of the interfaces


def _shell_radii(R, t_min, dt_max, angles_fn, speed, angle_budget):
    """Radii ``t_min = t_0 < ... < t_m = R`` with bounded radial and angular steps."""
    radii = [R]
    t = R
    while t > t_min * (1.0 + 1e-12):
        step = min(dt_max, t - t_min)
        # shrink until the rotation between neighbours moves points by <= angle_budget
        while step > 1e-15 * R or step == t - t_min:
            a0, a1 = angles_fn(np.array([t - step, t]))
            if t * speed * abs(a1 - a0) <= angle_budget:
                break
            step *= 0.5
        else:
            raise ResolutionError("twist too fast to sample at the requested gap")
        t -= step
        radii.append(max(t, t_min))
        if len(radii) > 5_000_000:
            raise ResolutionError("too many shells for the requested gap")
    return np.array(radii[::-1])


def sample_twisted(profile: TwistProfile, scale, R: float, target_gap: float,
                   t_min: float | None = None, rotation: float | None = None,
                   curve: BaseCurve | None = None, max_points: int = MAX_POINTS) -> PointCloud:
    """Sample the twisted Szulkin interface ``Phi_theta(Sigma_s)`` in ``B_R``.

    ``rotation`` replaces the twist by a fixed rotation ``R_phi`` (a rotated copy
    of the untwisted cone).  The cloud is a stack of shells
    ``t * R_alpha(t) * Gamma``.  A surface point is within half a radial step of
    a shell (along its ray) and within ``t * w`` across it, where ``w`` is half
    the angular slip between shells plus half the chord between curve samples;
    the two offsets are nearly orthogonal and are combined as such.
    """
    if target_gap <= 0 or R <= 0:
        raise ValueError("R and target_gap must be positive")
    g = float(target_gap)
    t_min = g / 4.0 if t_min is None else t_min
    curve = curve or _curve_for(g / R)
    if rotation is None:
        def angles(t):
            return profile.theta(combined_rho(scale, t))
    else:
        def angles(t):
            return np.full(np.shape(t), float(rotation))
    radii = _shell_radii(R, t_min, 1.2 * g, angles, 1.0, 0.56 * g)
    alphas = angles(radii)
    n_curve = len(curve.points)
    chunks, total = [np.zeros((1, 3))], 1
    gap = t_min
    for i, t in enumerate(radii):
        stride = max(int(g / max(t * curve.gap, 1e-300)), 1)
        stride = min(stride, max(n_curve // 64, 1))
        pts = curve.subsample(stride)
        chord = curve.chord_gap(stride) if stride > 1 else curve.gap
        total += len(pts)
        if total > max_points:
            raise ResolutionError(
                f"cloud would exceed {max_points} points; coarsen target_gap or shrink R")
        chunks.append(t * rotate_z(pts, alphas[i]))
        lo = radii[i - 1] if i else t
        hi = radii[i + 1] if i + 1 < len(radii) else t
        slip = max(abs(alphas[i] - alphas[i - 1]) if i else 0.0,
                   abs(alphas[i + 1] - alphas[i]) if i + 1 < len(radii) else 0.0)
        # chord -> arc slack and the along-ray part of the across-ray offset
        w = 0.5 * slip + 0.5 * chord * (1.0 + chord * chord)
        along = 0.5 * max(t - lo, hi - t) + 0.5 * hi * w * w
        gap = max(gap, math.hypot(along, hi * w))
    label = f"twist[{profile.label}]" if rotation is None else f"rot[{rotation:.6g}]"
    return PointCloud(np.concatenate(chunks), float(gap), R, label)


_CURVES: dict[float, BaseCurve] = {}


def _curve_for(angular_gap: float) -> BaseCurve:
    """Trace (or reuse) a base curve at least as fine as ``angular_gap``."""
    for g, c in sorted(_CURVES.items()):
        if c.gap <= angular_gap:
            return c
    g = max(min(angular_gap, 0.05), 2e-6)
    if g >= 2e-3:
        c = default_curve(2e-3)
    else:
        c = trace_base_curve(g)
    _CURVES[c.gap] = c
    return c


def _graph_lipschitz(oscillating, scale, lo, hi):
    """Bound for ``|grad v|`` over planar radii in ``[lo, hi]``."""
    if not oscillating:
        return 0.0
    # |grad (x a(rho - log|q|))| <= |a| + |a'|
    rho = combined_rho(scale, np.array([hi, lo]))
    a_sup, da_sup = GRAPH_AMPLITUDE.bounds(rho[0], rho[1])
    return float(a_sup + da_sup)


def sample_graph(oscillating: bool, scale, R: float, target_gap: float,
                 t_min: float | None = None, max_points: int = MAX_POINTS) -> PointCloud:
    """Sample the graph ``z = v(q)`` (rescaled at ``scale``) inside ``B_R``.

    Rings of planar radius ``t`` carry equally spaced samples.  On each ring the
    planar spacing is chosen from a Lipschitz bound of ``v`` over ``[t/2, 2t]``
    so that the lifted gap stays below ``target_gap``.
    """
    if target_gap <= 0 or R <= 0:
        raise ValueError("R and target_gap must be positive")
    if t_min is None:
        t_min = target_gap / 4.0
        while t_min * math.hypot(1.0, _graph_lipschitz(oscillating, scale, t_min, t_min)) > 0.5 * target_gap:
            t_min *= 0.5
    rings, lips = [], []
    t = t_min
    while True:
        lip = _graph_lipschitz(oscillating, scale, 0.5 * t, min(2.0 * t, 2.0 * R))
        rings.append(t)
        lips.append(lip)
        if t >= R:
            break
        t = min(t + 1.37 * target_gap / math.sqrt(1.0 + lip * lip), R)
        if len(rings) > 5_000_000:
            raise ResolutionError("too many rings for the requested gap")
    rings = np.array(rings)
    # inside the first ring: |v(q)| <= |q| sup|a|, and q sup|a| grows with q
    a_in = _graph_lipschitz(oscillating, scale, t_min, t_min)
    gap = t_min * math.sqrt(1.0 + a_in * a_in)
    pts = [np.zeros((1, 3))]
    total = 1
    for i, t in enumerate(rings):
        lift = math.sqrt(1.0 + lips[i] ** 2)
        n_ang = max(int(math.ceil(math.sqrt(2.0) * math.pi * (t + 1.37 * target_gap / lift) * lift / (0.97 * target_gap))), 6)
        total += n_ang
        if total > max_points:
            raise ResolutionError(
                f"cloud would exceed {max_points} points; coarsen target_gap or shrink R")
        phi = np.arange(n_ang) * (2.0 * math.pi / n_ang)
        q = t * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        v, _ = graph_jet(q, scale, oscillating)
        pts.append(np.column_stack([q, v]))
        dr = rings[i + 1] - t if i + 1 < len(rings) else 0.0
        # a point between this ring and the next is within dr/2 radially of one of
        # them and within half an angular step of a sample on that ring; the two
        # planar offsets are orthogonal and the graph lifts them by at most ``lift``
        gap = max(gap, math.hypot(0.5 * dr, (t + dr) * math.pi / n_ang) * lift)
    cloud = np.concatenate(pts)
    keep = np.linalg.norm(cloud, axis=1) <= R + gap
    return PointCloud(cloud[keep], float(gap), R, "graph" if oscillating else "plane")


def sample_interface(kind, scale, R: float, t_min: float | None, target_gap: float, **kw) -> PointCloud:
    """Sample the interface of ``kind`` at ``scale`` in ``B_R`` with gap <= ``target_gap``.

    With a log-scale, every shell must stay in the pure law
    (``rho - log R >= rho0``); ``scale=None`` samples the physical interface.
    """
    if t_min is not None and not 0.0 < t_min < R:
        raise ValueError("need 0 < t_min < R")
    if scale is not None:
        rho = scale.rho if isinstance(scale, LogScale) else LogScale(scale).rho
        rho0 = kind.profile.rho0 if isinstance(kind, TwistedSzulkin) else GRAPH_AMPLITUDE.rho0
        if rho - math.log(R) < rho0:
            raise DomainError(
                f"shells up to R={R} reach log-scale {rho - math.log(R):.4g} < {rho0:.4g}")
    if isinstance(kind, TwistedSzulkin):
        cloud = sample_twisted(kind.profile, scale, R, target_gap, t_min=t_min, **kw)
    elif isinstance(kind, OscillatingGraph):
        cloud = sample_graph(kind.oscillating, scale, R, target_gap, t_min=t_min, **kw)
    else:
        raise TypeError(f"unknown domain kind {kind!r}")
    if cloud.gap > target_gap * (1.0 + 1e-9):
        raise ResolutionError(f"certified gap {cloud.gap:.3g} exceeds target {target_gap:.3g}")
    return cloud


def write_ply(path, cloud, comment: str = "") -> None:
    """Write a point cloud as binary little-endian PLY."""
    pts = np.ascontiguousarray(_as_cloud(cloud).points, dtype="<f8")
    header = ["ply", "format binary_little_endian 1.0"]
    if comment:
        header += [f"comment {line}" for line in comment.splitlines()]
    header += [f"element vertex {len(pts)}", "property double x", "property double y",
               "property double z", "end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(pts.tobytes())


def read_ply(path) -> np.ndarray:
    """Read a binary PLY written by :func:`write_ply`."""
    with open(path, "rb") as fh:
        n = None
        while True:
            line = fh.readline().decode("ascii").strip()
            if line.startswith("element vertex"):
                n = int(line.split()[-1])
            if line == "end_header":
                break
        data = fh.read()
    if n is None:
        raise ValueError("missing vertex count")
    return np.frombuffer(data, dtype="<f8", count=3 * n).reshape(n, 3).copy()


__all__ = [
    "DomainError", "LogScale", "Measured", "PointCloud", "ResolutionError", "excess",
    "hausdorff_in_ball", "read_ply", "sample_graph", "sample_interface", "sample_twisted",
    "write_ply",
]
