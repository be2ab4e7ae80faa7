"""Corkscrew and area probes, and the slope-target scales of the graph example."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..fields import (
    GRAPH_AMPLITUDE,
    RHO_MAX,
    DomainError,
    LogScale,
    OscillatingGraph,
    TwistedSzulkin,
    combined_rho,
    field_gradient_bound,
    field_value,
    graph_jet,
    rotate_z,
)
from .curve import BaseCurve, default_curve


def interface_point(kind, scale, t: float = 1.0) -> np.ndarray:
    """A point of the interface at template distance ``t``.

    Twist: the point of the shell ``t R_alpha(t) Gamma`` with the largest
    cylindrical radius.  Graph: the point above ``(t, 0)``.
    """
    if isinstance(kind, TwistedSzulkin):
        curve = default_curve()
        c = curve.points[int(np.argmax(curve.cyl_radius))]
        alpha = float(kind.profile.theta(combined_rho(scale, np.array(t))))
        return t * rotate_z(c, alpha)
    v, _ = graph_jet(np.array([t, 0.0]), scale, kind.oscillating)
    return np.array([t, 0.0, float(v)])


# ---------------------------------------------------------------------------
# Corkscrew probe


def clearance(kind, scale, x, limit, levels: int = 24):
    """Certified lower bound for ``min(dist(x, interface), limit)`` on the positive side.

    For any radius ``r``, ``min(r, f(x) / sup_{B(x, r)} |grad f|)`` does not
    exceed the distance to the zero set; the best of a dyadic range of radii
    below ``limit`` is returned (0 where ``f <= 0``).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    limit = np.broadcast_to(np.asarray(limit, dtype=float), x.shape[:1]).copy()
    f = kind.side * field_value(kind, scale, x)
    out = np.zeros(len(x))
    ok = (f > 0.0) & (limit > 0.0)
    if not np.any(ok):
        return out
    xs, fs, lim = x[ok], f[ok], limit[ok]
    best = np.zeros(len(xs))
    r = lim.copy()
    for _ in range(levels):
        lip = field_gradient_bound(kind, scale, xs, r)
        best = np.maximum(best, np.minimum(r, fs / lip))
        r = r * 0.5
    out[ok] = best
    return out


@dataclass
class CorkscrewResult:
    M: float
    center: np.ndarray
    clearance: float
    evaluations: int


def corkscrew_probe(kind, scale, Q, s: float, top: int = 16, max_levels: int = 30) -> CorkscrewResult:
    """Estimate the corkscrew constant ``M = s / max clearance`` at ``Q`` and scale ``s``.

    Candidates start on a grid of spacing ``s/8`` inside ``B(Q, s)``; around the
    ``top`` best points a 5x5x5 grid at half the spacing is added on each level.
    Clearance is the certified step bound of :func:`clearance`, so ``M`` is an
    upper estimate.  ``M = inf`` when no candidate has positive clearance.
    """
    if not 0.0 < s <= 1.0:
        raise ValueError("probe scale s must lie in (0, 1]")
    Q = np.asarray(Q, dtype=float)
    h = s / 8.0
    ax = np.arange(-8, 9) * h
    grid = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    grid = grid[np.linalg.norm(grid, axis=1) < s] + Q

    def score(pts):
        return clearance(kind, scale, pts, s - np.linalg.norm(pts - Q, axis=1))

    pts, vals = grid, score(grid)
    evals = len(pts)
    offsets = np.stack(np.meshgrid(*([np.arange(-2, 3)] * 3), indexing="ij"), axis=-1).reshape(-1, 3)
    for _ in range(max_levels):
        order = np.argsort(vals)[::-1][:top]
        best = vals[order[0]]
        if best > 0.0 and h < 1e-3 * best:
            break
        h *= 0.5
        cand = (pts[order][:, None, :] + h * offsets[None, :, :]).reshape(-1, 3)
        cand = cand[np.linalg.norm(cand - Q, axis=1) < s]
        cv = score(cand)
        evals += len(cand)
        pts = np.concatenate([pts[order], cand])
        vals = np.concatenate([vals[order], cv])
    j = int(np.argmax(vals))
    c = float(vals[j])
    return CorkscrewResult(s / c if c > 0.0 else math.inf, pts[j], c, evals)


# ---------------------------------------------------------------------------
# Area probe


def _triangle_areas(a, b, c):
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


def _clip_sum(a, b, c, Q, r):
    area = _triangle_areas(a, b, c)
    cen = (a + b + c) / 3.0
    return float(np.sum(area[np.linalg.norm(cen - Q, axis=-1) <= r]))


def _twist_area(kind, scale, Q, r, curve, log_step, angle_step, inner):
    profile = kind.profile
    top = r + float(np.linalg.norm(Q))
    lo = max(top * inner, 1e-300)
    # shells: bounded log-step and bounded rotation between neighbours
    radii = [top]
    t = top
    while t > lo:
        step = log_step
        while True:
            t2 = t * math.exp(-step)
            da = abs(float(profile.theta(combined_rho(scale, np.array(t2))))
                     - float(profile.theta(combined_rho(scale, np.array(t)))))
            if da <= angle_step or step < 1e-9:
                break
            step *= 0.5
        t = max(t2, lo)
        radii.append(t)
    radii = np.array(radii[::-1])
    alpha = profile.theta(combined_rho(scale, radii))
    c = curve.points
    nxt = np.roll(c, -1, axis=0)
    total = 0.0
    for i in range(len(radii) - 1):
        p0 = radii[i] * rotate_z(c, alpha[i])
        p1 = radii[i] * rotate_z(nxt, alpha[i])
        q0 = radii[i + 1] * rotate_z(c, alpha[i + 1])
        q1 = radii[i + 1] * rotate_z(nxt, alpha[i + 1])
        if np.any(_triangle_areas(p0, p1, q1) <= 0.0) and radii[i] > 0.0:
            raise ArithmeticError("degenerate triangle in the shell mesh")
        total += _clip_sum(p0, p1, q1, Q, r) + _clip_sum(p0, q1, q0, Q, r)
    # the core inside the innermost shell is a cone of polyline length
    if np.linalg.norm(Q) <= r - lo:
        total += 0.5 * curve.length * lo * lo
    return total


def _graph_area(kind, scale, Q, r, n_rings, n_ang, inner):
    top = r + float(np.linalg.norm(Q[:2]))
    radii = np.concatenate([[0.0], np.geomspace(top * inner, top, n_rings)])
    phi = np.arange(n_ang + 1) * (2.0 * math.pi / n_ang)
    qx = radii[:, None] * np.cos(phi)[None, :]
    qy = radii[:, None] * np.sin(phi)[None, :]
    q = np.stack([qx, qy], axis=-1)
    v = np.zeros(qx.shape)
    v[1:], _ = graph_jet(q[1:], scale, kind.oscillating)
    pts = np.concatenate([q, v[..., None]], axis=-1)
    a, b = pts[:-1, :-1], pts[:-1, 1:]
    c, d = pts[1:, :-1], pts[1:, 1:]
    return _clip_sum(a, c, d, Q, r) + _clip_sum(a, d, b, Q, r)


def _mesh_curve(stride: int = 4) -> BaseCurve:
    base = default_curve()
    return BaseCurve(base.subsample(stride), base.chord_gap(stride))


def area_ratio_probe(kind, scale, Q, radii, curve: BaseCurve | None = None,
                     log_step: float = 0.01, angle_step: float = 0.01, inner: float = 1e-4,
                     n_rings: int = 800, n_ang: int = 2048):
    """``area(interface ∩ B(Q, r)) / r^2`` for each radius.

    The twist interface is meshed by triangulated strips between shells whose
    log-spacing and relative rotation are both bounded; the graph by a polar
    mesh.  Triangles are kept when their centroid lies in the ball, which is
    exact for the outer shell when ``Q = 0``.
    """
    Q = np.zeros(3) if Q is None else np.asarray(Q, dtype=float)
    out = []
    for r in radii:
        r = float(r)
        if r <= 0:
            raise ValueError("radii must be positive")
        if isinstance(kind, TwistedSzulkin):
            area = _twist_area(kind, scale, Q, r, curve or _mesh_curve(), log_step, angle_step, inner)
        elif isinstance(kind, OscillatingGraph):
            area = _graph_area(kind, scale, Q, r, n_rings, n_ang, inner)
        else:
            raise TypeError(f"unknown domain kind {kind!r}")
        out.append((r, area / (r * r)))
    return out


# ---------------------------------------------------------------------------
# Slope targets of the oscillating graph


class SlopeTargets(list):
    """List of log-scales; ``ks`` are the branches used and ``skipped`` the rest."""

    def __init__(self, scales, ks, skipped, amplitudes):
        super().__init__(scales)
        self.ks = ks
        self.skipped = skipped
        self.amplitudes = amplitudes


def graph_slope_targets(m: float, k_range) -> SlopeTargets:
    """Log-scales ``rho' = e^A`` with ``A sin A = m``, one per usable branch.

    Branch ``k`` is ``A in [pi k, pi k + pi/2]`` where ``A sin A`` runs
    monotonically from 0 to ``(-1)^k (pi k + pi/2)``; it holds a root iff
    ``m = 0`` or ``m`` has the branch's sign and ``|m| <= pi k + pi/2``.
    ``m = 0`` returns ``A = pi k`` exactly.  Branches without a root, or whose
    root falls inside the blend (``rho' < rho0``), are listed in ``skipped``.
    """
    if not math.isfinite(m):
        raise ValueError("m must be finite")
    scales, ks, skipped, amps = [], [], [], []
    for k in k_range:
        k = int(k)
        lo, hi = math.pi * k, math.pi * k + 0.5 * math.pi
        if hi > math.log(RHO_MAX):
            raise DomainError(f"branch {k} exceeds the precision budget")
        sign = 1.0 if k % 2 == 0 else -1.0
        if m == 0.0:
            A = lo
        elif sign * m < 0.0 or abs(m) > hi:
            skipped.append(k)
            continue
        else:
            a, b = lo, hi
            for _ in range(200):
                mid = 0.5 * (a + b)
                if sign * (mid * math.sin(mid) - m) < 0.0:
                    a = mid
                else:
                    b = mid
                if b - a <= 4e-16 * max(1.0, b):
                    break
            A = 0.5 * (a + b)
        if A < math.log(GRAPH_AMPLITUDE.rho0):
            # root inside the blend, where the amplitude is no longer A sin A
            skipped.append(k)
            continue
        scales.append(LogScale(math.exp(A)))
        ks.append(k)
        amps.append(A)
    return SlopeTargets(scales, ks, skipped, amps)


__all__ = [
    "CorkscrewResult", "SlopeTargets", "area_ratio_probe", "clearance", "corkscrew_probe",
    "graph_slope_targets", "interface_point",
]
