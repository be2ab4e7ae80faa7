"""The base curve ``Sigma_s ∩ S^2`` and angular distances between its rotations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from ..fields import rotate_z, szulkin, szulkin_grad

THIRD_TURN = 2.0 * math.pi / 3.0
#: Rotation angles below this use the first-order excess expansion.
LINEAR_BELOW = 1e-4


class TracingError(RuntimeError):
    pass


def _project(q, iters=8):
    """Newton-project points onto ``{s = 0, |q| = 1}`` (minimum-norm steps)."""
    q = np.array(q, dtype=float, copy=True)
    for _ in range(iters):
        f1 = szulkin(q)
        f2 = 0.5 * (np.sum(q * q, axis=-1) - 1.0)
        g = szulkin_grad(q)
        a = np.sum(g * g, axis=-1)
        b = np.sum(g * q, axis=-1)
        c = np.sum(q * q, axis=-1)
        det = a * c - b * b
        # (J J^T)^{-1} F with J = [g; q]
        l1 = (c * f1 - b * f2) / det
        l2 = (-b * f1 + a * f2) / det
        q = q - l1[..., None] * g - l2[..., None] * q
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    # one more value-only correction along the in-sphere gradient
    g = szulkin_grad(q)
    g_t = g - np.sum(g * q, axis=-1, keepdims=True) * q
    q = q - (szulkin(q) / np.sum(g_t * g_t, axis=-1))[..., None] * g_t
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def _tangent(p):
    t = np.cross(szulkin_grad(p), p)
    return t / np.linalg.norm(t, axis=-1, keepdims=True)


@dataclass
class BaseCurve:
    """Closed polyline on the unit sphere approximating ``Sigma_s ∩ S^2``.

    ``points`` is ordered along the loop; the closing chord joins the last point
    to the first.  ``gap`` is the largest chord between consecutive points.
    """

    points: np.ndarray
    gap: float
    _tree: cKDTree | None = field(default=None, repr=False)

    @property
    def cyl_radius(self):
        return np.hypot(self.points[:, 0], self.points[:, 1])

    @property
    def tangents(self):
        t = _tangent(self.points)
        forward = np.roll(self.points, -1, axis=0) - self.points
        sign = np.sign(np.sum(t * forward, axis=-1))
        return t * np.where(sign == 0, 1.0, sign)[:, None]

    @property
    def normals(self):
        """Unit normals to the curve inside the tangent plane of the sphere."""
        return np.cross(self.points, self.tangents)

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.roll(self.points, -1, axis=0) - self.points, axis=1)))

    @property
    def rotation_speed(self):
        """Normal speed ``|(e_z x c) . nu|`` of the curve under rotation about z."""
        ez_c = np.stack([-self.points[:, 1], self.points[:, 0], np.zeros(len(self.points))], axis=1)
        return np.abs(np.sum(ez_c * self.normals, axis=1))

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    def subsample(self, stride: int) -> np.ndarray:
        stride = max(int(stride), 1)
        return self.points[::stride]

    def chord_gap(self, stride: int) -> float:
        pts = self.subsample(stride)
        return float(np.max(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)))

    def polyline_distance(self, y):
        """Euclidean distance from points ``y`` to the closed polyline."""
        y = np.asarray(y, dtype=float)
        _, idx = self.tree.query(y)
        n = len(self.points)
        best = np.full(len(y), np.inf)
        for a, b in ((idx - 1) % n, idx), (idx, (idx + 1) % n):
            pa, pb = self.points[a], self.points[b]
            seg = pb - pa
            w = np.clip(np.sum((y - pa) * seg, axis=1) / np.sum(seg * seg, axis=1), 0.0, 1.0)
            best = np.minimum(best, np.linalg.norm(y - (pa + w[:, None] * seg), axis=1))
        return best

    def angular_distance(self, y):
        """Angle between unit vectors ``y`` and the curve."""
        d = self.polyline_distance(y)
        return 2.0 * np.arcsin(np.minimum(d / 2.0, 1.0))


def trace_base_curve(target_gap: float, max_steps: int | None = None) -> BaseCurve:
    """Trace ``{s = 0} ∩ S^2`` from ``(0, 1, 0)`` by predictor-corrector continuation.

    A coarse loop is traced with Newton-projected Euler steps until it closes on
    the seed; segments are then subdivided and re-projected until every chord is
    at most ``target_gap``.
    """
    if not 1e-6 < target_gap < 0.1:
        raise ValueError(f"target_gap must lie in (1e-6, 0.1), got {target_gap}")
    step = 0.019
    seed = np.array([0.0, 1.0, 0.0])
    max_steps = max_steps or int(60.0 / step)
    pts = [seed]
    p = seed
    direction = _tangent(seed)
    for n in range(max_steps):
        t = _tangent(p)
        if np.dot(t, direction) < 0.0:
            t = -t
        q = _project(p + step * t)
        if n > 10 and np.linalg.norm(q - seed) <= step:
            break
        pts.append(q)
        direction = t
        p = q
    else:
        raise TracingError(f"continuation did not close after {max_steps} steps")
    coarse = np.array(pts)
    nxt = np.roll(coarse, -1, axis=0)
    chords = np.linalg.norm(nxt - coarse, axis=1)
    pieces = np.maximum(np.ceil(chords / (0.98 * target_gap)).astype(int), 1)
    if np.any(pieces > 1):
        frac = np.concatenate([np.arange(k) / k for k in pieces])
        start = np.repeat(np.arange(len(coarse)), pieces)
        raw = coarse[start] + frac[:, None] * (nxt[start] - coarse[start])
        fine = _project(raw)
    else:
        fine = coarse
    gap = float(np.max(np.linalg.norm(np.roll(fine, -1, axis=0) - fine, axis=1)))
    if gap > target_gap:
        raise TracingError(f"refined gap {gap:.3g} exceeds target {target_gap:.3g}")
    return BaseCurve(fine, gap)


@lru_cache(maxsize=8)
def default_curve(target_gap: float = 2e-3) -> BaseCurve:
    """Cached curve used by the distance experiments."""
    return trace_base_curve(target_gap)


def wrap_third(angle):
    """Reduce angles to ``(-pi/3, pi/3]`` (the curve is invariant under 120° turns)."""
    a = np.mod(np.asarray(angle, dtype=float) + math.pi / 3.0, THIRD_TURN) - math.pi / 3.0
    return np.where(a <= -math.pi / 3.0, a + THIRD_TURN, a)


def rotation_excess(curve: BaseCurve, delta, linear_below: float = LINEAR_BELOW, chunk: int = 200_000):
    """Angular excess ``max_c angle(R_delta c, Gamma)`` for each rotation angle.

    Below ``linear_below`` the first-order expansion ``|delta| * max normal
    speed`` is used; the polyline distance would be dominated by the chord
    sagitta there.
    """
    delta = wrap_third(delta)
    flat = delta.ravel()
    out = np.empty_like(flat)
    small = np.abs(flat) < linear_below
    out[small] = np.abs(flat[small]) * float(np.max(curve.rotation_speed))
    big = np.flatnonzero(~small)
    if big.size:
        n = len(curve.points)
        per = max(chunk // n, 1)
        for start in range(0, big.size, per):
            sel = big[start:start + per]
            rot = rotate_z(curve.points[None, :, :], flat[sel][:, None])
            ang = curve.angular_distance(rot.reshape(-1, 3)).reshape(len(sel), n)
            out[sel] = ang.max(axis=1)
    return out.reshape(delta.shape)


def rotation_hausdorff(curve: BaseCurve, delta, **kw):
    """Angular Hausdorff distance between ``R_delta Gamma`` and ``Gamma``."""
    delta = np.asarray(delta, dtype=float)
    both = rotation_excess(curve, np.stack([delta, -delta]), **kw)
    return np.maximum(both[0], both[1])
