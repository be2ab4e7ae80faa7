"""Walk-on-spheres estimates of harmonic measure in the physical domains.

Each walk moves by the largest radius certified free of the interface by a
gradient bound of the signed field on the ball, capped at ``|X|/2`` so that
the bound never straddles the cone point.  A walk stops once the certified
radius drops below ``eps`` and is binned into a patch of the interface:
(dyadic level of ``|Y|``, azimuth sector, fold).  Random numbers come from a
counter-based hash of (seed, side, walk, path, draw), so every walk is
reproducible on its own and the integer histograms do not depend on the
order or the number of threads.

Optional dyadic splitting: when a path first enters ``B(0, 2^-j)`` for a
listed ``j`` it is replaced by ``F`` independent copies of weight ``1/F``.
Hits are stored by depth as integers; weights are applied on read-out and
standard errors then come from batch means.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from numba import njit, prange

from ..fields import GRAPH_AMPLITUDE, OscillatingGraph, TwistedSzulkin

SQRT90 = math.sqrt(90.0)  # ||D^2 s(Y)|| <= sqrt(90) |Y| (Frobenius norm of the Hessian)
MAX_STEPS = 100_000
ESCAPE_WARN = 0.01
GROW = 6  # doublings tried when enlarging a certified step
FOLDS = 3

# parameter vector layout
_KIND, _SIDE, _LAW, _EXP, _RHO0, _C2, _C3, _GRHO0, _GC2, _GC3, _GSUP, _GDSUP = range(12)


def _params(kind) -> np.ndarray:
    par = np.zeros(12)
    par[_SIDE] = kind.side
    g = GRAPH_AMPLITUDE
    par[_GRHO0], par[_GC2], par[_GC3] = g.rho0, g.c2, g.c3
    par[_GSUP], par[_GDSUP] = g._blend_sup, g._blend_dsup
    if isinstance(kind, TwistedSzulkin):
        prof = kind.profile
        par[_KIND] = 0
        par[_LAW] = {"none": 0, "loglog": 1, "power": 2}[prof.law]
        par[_EXP] = prof.exponent
        par[_RHO0] = prof.rho0
        par[_C2], par[_C3] = prof._c
    elif isinstance(kind, OscillatingGraph):
        par[_KIND] = 1 if kind.oscillating else 2
    else:
        raise TypeError(f"unknown domain kind {kind!r}")
    return par


# ---------------------------------------------------------------------------
# counter-based random numbers


@njit(cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _key(seed, walk, path):
    g = np.uint64(0x9E3779B97F4A7C15)
    k = _mix(np.uint64(seed) + g)
    k = _mix(k ^ (np.uint64(walk) + g))
    return _mix(k ^ (np.uint64(path) + g))


@njit(cache=True)
def _uniform(key, draw):
    z = _mix(key ^ (np.uint64(draw) * np.uint64(0xD1B54A32D192ED03) + np.uint64(1)))
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _child_path(path, child):
    return _mix(np.uint64(path) * np.uint64(0x9E3779B97F4A7C15) + np.uint64(child) + np.uint64(1))


# ---------------------------------------------------------------------------
# twist law and graph amplitude (scalar copies of the field module's laws)


@njit(cache=True)
def _pure(par, rho):
    if par[_LAW] == 1:
        return math.log(rho)
    return rho ** par[_EXP]


@njit(cache=True)
def _dpure(par, rho):
    if par[_LAW] == 1:
        return 1.0 / rho
    return par[_EXP] * rho ** (par[_EXP] - 1.0)


@njit(cache=True)
def _theta(par, rho):
    if par[_LAW] == 0 or rho <= 0.0:
        return 0.0
    if rho < par[_RHO0]:
        return par[_C2] * rho * rho + par[_C3] * rho * rho * rho
    return _pure(par, rho)


@njit(cache=True)
def _dtheta(par, rho):
    if par[_LAW] == 0 or rho <= 0.0:
        return 0.0
    if rho < par[_RHO0]:
        return 2.0 * par[_C2] * rho + 3.0 * par[_C3] * rho * rho
    return _dpure(par, rho)


@njit(cache=True)
def _max_dtheta(par, lo, hi):
    if par[_LAW] == 0:
        return 0.0
    m = max(_dtheta(par, lo), _dtheta(par, hi))
    c2, c3 = par[_C2], par[_C3]
    if c3 != 0.0:
        v = -c2 / (3.0 * c3)
        if 0.0 < v < par[_RHO0] and lo <= v <= hi:
            m = max(m, _dtheta(par, v))
    if lo <= par[_RHO0] <= hi:
        m = max(m, _dtheta(par, par[_RHO0]))
    return m


@njit(cache=True)
def _amp(par, rho):
    if rho >= par[_GRHO0]:
        A = math.log(rho)
        return A * math.sin(A)
    if rho > 0.0:
        return 1.0 + par[_GC2] * rho * rho + par[_GC3] * rho * rho * rho
    return 1.0


@njit(cache=True)
def _amp_bounds(par, lo, hi):
    rho0 = par[_GRHO0]
    a_b = 0.0
    da_b = 0.0
    if hi >= rho0:
        p_lo = max(lo, rho0)
        p_hi = max(hi, rho0)
        big = math.log(p_hi)
        da_pure = (1.0 + big) / p_lo
        ends = max(abs(_amp(par, p_lo)), abs(_amp(par, p_hi)))
        a_b = min(big, ends + (p_hi - p_lo) * da_pure)
        da_b = da_pure
    if lo < rho0:
        a_b = max(a_b, par[_GSUP])
        da_b = max(da_b, par[_GDSUP])
    return a_b, da_b


# ---------------------------------------------------------------------------
# signed fields and certified step radii


@njit(cache=True)
def _szulkin(x, y, z):
    return x * x * x - 3.0 * x * y * y + z * z * z - 1.5 * (x * x + y * y) * z


@njit(cache=True)
def _szulkin_grad(x, y, z):
    return (3.0 * x * x - 3.0 * y * y - 3.0 * x * z,
            -6.0 * x * y - 3.0 * y * z,
            3.0 * z * z - 1.5 * (x * x + y * y))


@njit(cache=True)
def _detwist(par, x, y, z, r):
    th = _theta(par, -math.log(r)) if r > 0.0 else 0.0
    c, s = math.cos(th), math.sin(th)
    return c * x + s * y, -s * x + c * y, z, th


@njit(cache=True)
def _field(par, x, y, z):
    kind = par[_KIND]
    if kind == 0:
        r = math.sqrt(x * x + y * y + z * z)
        a, b, c, _ = _detwist(par, x, y, z, r)
        return par[_SIDE] * _szulkin(a, b, c)
    if kind == 2:
        return par[_SIDE] * z
    q = math.sqrt(x * x + y * y)
    v = 0.0 if q == 0.0 else x * _amp(par, -math.log(q))
    return par[_SIDE] * (z - v)


@njit(cache=True)
def _local_slope(par, x, y, z, r):
    """Point data reused by every ball bound at ``X``: ``|grad s|`` at the de-twisted point."""
    if par[_KIND] != 0:
        return 0.0
    a, b, c, _ = _detwist(par, x, y, z, r)
    gx, gy, gz = _szulkin_grad(a, b, c)
    return math.sqrt(gx * gx + gy * gy + gz * gz)


@njit(cache=True)
def _lipschitz(par, x, y, r, gs, rad):
    """Upper bound of ``|grad f|`` on ``B(X, rad)`` (``r = |X|``, ``rad <= r/2``)."""
    kind = par[_KIND]
    if kind == 2:
        return 1.0
    if kind == 0:
        d = _max_dtheta(par, -math.log(r + rad), -math.log(r - rad))
        return (1.0 + d) * (gs + SQRT90 * (r + rad) * (1.0 + d) * rad)
    q = math.sqrt(x * x + y * y)
    lo = max(q - rad, 1e-300)
    a_b, da_b = _amp_bounds(par, -math.log(q + rad), -math.log(lo))
    return math.sqrt(1.0 + (a_b + da_b) ** 2)


@njit(cache=True)
def _safe_radius(par, x, y, z, f, grow):
    r = math.sqrt(x * x + y * y + z * z)
    cap = 0.5 * r
    if cap <= 0.0:
        return 0.0
    gs = _local_slope(par, x, y, z, r)
    rad = min(cap, f / _lipschitz(par, x, y, r, gs, cap))
    # enlarge while the bound on a doubled ball still certifies it
    for _ in range(grow):
        trial = min(cap, 2.0 * rad)
        if trial <= rad:
            break
        cand = min(trial, f / _lipschitz(par, x, y, r, gs, trial))
        if cand <= rad * (1.0 + 1e-12):
            break
        rad = cand
    return rad


@njit(cache=True)
def _project(par, x, y, z):
    """One Newton step onto the interface (vertical for graphs)."""
    kind = par[_KIND]
    if kind == 2:
        return x, y, 0.0
    if kind == 1:
        q = math.sqrt(x * x + y * y)
        v = 0.0 if q == 0.0 else x * _amp(par, -math.log(q))
        return x, y, v
    r = math.sqrt(x * x + y * y + z * z)
    if r == 0.0:
        return x, y, z
    a, b, c, th = _detwist(par, x, y, z, r)
    f = _szulkin(a, b, c)
    gx, gy, gz = _szulkin_grad(a, b, c)
    # grad f = R^T grad s - grad theta (col . grad s), col = d(R X)/d alpha at alpha = -theta
    al = -th
    ca, sa = math.cos(al), math.sin(al)
    rx = ca * gx + sa * gy
    ry = -sa * gx + ca * gy
    rz = gz
    colx = -sa * x - ca * y
    coly = ca * x - sa * y
    dot = colx * gx + coly * gy
    dth = _dtheta(par, -math.log(r))
    k = -dth / (r * r)  # grad theta = k X
    fx = rx - k * x * dot
    fy = ry - k * y * dot
    fz = rz - k * z * dot
    n2 = fx * fx + fy * fy + fz * fz
    if n2 == 0.0:
        return x, y, z
    return x - f * fx / n2, y - f * fy / n2, z - f * fz / n2


@njit(cache=True)
def _bin(par, x, y, z, level_min, nlev, nsec, folds):
    r = math.sqrt(x * x + y * y + z * z)
    if r > 0.0:
        lev = int(math.floor(-math.log2(r)))
    else:
        lev = level_min + nlev - 1
    lev = min(max(lev, level_min), level_min + nlev - 1) - level_min
    fold = 1
    if par[_KIND] == 0:
        a, b, c, _ = _detwist(par, x, y, z, r)
        phi = math.atan2(b, a)
        rc = math.sqrt(a * a + b * b)
        # cos(3 phi) from the coordinates, so that negation flips it exactly
        c3 = (a * a - 3.0 * b * b) * a / (rc * rc * rc) if rc > 0.0 else 0.0
        if folds and rc > 0.0 and 27.0 * c3 * c3 < 13.5:
            zeta = c / rc
            base = math.acos(-math.sqrt(2.0) * c3) / 3.0
            t0 = math.sqrt(2.0) * math.cos(base)
            t1 = math.sqrt(2.0) * math.cos(base - 2.0 * math.pi / 3.0)
            t2 = math.sqrt(2.0) * math.cos(base - 4.0 * math.pi / 3.0)
            below = 0
            near = t0
            best = abs(zeta - t0)
            if abs(zeta - t1) < best:
                best = abs(zeta - t1)
                near = t1
            if abs(zeta - t2) < best:
                near = t2
            # rank of the nearest root among the three
            if t0 < near:
                below += 1
            if t1 < near:
                below += 1
            if t2 < near:
                below += 1
            fold = below
    else:
        phi = math.atan2(y, x)
    sec = int(math.floor((phi + math.pi) / (2.0 * math.pi) * nsec))
    if sec >= nsec:
        sec = nsec - 1
    if sec < 0:
        sec = 0
    return lev, sec, fold


@njit(cache=True)
def _run_walks(par, pole, seed, w0, w1, eps, max_steps, split_r, split_f,
               level_min, grow, folds, counts, escaped, steps):
    nlev, nsec = counts.shape[1], counts.shape[2]
    nsplit = split_r.shape[0]
    cap = 1 + nsplit * max(split_f - 1, 0)
    sx = np.empty(cap)
    sy = np.empty(cap)
    sz = np.empty(cap)
    sdepth = np.empty(cap, dtype=np.int64)
    spath = np.empty(cap, dtype=np.uint64)
    total = 0
    for w in range(w0, w1):
        top = 0
        sx[0], sy[0], sz[0] = pole[0], pole[1], pole[2]
        sdepth[0] = 0
        spath[0] = np.uint64(0)
        top = 1
        while top > 0:
            top -= 1
            x, y, z = sx[top], sy[top], sz[top]
            depth = sdepth[top]
            path = spath[top]
            key = _key(seed, w, path)
            draw = 0
            n = 0
            while True:
                f = _field(par, x, y, z)
                rad = _safe_radius(par, x, y, z, f, grow)
                if rad < eps:
                    px, py, pz = _project(par, x, y, z)
                    lev, sec, fold = _bin(par, px, py, pz, level_min, nlev, nsec, folds)
                    counts[depth, lev, sec, fold] += 1
                    break
                if n >= max_steps:
                    escaped[depth] += 1
                    break
                u1 = _uniform(key, draw)
                u2 = _uniform(key, draw + 1)
                draw += 2
                cz = 2.0 * u1 - 1.0
                sr = math.sqrt(max(0.0, 1.0 - cz * cz))
                ph = 2.0 * math.pi * u2
                x += rad * sr * math.cos(ph)
                y += rad * sr * math.sin(ph)
                z += rad * cz
                n += 1
                if depth < nsplit and x * x + y * y + z * z < split_r[depth] ** 2:
                    # enter the next splitting ball: F - 1 siblings go on the stack
                    for child in range(1, split_f):
                        sx[top], sy[top], sz[top] = x, y, z
                        sdepth[top] = depth + 1
                        spath[top] = _child_path(path, child)
                        top += 1
                    depth += 1
                    path = _child_path(path, 0)
                    key = _key(seed, w, path)
                    draw = 0
            total += n
    steps[0] += total


@njit(cache=True, parallel=True)
def _run_batches(par, pole, seed, bounds, eps, max_steps, split_r, split_f, level_min, grow, folds, counts,
                 escaped, steps):
    for b in prange(counts.shape[0]):
        _run_walks(par, pole, seed, bounds[b], bounds[b + 1], eps, max_steps, split_r, split_f,
                   level_min, grow, folds, counts[b], escaped[b], steps[b])


# ---------------------------------------------------------------------------
# histograms


@dataclass(frozen=True)
class PatchPartition:
    """Dyadic annuli ``2^-(j+1) < |Y| <= 2^-j`` for ``j`` in ``[level_min, level_max]``
    (the end levels absorb everything beyond), times azimuth sectors, times folds.

    With ``folds`` the twist patches are further split by the root of the
    meridian cubic nearest to the point (0, 1, 2 from below; 1 where the
    meridian meets the curve once).  Otherwise, and always for graphs, every
    point has fold 1.  Negation maps (j, k, f) to (j, k + sectors/2, 2 - f).
    """

    level_min: int = -4
    level_max: int = 24
    sectors: int = 12
    folds: bool = False

    def __post_init__(self):
        if self.sectors % 2 or self.sectors <= 0:
            raise ValueError("the number of sectors must be positive and even")
        if self.level_max <= self.level_min:
            raise ValueError("level_max must exceed level_min")

    @property
    def levels(self) -> int:
        return self.level_max - self.level_min + 1

    @property
    def shape(self):
        return (self.levels, self.sectors, FOLDS)

    def level_index(self, j: int) -> int:
        return j - self.level_min

    def antipodal(self, arr):
        """Re-index a patch array so that entry P holds the value at -P."""
        return np.roll(arr[..., ::-1], -self.sectors // 2, axis=-2)


@dataclass
class MeasureHistogram:
    kind: dict
    side: int
    pole: np.ndarray
    seed: int
    eps: float
    walks: int
    partition: PatchPartition
    counts: np.ndarray  # (batch, depth, level, sector, fold) integers
    escaped: np.ndarray  # (batch, depth)
    batch_walks: np.ndarray
    split_levels: tuple = ()
    split_factor: int = 1
    steps: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def split(self) -> bool:
        return bool(self.split_levels) and self.split_factor > 1

    @property
    def weights(self):
        return float(self.split_factor) ** -np.arange(self.counts.shape[1])

    def _batch_measures(self):
        w = np.einsum("bd...,d->b...", self.counts.astype(float), self.weights)
        return w / self.batch_walks.reshape((-1,) + (1,) * (w.ndim - 1))

    def patch_measures(self):
        """Estimated harmonic measure of every patch and its standard error."""
        total = np.einsum("bd...,d->...", self.counts.astype(float), self.weights)
        p = total / self.walks
        if not self.split:
            return p, np.sqrt(p * (1.0 - p) / self.walks)
        per = self._batch_measures()
        nb = per.shape[0]
        return p, per.std(axis=0, ddof=1) / math.sqrt(nb)

    def measure(self, mask) -> tuple[float, float]:
        """Measure of the union of patches where ``mask`` (shape of the partition) holds."""
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), self.partition.shape)
        total = float(np.einsum("bd...,d->...", self.counts.astype(float), self.weights)[mask].sum())
        p = total / self.walks
        if not self.split:
            return p, math.sqrt(max(p * (1.0 - p), 0.0) / self.walks)
        per = self._batch_measures()[:, mask].sum(axis=1)
        return p, float(per.std(ddof=1) / math.sqrt(len(per)))

    def ball_mask(self, j: int):
        """Patches inside ``B(0, 2^-j)``."""
        m = np.zeros(self.partition.shape, dtype=bool)
        m[self.partition.level_index(j):] = True
        return m

    @property
    def escape_fraction(self) -> float:
        return float(np.sum(self.escaped * self.weights[None, :])) / self.walks

    @property
    def escape_warning(self) -> bool:
        return self.escape_fraction > ESCAPE_WARN

    def to_csv(self, path, manifest_id: str = "") -> Path:
        p, se = self.patch_measures()
        path = Path(path)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["schema", "level", "r_outer", "sector", "fold", "measure", "std_error",
                         "raw_count", "side", "seed", "walks", "manifest"])
            raw = self.counts.sum(axis=(0, 1))
            for idx in zip(*np.nonzero(raw)):
                j = idx[0] + self.partition.level_min
                wr.writerow(["fblab-hist-1", j, repr(2.0**-j), idx[1], idx[2], repr(float(p[idx])),
                             repr(float(se[idx])), int(raw[idx]), self.side, self.seed, self.walks, manifest_id])
        return path


def _thread_cap():
    env = os.environ.get("FBLAB_THREADS")
    if env:
        numba.set_num_threads(max(1, min(int(env), numba.config.NUMBA_NUM_THREADS)))


def wos_sample(kind, pole=None, walks: int = 100_000, master_seed: int = 0, *, eps: float = 1e-4,
               partition: PatchPartition | None = None, batches: int = 20, split_levels=(),
               split_factor: int = 1, max_steps: int = MAX_STEPS, grow: int = GROW) -> MeasureHistogram:
    """Harmonic measure histogram of ``kind`` (physical scale) seen from ``pole``.

    Default poles are ``(0, 0, side)``.  ``split_levels`` lists the ``j``
    whose balls ``B(0, 2^-j)`` trigger splitting into ``split_factor`` copies.
    """
    pole = np.array([0.0, 0.0, float(kind.side)]) if pole is None else np.asarray(pole, dtype=float)
    par = _params(kind)
    f0 = _field(par, pole[0], pole[1], pole[2])
    if not f0 > 0.0:
        raise ValueError("the pole must lie strictly inside the chosen side")
    if eps < 1e-5 * float(np.linalg.norm(pole)):
        raise ValueError("eps must be at least 1e-5 |pole|")
    if walks <= 0 or batches <= 1:
        raise ValueError("need a positive walk count and at least two batches")
    partition = partition or PatchPartition()
    levels = tuple(sorted(int(j) for j in split_levels))
    split_r = np.array([2.0**-j for j in levels])
    depth = len(levels) + 1
    batches = min(batches, walks)
    bounds = np.linspace(0, walks, batches + 1).astype(np.int64)
    counts = np.zeros((batches, depth) + partition.shape, dtype=np.int64)
    escaped = np.zeros((batches, depth), dtype=np.int64)
    steps = np.zeros((batches, 1), dtype=np.int64)
    # the side enters the stream so that the two sides never share random numbers
    seed = int(np.uint64(master_seed) ^ np.uint64(0x5BD1E995 if kind.side < 0 else 0))
    _thread_cap()
    _run_batches(par, pole, np.uint64(seed), bounds, float(eps), int(max_steps), split_r,
                 int(split_factor) if levels else 1, partition.level_min, int(grow), bool(partition.folds), counts, escaped, steps)
    hist = MeasureHistogram(kind.describe(), int(kind.side), pole, int(master_seed), float(eps), int(walks),
                            partition, counts, escaped, np.diff(bounds).astype(float), levels,
                            int(split_factor) if levels else 1, int(steps.sum()))
    if hist.escape_warning:
        warnings.warn(f"{hist.escape_fraction:.2%} of walks hit the step cap", RuntimeWarning, stacklevel=2)
    return hist


# ---------------------------------------------------------------------------
# oracles and the log h profile


def halfspace_patch_measure(partition: PatchPartition, height: float = 1.0) -> np.ndarray:
    """Exact harmonic measure of each patch of ``{z = 0}`` from ``(0, 0, height)``.

    The Poisson kernel of the half-space integrates over an annulus
    ``a < |q| <= b`` to ``height (1/sqrt(a^2+h^2) - 1/sqrt(b^2+h^2))``.
    """
    out = np.zeros(partition.shape)
    for li in range(partition.levels):
        j = li + partition.level_min
        b = math.inf if li == 0 else 2.0**-j
        a = 0.0 if li == partition.levels - 1 else 2.0 ** -(j + 1)
        inner = 1.0 / math.hypot(a, height)
        outer = 0.0 if math.isinf(b) else 1.0 / math.hypot(b, height)
        out[li, :, 1] = height * (inner - outer) / partition.sectors
    return out


@dataclass
class LogHEstimate:
    scales: np.ndarray  # r = 2^-j
    levels: np.ndarray
    statistic: np.ndarray  # sup over patches of |log(m-/m+)|, nan when inconclusive
    band: np.ndarray  # one standard error of the statistic's maximizing term
    ball: np.ndarray  # |log(omega-(B_r) / omega+(B_r))|
    ball_band: np.ndarray
    inconclusive: np.ndarray

    def to_csv(self, path, manifest_id: str = "", seed: int | None = None) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["schema", "level", "r", "sector_statistic", "std_error", "ball_statistic",
                         "ball_std_error", "inconclusive", "seed", "manifest"])
            for row in zip(self.levels, self.scales, self.statistic, self.band, self.ball, self.ball_band,
                           self.inconclusive):
                wr.writerow(["fblab-logh-1", int(row[0]), repr(float(row[1])), repr(float(row[2])),
                             repr(float(row[3])), repr(float(row[4])), repr(float(row[5])), bool(row[6]),
                             "" if seed is None else seed, manifest_id])
        return path


def _log_ratio_se(m_minus, se_minus, m_plus, se_plus):
    return math.sqrt((se_minus / m_minus) ** 2 + (se_plus / m_plus) ** 2)


def log_h_profile(hist_plus: MeasureHistogram, hist_minus: MeasureHistogram, levels) -> LogHEstimate:
    """Dyadic profile of ``sup_P |log(omega-(P) / omega+(P))|`` over the patches of each annulus."""
    if hist_plus.partition != hist_minus.partition:
        raise ValueError("the histograms must share the patch partition")
    if not np.allclose(hist_plus.pole, -hist_minus.pole):
        raise ValueError("the poles must be an antipodal pair")
    part = hist_plus.partition
    mp, sp = hist_plus.patch_measures()
    mm, sm = hist_minus.patch_measures()
    levels = np.asarray(list(levels), dtype=int)
    stat, band, ball, ball_band, bad = [], [], [], [], []
    for j in levels:
        li = part.level_index(int(j))
        a, b = mp[li], mm[li]
        both = (a > 0) & (b > 0)
        one = (a > 0) ^ (b > 0)
        if one.any() or not both.any():
            stat.append(math.nan)
            band.append(math.nan)
            bad.append(True)
        else:
            lr = np.abs(np.log(b[both] / a[both]))
            k = int(np.argmax(lr))
            stat.append(float(lr[k]))
            band.append(_log_ratio_se(b[both][k], sm[li][both][k], a[both][k], sp[li][both][k]))
            bad.append(False)
        pa, sa = hist_plus.measure(hist_plus.ball_mask(int(j)))
        pb, sb = hist_minus.measure(hist_minus.ball_mask(int(j)))
        if pa > 0 and pb > 0:
            ball.append(abs(math.log(pb / pa)))
            ball_band.append(_log_ratio_se(pb, sb, pa, sa))
        else:
            ball.append(math.nan)
            ball_band.append(math.nan)
    return LogHEstimate(2.0 ** -levels.astype(float), levels, np.array(stat), np.array(band), np.array(ball),
                        np.array(ball_band), np.array(bad))


def symmetric_patch_z(hist_plus: MeasureHistogram, hist_minus: MeasureHistogram, levels=None):
    """z-scores of ``omega+(P) - omega-(-P)`` for every patch with data."""
    part = hist_plus.partition
    mp, sp = hist_plus.patch_measures()
    mm, sm = hist_minus.patch_measures()
    mm_r, sm_r = part.antipodal(mm), part.antipodal(sm)
    se = np.sqrt(sp**2 + sm_r**2)
    keep = se > 0
    if levels is not None:
        lv = np.zeros(part.shape, dtype=bool)
        for j in levels:
            lv[part.level_index(int(j))] = True
        keep &= lv
    return (mp - mm_r)[keep] / se[keep]


__all__ = [
    "LogHEstimate", "MeasureHistogram", "PatchPartition", "halfspace_patch_measure", "log_h_profile",
    "symmetric_patch_z", "wos_sample",
]
