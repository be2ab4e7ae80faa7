"""Blow-up sequences, the twist-vs-rotation distance bound and the phase experiment.

Distances between the rescaled twisted interface ``Sigma_rho`` and a rotated
cone ``R_phi Sigma_s`` are computed shell by shell.  On the sphere of radius
``t`` the twisted interface is ``t R_alpha(t) Gamma`` with
``alpha(t) = theta(rho - log t)``, and the distance from a point ``t u`` to the
cone is exactly ``t sin(angle(u, R_phi Gamma))``.  Hence

    HD = sup_t t sin(D(alpha(t) - phi))

where ``D(delta)`` is the angular Hausdorff distance between ``R_delta Gamma``
and ``Gamma``.  This "shell" value is exact up to the curve discretisation for
the twisted-to-cone excess and up to ``O(t D^3)`` for the reverse excess.  The
cheaper "matched" value pairs every sample with its rotated partner and gives
the upper bound ``sup_t 2 t sin(|delta|/2) max(cyl radius)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..fields import (
    RHO_MAX,
    TWO_PI,
    DomainError,
    LogScale,
    TwistProfile,
    rotate_z,
    theta_jet,
)
from .clouds import Measured, ResolutionError, hausdorff_in_ball, sample_twisted
from .curve import LINEAR_BELOW, THIRD_TURN, BaseCurve, default_curve, rotation_hausdorff, wrap_third

#: Cloud-size cap used to decide whether a brute-force check is feasible.
CLOUD_BUDGET = 4_000_000


def _as_scale(scale) -> LogScale:
    return scale if isinstance(scale, LogScale) else LogScale(scale)


def _check_pure(profile: TwistProfile, scale: LogScale, R: float):
    if scale.rho - math.log(R) < profile.rho0:
        raise DomainError(
            f"rho - log R = {scale.rho - math.log(R):.4g} is below the pure-law threshold "
            f"{profile.rho0:.4g}")


def relative_twist(profile: TwistProfile, scale, t):
    """``theta(rho - log t) - theta(rho)`` for template radii ``t``."""
    scale = _as_scale(scale)
    t = np.asarray(t, dtype=float)
    rho = scale.rho - np.log(t)
    if profile.law == "loglog":
        # log(rho - log t) - log(rho) without cancellation
        pure = rho >= profile.rho0
        out = profile.theta(rho) - profile.theta(scale.rho)
        return np.where(pure & (scale.rho >= profile.rho0), np.log1p(-np.log(t) / scale.rho), out)
    return profile.theta(rho) - profile.theta(scale.rho)


def _shell_grid(R, decades=12.0, per_decade=60):
    n = int(decades * per_decade) + 1
    return R * 10.0 ** (-np.arange(n) / per_decade)


def matched_shell_bound(profile: TwistProfile, scale, R: float, phi: float | np.ndarray,
                        radii=None) -> np.ndarray:
    """``sup_t 2 t sin(|alpha(t) - phi|/2)`` with angles reduced mod 120°."""
    scale = _as_scale(scale)
    t = _shell_grid(R) if radii is None else np.asarray(radii)
    alpha = profile.theta(scale.rho - np.log(t))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    delta = wrap_third(alpha[None, :] - phi[:, None])
    vals = np.max(2.0 * t[None, :] * np.sin(0.5 * np.abs(delta)), axis=1)
    return vals if vals.size > 1 else vals[:1]


def shell_hausdorff(profile: TwistProfile, scale, R: float, phi: float | None = None,
                    curve: BaseCurve | None = None, delta_fn=None) -> Measured:
    """``HD(Sigma_rho ∩ B_R, R_phi Sigma_s ∩ B_R)`` by the shell formula.

    ``phi`` defaults to ``theta(rho) mod 2*pi`` (the blow-up rotation).  The
    relative angle on each shell is passed through ``delta_fn(t)`` when given,
    so callers can avoid catastrophic cancellation.
    """
    scale = _as_scale(scale)
    curve = curve or default_curve()
    if phi is None:
        phi = theta_jet(profile, scale).theta_mod
        if delta_fn is None:
            def delta_fn(t):
                return relative_twist(profile, scale, t)
    if delta_fn is None:
        def delta_fn(t):
            return profile.theta(scale.rho - np.log(t)) - phi

    def values(t):
        d = rotation_hausdorff(curve, delta_fn(t))
        return t * np.sin(np.minimum(d, 0.5 * math.pi)), d

    best, best_t, t_grid = 0.0, R, []
    # walk inward a decade at a time; shells below the current best cannot win
    top = R
    while top > 1e-300:
        t = top * 10.0 ** (-np.arange(61) / 60.0)
        t_grid.append(t)
        v, _ = values(t)
        j = int(np.argmax(v))
        if v[j] > best:
            best, best_t = float(v[j]), float(t[j])
        top = t[-1]
        if top < best or top < R * 1e-14:
            break
    # refine around the maximiser
    fine = best_t * 10.0 ** np.linspace(-1.0 / 60.0, 1.0 / 60.0, 201)
    fine = fine[fine <= R]
    v, d = values(fine)
    j = int(np.argmax(v))
    refined = max(best, float(v[j]))
    t_star = float(fine[j]) if v[j] >= best else best_t
    d_star = float(d[j])
    delta_star = abs(float(wrap_third(delta_fn(np.array([t_star])))[0]))
    if delta_star < LINEAR_BELOW:
        # first-order branch: sampled max speed and the dropped second order
        err = t_star * delta_star * (curve.gap**2 + delta_star)
    else:
        # polyline sagitta; the cone-to-twist excess lies between the
        # perpendicular distance t sin D and the same-sphere chord 2 t sin(D/2)
        err = t_star * (curve.gap**2 / 8.0 + 2.0 * math.sin(0.5 * d_star) - math.sin(d_star))
    err += refined - best
    return Measured(refined, float(err))


# ---------------------------------------------------------------------------
# Distance bound for the twist against its frozen rotation


@dataclass
class LemmaCheck:
    """Twist-vs-frozen-rotation distance together with the chord bound."""

    rho: float
    R: float
    eps: float
    lhs: float
    lhs_error: float
    rhs_sup: float
    ratio: float
    chord_sup: float
    chord_ratio: float
    method: str
    cloud_gap: float = float("nan")


def _sup_t_dtheta(profile, scale, lo, hi):
    """``sup_{t in [lo, hi]} t |theta(rho - log t) - theta(rho)|``."""
    if hi <= lo:
        return 0.0
    t = np.geomspace(lo, hi, 4001)
    v = t * np.abs(relative_twist(profile, scale, t))
    j = int(np.argmax(v))
    a, b = t[max(j - 1, 0)], t[min(j + 1, len(t) - 1)]
    tf = np.linspace(a, b, 2001)
    vf = tf * np.abs(relative_twist(profile, scale, tf))
    return float(max(v.max(), vf.max()))


def hd_lemma_check(profile: TwistProfile, scale, R: float, eps: float | None = None,
                   method: str = "shell", target_gap: float = 1e-3,
                   curve: BaseCurve | None = None) -> LemmaCheck:
    """Compare ``HD(Sigma_rho ∩ B_R, R_theta(rho) Sigma_s ∩ B_R)`` with the chord bound.

    Parameters
    ----------
    profile, scale, R
        Twist law, log-scale ``rho`` and template ball radius.
    eps
        Inner cutoff of the bound; defaults to ``rho**-0.5``.
    method
        ``"shell"`` (shell formula) or ``"cloud"`` (brute-force clouds at
        ``target_gap``).

    Returns
    -------
    LemmaCheck
        ``rhs_sup = max(eps, sup_{eps <= t <= R} t |dtheta|)``,
        ``ratio = lhs / rhs_sup``, plus ``chord_sup`` (the same supremum over
        ``0 < t <= R``) and ``chord_ratio = lhs / chord_sup``.
    """
    scale = _as_scale(scale)
    eps = scale.rho**-0.5 if eps is None else float(eps)
    if not 0.0 < eps < R:
        raise ValueError(f"need 0 < eps < R, got eps={eps}, R={R}")
    _check_pure(profile, scale, R)
    phi = theta_jet(profile, scale).theta_mod
    if method == "shell":
        m = shell_hausdorff(profile, scale, R, curve=curve)
        lhs, err, gap = m.value, m.uncertainty, float("nan")
    elif method == "cloud":
        twisted = sample_twisted(profile, scale, R, target_gap, max_points=CLOUD_BUDGET)
        frozen = sample_twisted(profile, scale, R, target_gap, rotation=phi, max_points=CLOUD_BUDGET)
        m = hausdorff_in_ball(twisted, frozen, R)
        lhs, err, gap = m.value, m.uncertainty, max(twisted.gap, frozen.gap)
    else:
        raise ValueError(f"unknown method {method!r}")
    rhs = max(eps, _sup_t_dtheta(profile, scale, eps, R))
    chord = _sup_t_dtheta(profile, scale, R * 1e-12, R)
    return LemmaCheck(scale.rho, R, eps, lhs, err, rhs, lhs / rhs, chord,
                      lhs / chord if chord > 0 else float("nan"), method, gap)


# ---------------------------------------------------------------------------
# Blow-up sequences


@dataclass
class BlowupSequence:
    """Log-scales ``rho_k = exp(theta0 + 2 pi k)`` where the log-log twist equals ``theta0``."""

    theta0: float
    ks: list
    scales: list
    eps: list = field(default_factory=list)


def blowup_log_scales(theta0: float, k_range) -> BlowupSequence:
    """Scales at which ``theta = log rho`` is congruent to ``theta0`` mod 2*pi."""
    if not 0.0 <= theta0 < TWO_PI:
        raise ValueError(f"theta0 must lie in [0, 2*pi), got {theta0}")
    ks = sorted(int(k) for k in k_range)
    if not ks:
        return BlowupSequence(theta0, [], [], [])
    k_max = int(math.floor((70.0 - theta0) / TWO_PI))
    if ks[-1] > k_max:
        raise DomainError(f"k={ks[-1]} exceeds the precision budget; largest usable k is {k_max}")
    if ks[0] < 0:
        raise ValueError("blow-up indices must be non-negative")
    profile = TwistProfile.loglog()
    scales = []
    for k in ks:
        sc = LogScale.from_blowup_index(theta0, k)
        if sc.rho < profile.rho0:
            raise DomainError(f"k={k} gives rho={sc.rho:.4g}, inside the blend below rho0={profile.rho0:.4g}")
        jet = theta_jet(profile, sc)
        miss = abs((jet.theta_mod - theta0 + math.pi) % TWO_PI - math.pi)
        if miss > 1e-9:
            raise ArithmeticError(f"angle reduction missed theta0 by {miss:.3g} at k={k}")
        scales.append(sc)
    return BlowupSequence(theta0, ks, scales, [sc.rho**-0.5 for sc in scales])


@dataclass
class BlowupStep:
    k: int
    rho: float
    d_shell: float
    d_shell_error: float
    d_matched: float
    d_cloud: float
    cloud_gap: float
    method: str

    @property
    def value(self) -> float:
        """Distance used for trends: shell value, or the matched bound if requested."""
        return self.d_matched if self.method == "matched" else self.d_shell


def _cloud_size_estimate(curve_length, R, gap):
    # shells of spacing 1.2 gap carrying curve samples of spacing gap / t
    return curve_length * R * R / (2.0 * 1.2 * gap * gap)


def blowup_convergence(theta0: float, k_range, R: float, profile: TwistProfile | None = None,
                       matched_from: int | None = None, cloud: bool = False,
                       curve: BaseCurve | None = None) -> list[BlowupStep]:
    """``D_k = HD(Sigma_{rho_k} ∩ B_R, R_theta0 Sigma_s ∩ B_R)`` along a blow-up sequence.

    Every step reports the shell value and the matched-shell bound; steps with
    ``k >= matched_from`` are labelled ``"matched"``.  With ``cloud=True`` a
    brute-force cloud distance is added at gap ``D_matched / 10``, and a
    :class:`ResolutionError` names the largest affordable ``k`` if that cloud
    would be too big.  The reference rotation is ``theta(rho_k) mod 2*pi``
    (``theta0`` for the log-log law, 0 for the untwisted profile).
    """
    profile = profile or TwistProfile.loglog()
    curve = curve or default_curve()
    seq = blowup_log_scales(theta0, k_range)
    out = []
    for k, sc in zip(seq.ks, seq.scales):
        _check_pure(profile, sc, R)
        phi = theta_jet(profile, sc).theta_mod
        shell = shell_hausdorff(profile, sc, R, curve=curve)
        matched = float(matched_shell_bound(profile, sc, R, phi)[0])
        d_cloud, gap = float("nan"), float("nan")
        if cloud:
            gap = max(matched / 10.0, 1e-12)
            if _cloud_size_estimate(curve.length, R, gap) > CLOUD_BUDGET:
                feasible = [kk for kk, s2 in zip(seq.ks, seq.scales)
                            if _cloud_size_estimate(curve.length, R, max(
                                float(matched_shell_bound(profile, s2, R,
                                                          theta_jet(profile, s2).theta_mod)[0]) / 10.0,
                                1e-12)) <= CLOUD_BUDGET]
                raise ResolutionError(
                    f"cloud for k={k} needs gap {gap:.2e}; feasible k: {feasible or 'none'}")
            a = sample_twisted(profile, sc, R, gap)
            b = sample_twisted(profile, sc, R, gap, rotation=phi)
            d_cloud = hausdorff_in_ball(a, b, R).value
        method = "matched" if matched_from is not None and k >= matched_from else "shell"
        out.append(BlowupStep(k, sc.rho, shell.value, shell.uncertainty, matched, d_cloud, gap, method))
    return out


# ---------------------------------------------------------------------------
# Accumulation of rotation angles


@dataclass
class CoverageReport:
    tol: float
    targets: np.ndarray
    covered: np.ndarray
    accumulation: np.ndarray
    diameter: float
    n_tail: int

    @property
    def coverage(self) -> float:
        return float(np.mean(self.covered)) if self.covered.size else 0.0

    @property
    def non_unique(self) -> bool:
        return self.diameter > 0.5 * math.pi


def _circ_dist(a, b):
    d = np.abs(np.mod(a - b, TWO_PI))
    return np.minimum(d, TWO_PI - d)


def _near_any(targets, angles, tol):
    """For each target, whether some angle lies within ``tol`` on the circle."""
    if angles.size == 0:
        return np.zeros(targets.shape, dtype=bool)
    a = np.sort(np.mod(angles, TWO_PI))
    ext = np.concatenate([a[-1:] - TWO_PI, a, a[:1] + TWO_PI])
    idx = np.searchsorted(ext, targets)
    left = ext[np.clip(idx - 1, 0, len(ext) - 1)]
    right = ext[np.clip(idx, 0, len(ext) - 1)]
    return np.minimum(np.abs(targets - left), np.abs(right - targets)) <= tol * (1.0 + 1e-12)


def circular_diameter(angles) -> float:
    """Largest circular distance between two of the given angles."""
    a = np.unique(np.mod(np.asarray(angles, dtype=float), TWO_PI))
    if a.size < 2:
        return 0.0
    anti = np.mod(a + math.pi, TWO_PI)
    ext = np.concatenate([a - TWO_PI, a, a + TWO_PI])
    idx = np.searchsorted(ext, anti)
    best = 0.0
    for shift in (-1, 0):
        cand = ext[np.clip(idx + shift, 0, len(ext) - 1)]
        best = max(best, float(np.max(_circ_dist(cand, a))))
    return best


def accumulation_coverage(scales, angular_tol: float, profile: TwistProfile | None = None) -> CoverageReport:
    """Which target angles are (nearly) attained by ``theta mod 2*pi`` along ``scales``.

    The accumulation set is estimated from the scales inside the pure law
    (``rho >= rho0``); earlier scales only sit in the blend.
    """
    if not 1e-4 < angular_tol < 0.1:
        raise ValueError("angular_tol must lie in (1e-4, 0.1)")
    profile = profile or TwistProfile.loglog()
    rho = np.array([s.rho if isinstance(s, LogScale) else float(s) for s in scales], dtype=float)
    if rho.size and np.any(np.diff(rho) <= 0):
        raise ValueError("scales must be strictly increasing")
    if np.any(rho > RHO_MAX):
        raise DomainError("scale beyond the angle-reduction budget")
    theta = np.mod(profile.theta(rho), TWO_PI)
    n = int(round(TWO_PI / angular_tol))
    targets = np.arange(n) * (TWO_PI / n)
    covered = _near_any(targets, theta, angular_tol)
    tail = theta[rho >= profile.rho0] if np.any(rho >= profile.rho0) else theta
    hit = _near_any(targets, tail, angular_tol)
    acc = targets[hit]
    if acc.size == 0 and tail.size:
        acc = np.array([float(np.mod(tail[-1], TWO_PI))])
    return CoverageReport(angular_tol, targets, covered, acc, circular_diameter(acc), int(tail.size))


# ---------------------------------------------------------------------------
# Best rotation (phase experiment)


@dataclass
class BestRotation:
    rho: float
    phi_star: float
    d_star: float
    d_star_error: float
    d_matched: float
    d_cloud: float = float("nan")
    cloud_gap: float = float("nan")


def _golden(f, a, b, tol=1e-10, iters=200):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if abs(b - a) < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def best_rotation_distance(profile: TwistProfile, scale, R: float, grid: float = 1e-3,
                           cloud_gap: float | None = None,
                           curve: BaseCurve | None = None) -> BestRotation:
    """Rotation ``phi`` minimising ``HD(Sigma_rho ∩ B_R, R_phi Sigma_s ∩ B_R)``.

    ``phi`` is scanned on a grid over one third of a turn (the cone's symmetry
    period) using the matched-shell bound, refined by golden-section search,
    and the shell distance is evaluated at the minimiser.  With ``cloud_gap``
    the brute-force cloud distance at that gap is reported as well.
    """
    scale = _as_scale(scale)
    _check_pure(profile, scale, R)
    radii = _shell_grid(R, decades=10.0, per_decade=40)
    phis = np.arange(0.0, THIRD_TURN, grid)
    scan = np.concatenate([matched_shell_bound(profile, scale, R, chunk, radii)
                           for chunk in np.array_split(phis, max(len(phis) // 256, 1))])
    j = int(np.argmin(scan))
    phi = _golden(lambda p: float(matched_shell_bound(profile, scale, R, p, radii)[0]),
                  phis[j] - grid, phis[j] + grid)
    phi = float(np.mod(phi, THIRD_TURN))
    d_matched = float(matched_shell_bound(profile, scale, R, phi)[0])
    exact = shell_hausdorff(profile, scale, R, phi=phi, curve=curve)
    res = BestRotation(scale.rho, phi, exact.value, exact.uncertainty, d_matched)
    if cloud_gap is not None:
        a = sample_twisted(profile, scale, R, cloud_gap)
        b = sample_twisted(profile, scale, R, cloud_gap, rotation=phi)
        res.d_cloud = hausdorff_in_ball(a, b, R).value
        res.cloud_gap = max(a.gap, b.gap)
    return res


def self_similarity_distance(scale_a, scale_b, R: float, target_gap: float) -> Measured:
    """For the linear law: distance between ``R_{-theta(rho)} Sigma_rho`` at two scales."""
    profile = TwistProfile.power(1.0)
    clouds = []
    for sc in (scale_a, scale_b):
        sc = _as_scale(sc)
        _check_pure(profile, sc, R)
        c = sample_twisted(profile, sc, R, target_gap)
        c.points = rotate_z(c.points, -theta_jet(profile, sc).theta_mod)
        clouds.append(c)
    return hausdorff_in_ball(clouds[0], clouds[1], R)


__all__ = [
    "BestRotation", "BlowupSequence", "BlowupStep", "CoverageReport", "LemmaCheck",
    "accumulation_coverage", "best_rotation_distance", "blowup_convergence",
    "blowup_log_scales", "circular_diameter", "hd_lemma_check", "matched_shell_bound",
    "relative_twist", "self_similarity_distance", "shell_hausdorff",
]
