"""Invariant suites behind ``fblab verify``.

Each check records a measured value against a limit.  Hard checks decide the
exit status; soft checks are trends reported for information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..fields import (
    SZULKIN_GRAD_ENVELOPE,
    LogScale,
    OscillatingGraph,
    TwistedSzulkin,
    TwistProfile,
    graph_jet,
    half_space,
    szulkin,
    szulkin_grad,
    twist_frame,
    twist_map,
)


@dataclass
class Check:
    suite: str
    name: str
    value: float
    limit: float
    ok: bool
    hard: bool = True
    note: str = ""

    def row(self):
        return [self.suite, self.name, repr(float(self.value)), repr(float(self.limit)),
                "pass" if self.ok else "FAIL", "hard" if self.hard else "soft", self.note]


CHECK_HEADER = ["suite", "check", "value", "limit", "status", "severity", "note"]


def _ball(rng, n, radius):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * radius * rng.uniform(0, 1, size=(n, 1)) ** (1 / 3)


def _sphere(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _fd_jacobian(fn, q, h=1e-4):
    """Fourth-order central differences, column ``j`` = derivative along ``e_j``."""
    cols = []
    for e in np.eye(3):
        d1 = fn(q + h * e) - fn(q - h * e)
        d2 = fn(q + 2 * h * e) - fn(q - 2 * h * e)
        cols.append((8 * d1 - d2) / (12 * h))
    return np.stack(cols, axis=-1)


def laplacian_residual(p, h=1e-4) -> float:
    """Max ``|Lap s|`` by second differences in extended precision."""
    p = np.asarray(p, dtype=np.longdouble)
    h = np.longdouble(h)
    lap = -6 * szulkin(p)
    for e in np.eye(3):
        lap = lap + szulkin(p + h * e) + szulkin(p - h * e)
    return float(np.max(np.abs(lap / h**2)))


def rotation_symmetry_residual(p) -> float:
    """Max ``|s(R p) - s(p)|`` for the rotation by 2 pi / 3 about the z-axis."""
    c, s = math.cos(2 * math.pi / 3), math.sin(2 * math.pi / 3)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return float(np.max(np.abs(szulkin(p @ rot.T) - szulkin(p))))


def dilatation_table(profile=None, rhos=(10.0, 1e2, 1e3, 1e4), n=2000, seed=0):
    """Rows ``(rho, max lambda3/lambda1 - 1, rho * that)`` on unit-sphere samples."""
    profile = profile or TwistProfile.loglog()
    p = _sphere(np.random.default_rng(seed), n)
    rows = []
    for r in rhos:
        d = float(np.max(twist_frame(profile, p, LogScale(r)).dilatation)) - 1.0
        rows.append((r, d, d * r))
    return rows


def error_bound_sup(profile=None, n_rho=200, n=200, seed=0) -> float:
    """Max over a log-grid of ``rho`` in ``[10, e^60]`` of ``max|E| rho / 2``."""
    profile = profile or TwistProfile.loglog()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for rho in np.exp(np.linspace(math.log(10.0), 60.0, n_rho)):
        fr = twist_frame(profile, _sphere(rng, n), LogScale(rho))
        worst = max(worst, float(np.max(np.abs(fr.error))) * rho / 2)
    return worst


def fields_suite(seed: int = 0, points: int = 10_000) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    add = out.append
    S = "fields"
    lap = laplacian_residual(_ball(rng, points, 2.0))
    add(Check(S, "laplacian_residual", lap, 1e-6, lap <= 1e-6))
    pole = szulkin(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]))
    dev = float(np.max(np.abs(pole - [1.0, -1.0])))
    add(Check(S, "pole_values_exact", dev, 0.0, dev == 0.0))
    g = np.linalg.norm(szulkin_grad(_sphere(rng, points)), axis=1)
    add(Check(S, "grad_min_on_sphere", g.min(), 0.0, g.min() > 0.0, note="positive minimum"))
    add(Check(S, "grad_envelope", g.max(), SZULKIN_GRAD_ENVELOPE, g.max() <= SZULKIN_GRAD_ENVELOPE))
    sym = rotation_symmetry_residual(_ball(rng, points, 2.0))
    add(Check(S, "three_fold_symmetry", sym, 1e-12, sym <= 1e-12))
    scale = LogScale(20.0)
    p = _ball(rng, points, 2.0)
    for prof in (TwistProfile.loglog(), TwistProfile.power(2.0)):
        fw = twist_map(prof, "forward", p, scale)
        inv = float(np.max(np.abs(twist_map(prof, "backward", fw, scale) - p)))
        nrm = float(np.max(np.abs(np.linalg.norm(fw, axis=1) - np.linalg.norm(p, axis=1))))
        tag = prof.label()
        add(Check(S, f"map_inverse[{tag}]", inv, 1e-12, inv <= 1e-12))
        add(Check(S, f"map_norm[{tag}]", nrm, 1e-12, nrm <= 1e-12))
        q = p[:300]
        q = q[np.linalg.norm(q, axis=1) > 0.05]
        fr = twist_frame(prof, q, scale)
        det_f = float(np.max(np.abs(np.linalg.det(fr.jacobian) - 1)))
        # the backward Jacobian is the inverse forward frame at the preimage
        pre = twist_map(prof, "backward", q, scale)
        jb = np.linalg.inv(twist_frame(prof, pre, scale).jacobian)
        det_b = float(np.max(np.abs(np.linalg.det(jb) - 1)))
        fd = _fd_jacobian(lambda x: twist_map(prof, "forward", x, scale), q)
        jac = float(np.max(np.abs(fd - fr.jacobian)) / np.max(np.abs(fr.jacobian)))
        fdb = _fd_jacobian(lambda x: twist_map(prof, "backward", x, scale), q)
        jac_b = float(np.max(np.abs(fdb - jb)) / np.max(np.abs(jb)))
        add(Check(S, f"det_forward[{tag}]", det_f, 1e-9, det_f <= 1e-9))
        add(Check(S, f"det_backward[{tag}]", det_b, 1e-9, det_b <= 1e-9))
        add(Check(S, f"jacobian_vs_fd[{tag}]", jac, 1e-6, jac <= 1e-6))
        add(Check(S, f"backward_jacobian_vs_fd[{tag}]", jac_b, 1e-6, jac_b <= 1e-6))
    eb = error_bound_sup(seed=seed)
    add(Check(S, "error_bound_rho_half", eb, 1 + 1e-9, eb <= 1 + 1e-9))
    table = dilatation_table(seed=seed)
    decreasing = all(a[1] > b[1] for a, b in zip(table, table[1:]))
    c = [row[2] for row in table]
    spread = max(c) / min(c)
    add(Check(S, "dilatation_decreasing", float(decreasing), 1.0, decreasing))
    add(Check(S, "dilatation_c_spread", spread, 1.5, spread <= 1.5, note=f"c in [{min(c):.4g}, {max(c):.4g}]"))
    q2 = rng.uniform(-2, 2, size=(1000, 2))
    q2 = q2[np.linalg.norm(q2, axis=1) > 1e-3]
    v, _ = graph_jet(q2, LogScale(40.0))
    odd = float(np.max(np.abs(graph_jet(-q2, LogScale(40.0))[0] + v)))
    add(Check(S, "graph_odd", odd, 1e-12, odd <= 1e-12))
    return out


def geometry_suite(seed: int = 0) -> list[Check]:
    from ..surfgeo import (
        area_ratio_probe,
        blowup_convergence,
        corkscrew_probe,
        default_curve,
        excess,
        hd_lemma_check,
        rotation_hausdorff,
        sample_twisted,
    )

    S = "geometry"
    none = TwistProfile.none()
    out = []
    add = out.append
    curve = default_curve()
    on = float(np.max(np.abs(szulkin(curve.points))))
    add(Check(S, "curve_on_cone", on, 1e-10, on <= 1e-10))
    rot = float(rotation_hausdorff(curve, np.array(2 * math.pi / 3)))
    add(Check(S, "curve_three_fold", rot, 1e-6, rot <= 1e-6))
    lhs = hd_lemma_check(none, LogScale(50.0), 2.0).lhs
    add(Check(S, "untwisted_hd_bound", lhs, 1e-12, lhs <= 1e-12))
    steps = blowup_convergence(0.0, [1, 2], 2.0, profile=none)
    d = max(s.d_shell for s in steps)
    add(Check(S, "untwisted_blowup", d, 0.0, d == 0.0))
    coarse = sample_twisted(none, LogScale(10.0), 2.0, 0.03)
    cone = float(np.max(np.abs(szulkin(coarse.points))))
    add(Check(S, "untwisted_cloud_on_cone", cone, 1e-8, cone <= 1e-8))
    dense = sample_twisted(none, LogScale(10.0), 2.0, 0.01)
    ex = excess(dense.clip(2.0), coarse).value
    add(Check(S, "cloud_gap_certified", ex, coarse.gap, ex <= coarse.gap, note="at gap level"))
    plane = [v for _, v in area_ratio_probe(half_space(), None, None, [0.1, 1.0])]
    dev = max(abs(v / math.pi - 1) for v in plane)
    add(Check(S, "plane_area_ratio", dev, 1e-5, dev <= 1e-5))
    M = corkscrew_probe(half_space(), None, np.zeros(3), 0.25).M
    add(Check(S, "plane_corkscrew", abs(M - 2.0), 1e-6, abs(M - 2.0) <= 1e-6))
    return out


def potential_suite(seed: int = 0, walks: int = 100_000) -> list[Check]:
    from ..potential import (
        SolveSpec,
        halfspace_patch_measure,
        solve_conjugated,
        wos_sample,
    )

    S = "potential"
    out = []
    add = out.append
    sol = solve_conjugated(SolveSpec(half_space(), None, K=1.0, h=1 / 16, tolerance=1e-13))
    p, v = sol.unknown_points()
    slab = float(np.max(np.abs(v - p[:, 2])))
    add(Check(S, "slab_linear_exact", slab, 1e-10, slab <= 1e-10))
    errs = []
    for h in (1 / 8, 1 / 16):
        sol = solve_conjugated(SolveSpec(TwistedSzulkin(TwistProfile.none()), None, K=1.0, h=h, inner=0.5,
                                         tolerance=1e-10))
        p, v = sol.unknown_points()
        errs.append(float(np.max(np.abs(v - szulkin(p)))))
        add(Check(S, f"max_principle[h=1/{round(1 / h)}]", sol.min_value, 0.0, sol.max_principle_ok))
    order = math.log2(errs[0] / errs[1])
    add(Check(S, "annulus_order", order, 1.0, order >= 1.0, note="two grids"))
    hist = wos_sample(half_space(), walks=walks, master_seed=seed)
    pm, se = hist.measure(hist.ball_mask(0))
    exact = 1 - 1 / math.sqrt(2)
    add(Check(S, "halfspace_disc_z", abs(pm - exact) / se, 3.0, abs(pm - exact) <= 3 * se))
    ex = halfspace_patch_measure(hist.partition)
    est, _ = hist.patch_measures()
    keep = ex > 1e-5
    band = 3 * np.sqrt(ex * (1 - ex) / hist.walks)[keep]
    frac = float(np.mean(np.abs(est[keep] - ex[keep]) <= band))
    add(Check(S, "poisson_patches_3se", frac, 0.95, frac >= 0.95))
    add(Check(S, "escape_fraction", hist.escape_fraction, 0.01, hist.escape_fraction <= 0.01))
    return out


SUITES = {"fields": fields_suite, "geometry": geometry_suite, "potential": potential_suite}


def run_suites(name: str, seed: int = 0) -> list[Check]:
    if name == "all":
        return [c for s in SUITES.values() for c in s(seed=seed)]
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}")
    return SUITES[name](seed=seed)
