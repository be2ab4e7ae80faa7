"""Experiment registry: parameters, runners and their artifacts.

A runner receives a :class:`RunContext` owning the output directory plus the
resolved parameters, writes its files through the context and returns a
summary dict that goes into the manifest.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..fields import (
    GRAPH_AMPLITUDE,
    LogScale,
    OscillatingGraph,
    TwistedSzulkin,
    TwistProfile,
    graph_jet,
    half_space,
)
from . import svg
from .manifest import MANIFEST_NAME, RunManifest, sha256_file
from .params import Param, ParameterError

TWO_PI = 2.0 * math.pi


class MissingArtifact(FileNotFoundError):
    """A report input is absent or does not match its manifest."""


class RunContext:
    def __init__(self, directory: Path, manifest: RunManifest):
        self.directory = Path(directory)
        self.manifest = manifest

    @property
    def seed(self) -> int:
        return self.manifest.seed

    @property
    def tag(self) -> str:
        return f"manifest {self.manifest.id} seed {self.seed}"

    def path(self, name: str) -> Path:
        return self.directory / name

    def csv(self, name: str, header, rows) -> Path:
        """RFC-4180 CSV; every row carries the manifest id and the seed."""
        path = self.path(name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(list(header) + ["seed", "manifest"])
            for row in rows:
                wr.writerow([_cell(v) for v in row] + [self.seed, self.manifest.id])
        return path

    def ply(self, name: str, cloud) -> Path:
        from ..surfgeo import write_ply

        path = self.path(name)
        write_ply(path, cloud, comment=f"fblab {self.tag}")
        return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return v


@dataclass(frozen=True)
class Experiment:
    name: str
    help: str
    params: tuple
    run: Callable
    seeded: bool = False


REGISTRY: dict[str, Experiment] = {}


def experiment(name, help, *params, seeded=False):
    def wrap(fn):
        REGISTRY[name] = Experiment(name, help, tuple(params), fn, seeded)
        return fn
    return wrap


# --- shared parameters and builders ------------------------------------------

DOMAIN = Param("domain", "str", "twist", "interface family", choices=("twist", "graph", "plane"))
PROFILE = Param("profile", "str", "loglog", "rotation law: loglog, none or power:<p>")
OSC = Param("oscillation", "bool", True, "oscillating slope for the graph domain")
SIDE = Param("side", "int", 1, "+1 or -1", choices=(1, -1))
RHO = Param("rho", "optfloat", None, "log-scale rho = -log r; none for the physical interface", lo=1e-9,
            optional=True)


def parse_profile(text: str) -> TwistProfile:
    try:
        return TwistProfile.parse(text)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"profile: {exc}") from exc


def build_kind(domain: str, profile: str, oscillation: bool = True, side: int = 1):
    if domain == "twist":
        return TwistedSzulkin(parse_profile(profile), side)
    if domain == "graph":
        return OscillatingGraph(bool(oscillation), side)
    return half_space(side)


def _scale(rho):
    return None if rho is None else LogScale(float(rho))


def _describe(ctx: RunContext, kind) -> None:
    if isinstance(kind, TwistedSzulkin):
        ctx.manifest.profile = kind.profile.describe()
        ctx.manifest.interpolation = {"twist": kind.profile.describe()["interpolation"]}
    elif kind.oscillating:
        ctx.manifest.interpolation = {"amplitude": GRAPH_AMPLITUDE.describe()}


def _decreasing(vals) -> bool:
    return all(a > b for a, b in zip(vals, vals[1:]))


# --- fields and curves -------------------------------------------------------


@experiment("check-fields", "field identities, map identities and the dilatation table",
            Param("points", "int", 10_000, "random sample size", lo=100, hi=10_000_000), seeded=True)
def run_check_fields(ctx, points):
    from .suites import CHECK_HEADER, dilatation_table, fields_suite

    checks = fields_suite(seed=ctx.seed, points=points)
    ctx.csv("fields.csv", CHECK_HEADER, [c.row() for c in checks])
    table = dilatation_table(seed=ctx.seed)
    ctx.csv("dilatation.csv", ["rho", "dilatation_excess", "rho_times_excess"], table)
    return {"checks": len(checks), "hard_failures": [c.name for c in checks if c.hard and not c.ok]}


@experiment("trace-curve", "trace the base curve of the Szulkin cone on the unit sphere",
            Param("gap", "float", 2e-3, "maximal chord between samples", lo=1e-5, hi=0.05))
def run_trace_curve(ctx, gap):
    from ..surfgeo import PointCloud, rotation_hausdorff, trace_base_curve
    from .suites import rotation_symmetry_residual

    curve = trace_base_curve(gap)
    pts = curve.points
    ctx.csv("curve.csv", ["x", "y", "z"], pts.tolist())
    ctx.ply("curve.ply", PointCloud(pts, curve.gap, 1.0, "base curve"))
    svg.projection(pts, ctx.path("figure1.svg"), "Szulkin base curve, view from the z-axis", desc=ctx.tag)
    return {"points": len(pts), "gap": curve.gap, "length": curve.length,
            "rotation_hausdorff": float(rotation_hausdorff(curve, np.array(TWO_PI / 3))),
            "cubic_rotation_residual": rotation_symmetry_residual(pts)}


@experiment("sample", "sample an interface in a ball and export the cloud",
            DOMAIN, Param("profile", "str", "none", PROFILE.help),
            Param("oscillation", "bool", False, OSC.help), SIDE, RHO,
            Param("R", "float", 1.5, "ball radius", lo=1e-6, hi=1e3),
            Param("gap", "float", 0.01, "target sampling gap", lo=1e-4, hi=1.0),
            Param("t_min", "optfloat", None, "inner radius (default from the gap)", lo=1e-12, optional=True))
def run_sample(ctx, domain, profile, oscillation, side, rho, R, gap, t_min):
    from ..surfgeo import sample_interface

    kind = build_kind(domain, profile, oscillation, side)
    _describe(ctx, kind)
    cloud = sample_interface(kind, _scale(rho), R, t_min, gap)
    ctx.ply("cloud.ply", cloud)
    svg.projection(cloud.points, ctx.path("projection.svg"), f"{domain} interface, R = {R:g}", desc=ctx.tag)
    z = cloud.points[:, 2]
    return {"points": len(cloud), "gap": cloud.gap, "z_range": [float(z.min()), float(z.max())]}


# --- blow-ups and distances --------------------------------------------------


@experiment("blowup", "distance of blow-ups at theta0-matched scales to the rotated cone",
            Param("theta0", "float", 0.0, "target rotation angle", lo=0.0, hi=TWO_PI),
            Param("kmin", "int", 1, "first index", lo=0, hi=11),
            Param("kmax", "int", 3, "last index", lo=0, hi=11), PROFILE,
            Param("R", "float", 2.0, "ball radius", lo=1e-3, hi=1e3),
            Param("matched_from", "int", 3, "use the matched-shell bound from this k on", lo=0),
            Param("cloud_gap", "float", 0.02, "gap of the exported PLY clouds", lo=1e-3, hi=0.5))
def run_blowup(ctx, theta0, kmin, kmax, profile, R, matched_from, cloud_gap):
    from ..surfgeo import blowup_convergence, sample_twisted

    if kmax < kmin:
        raise ParameterError("kmax must be >= kmin")
    prof = parse_profile(profile)
    ctx.manifest.profile = prof.describe()
    steps = blowup_convergence(theta0, range(kmin, kmax + 1), R, profile=prof, matched_from=matched_from)
    ctx.csv("blowup.csv", ["k", "rho", "D", "d_shell", "d_shell_error", "d_matched", "method"],
            [[s.k, s.rho, s.value, s.d_shell, s.d_shell_error, s.d_matched, s.method] for s in steps])
    for s in steps:
        cl = sample_twisted(prof, LogScale(s.rho), R, cloud_gap)
        ctx.ply(f"cloud_k{s.k}.ply", cl)
        svg.projection(cl.points, ctx.path(f"cloud_k{s.k}.svg"), f"blow-up k = {s.k}", desc=ctx.tag)
    vals = [s.value for s in steps]
    return {"D": vals, "rho": [s.rho for s in steps], "decreasing": _decreasing(vals),
            "ratios": [b / a for a, b in zip(vals, vals[1:]) if a > 0]}


@experiment("hd-bound", "distance between a twisted cloud and its rotated cone against the chord bound",
            PROFILE,
            Param("rho", "floats", (math.exp(TWO_PI), math.exp(2 * TWO_PI), math.exp(3 * TWO_PI)), "log-scales",
                  lo=1e-9),
            Param("R", "floats", (2.0, 10.0), "ball radii", lo=1e-3, hi=1e3),
            Param("eps", "optfloat", None, "small radius (default rho^-1/2)", lo=1e-300, hi=1.0, optional=True),
            Param("method", "str", "shell", "shell formula or brute-force cloud", choices=("shell", "cloud")),
            Param("gap", "float", 1e-3, "cloud gap for the cloud method", lo=1e-4, hi=0.5))
def run_hd_bound(ctx, profile, rho, R, eps, method, gap):
    from ..surfgeo import hd_lemma_check

    prof = parse_profile(profile)
    ctx.manifest.profile = prof.describe()
    rows = []
    for r in rho:
        for radius in R:
            c = hd_lemma_check(prof, LogScale(r), radius, eps=eps, method=method, target_gap=gap)
            rows.append([c.rho, c.R, c.eps, c.lhs, c.lhs_error, c.rhs_sup, c.ratio, c.chord_sup, c.chord_ratio,
                         c.method, c.cloud_gap])
    ctx.csv("hd_bound.csv", ["rho", "R", "eps", "lhs", "lhs_error", "rhs_sup", "ratio", "chord_sup",
                             "chord_ratio", "method", "cloud_gap"], rows)
    ratios = [row[6] for row in rows]
    chords = [row[8] for row in rows]
    return {"C": max(ratios), "ratio_spread": max(ratios) / min(ratios) if min(ratios) > 0 else math.inf,
            "chord_ratio_spread": max(chords) / min(chords) if min(chords) > 0 else math.inf}


@experiment("angles", "accumulation of blow-up rotation angles along r_i = base^-i",
            Param("imax", "int", 1_000_000, "number of radii", lo=1, hi=100_000_000),
            Param("base", "float", 2.0, "radius ratio", lo=1.0 + 1e-9),
            Param("tol", "float", 0.01, "angular tolerance and grid step", lo=1e-5, hi=1.0), PROFILE)
def run_angles(ctx, imax, base, tol, profile):
    from ..surfgeo import accumulation_coverage

    prof = parse_profile(profile)
    ctx.manifest.profile = prof.describe()
    rho = np.arange(1, imax + 1) * math.log(base)
    rep = accumulation_coverage(rho, tol, profile=prof)
    ctx.csv("targets.csv", ["target", "covered"], zip(rep.targets.tolist(), rep.covered.tolist()))
    ctx.csv("accumulation.csv", ["angle"], ([a] for a in rep.accumulation.tolist()))
    return {"coverage": rep.coverage, "non_unique": rep.non_unique, "diameter": rep.diameter,
            "tail": rep.n_tail}


@experiment("phase", "best-rotation distance to the cone for the power law theta = rho^p",
            Param("p", "float", 1.0, "exponent", lo=1e-3, hi=3.0),
            Param("rho_decades", "ints", (1, 2, 3, 4), "decades d, rho = 10^d", lo=0, hi=30),
            Param("R", "float", 2.0, "ball radius", lo=1e-3, hi=1e3),
            Param("grid", "float", 1e-3, "angle grid before refinement", lo=1e-6, hi=0.1),
            Param("selfsim_gap", "float", 0.02, "cloud gap of the p = 1 self-similarity check", lo=1e-3, hi=0.5),
            Param("figure_gap", "float", 0.02, "cloud gap of the exported figure", lo=1e-3, hi=0.5))
def run_phase(ctx, p, rho_decades, R, grid, selfsim_gap, figure_gap):
    from ..surfgeo import best_rotation_distance, sample_twisted, self_similarity_distance

    prof = TwistProfile.power(p)
    ctx.manifest.profile = prof.describe()
    rows = []
    for d in rho_decades:
        b = best_rotation_distance(prof, LogScale(10.0**d), R, grid=grid)
        rows.append([b.rho, b.phi_star, b.d_star, b.d_star_error, b.d_matched])
    ctx.csv("phase.csv", ["rho", "phi_star", "d_star", "d_star_error", "d_matched"], rows)
    ds = [r[2] for r in rows]
    out = {"d_star": ds, "decreasing": _decreasing(ds), "spread": max(ds) / min(ds) if min(ds) > 0 else math.inf}
    if p == 1.0 and len(rho_decades) > 1:
        a, b = LogScale(10.0 ** rho_decades[0]), LogScale(10.0 ** rho_decades[-1])
        m = self_similarity_distance(a, b, R, selfsim_gap)
        ctx.csv("selfsim.csv", ["rho_a", "rho_b", "distance", "uncertainty", "gap"],
                [[a.rho, b.rho, m.value, m.uncertainty, selfsim_gap]])
        out["self_similarity"] = m.value
    cl = sample_twisted(prof, LogScale(10.0 ** rho_decades[0]), R, figure_gap)
    ctx.ply("figure2.ply", cl)
    svg.projection(cl.points, ctx.path("figure2.svg"), f"twisted cone, theta = rho^{p:g}", desc=ctx.tag)
    return out


# --- probes ------------------------------------------------------------------


@experiment("corkscrew", "interior corkscrew constant near an interface point",
            DOMAIN, Param("profile", "str", "power:2", PROFILE.help), OSC,
            Param("rho", "floats", (10.0, 1e2, 1e3, 1e4), "log-scales", lo=1e-9),
            Param("s", "float", 0.25, "ball radius of the probe", lo=1e-6, hi=1.0))
def run_corkscrew(ctx, domain, profile, oscillation, rho, s):
    from ..surfgeo import corkscrew_probe, interface_point

    kind = build_kind(domain, profile, oscillation)
    _describe(ctx, kind)
    rows = []
    for r in rho:
        sc = LogScale(r)
        q = interface_point(kind, sc)
        res = corkscrew_probe(kind, sc, q, s)
        rows.append([r, res.M, res.clearance, *q.tolist()])
    ctx.csv("corkscrew.csv", ["rho", "M", "clearance", "qx", "qy", "qz"], rows)
    ms = [row[1] for row in rows]
    return {"M": ms, "growth": ms[-1] / ms[0] if ms[0] > 0 else math.inf}


@experiment("area", "surface area of the interface in B_r over r^2",
            DOMAIN, PROFILE, OSC, RHO,
            Param("radii", "floats", (1e-3, 1e-4, 1e-5, 1e-6), "ball radii", lo=1e-300, hi=10.0))
def run_area(ctx, domain, profile, oscillation, rho, radii):
    from ..surfgeo import area_ratio_probe

    kind = build_kind(domain, profile, oscillation)
    _describe(ctx, kind)
    rows = area_ratio_probe(kind, _scale(rho), None, list(radii))
    ctx.csv("area.csv", ["r", "area_over_r2"], rows)
    vals = [v for _, v in rows]
    return {"ratios": vals, "C": max(max(vals), 1 / min(vals)), "spread": max(vals) / min(vals)}


FIGURE3_RADII = (1.0, 1e-6, 1e-12)


def graph_panels(R: float, radii=FIGURE3_RADII, n: int = 400):
    """Cross-sections ``y = 0`` of the blown-up graph ``v(r x) / r``, and the value at ``(1, 0)``."""
    x = np.linspace(-R, R, 2 * n)  # even count keeps the cone point off the grid
    q = np.stack([x, np.zeros_like(x)], axis=1)
    out = []
    for r in radii:
        sc = None if r == 1.0 else LogScale(-math.log(r))
        z, _ = graph_jet(q, sc, True)
        v1, g1 = graph_jet(np.array([1.0, 0.0]), sc, True)
        out.append((r, x, np.asarray(z), float(v1), float(np.asarray(g1)[0])))
    return out


@experiment("slopes", "slope-target scales of the oscillating graph and its blow-up panels",
            Param("m", "float", 1.0, "target slope", lo=-1e6, hi=1e6),
            Param("kmin", "int", 0, "first index", lo=0),
            Param("kmax", "int", 7, "last index", lo=0, hi=40),
            Param("R", "float", 1.5, "half-width of the panels", lo=1e-3, hi=10.0))
def run_slopes(ctx, m, kmin, kmax, R):
    from ..surfgeo import graph_slope_targets

    ctx.manifest.interpolation = {"amplitude": GRAPH_AMPLITUDE.describe()}
    tg = graph_slope_targets(m, range(kmin, kmax + 1))
    rows = []
    for k, sc, a in zip(tg.ks, tg, tg.amplitudes):
        v, _ = graph_jet(np.array([1.0, 0.0]), sc)
        rows.append([k, sc.rho, a, float(v)])
    ctx.csv("slope_targets.csv", ["k", "rho", "amplitude", "slope_at_1_0"], rows)
    panels = graph_panels(R)
    ctx.csv("figure3.csv", ["r", "x", "z"],
            ([r, xi, zi] for r, x, z, _, _ in panels for xi, zi in zip(x.tolist(), z.tolist())))
    ctx.csv("figure3_slopes.csv", ["r", "value_at_1_0", "dx_at_1_0"], ([r, v, g] for r, _, _, v, g in panels))
    svg.line_panels([(f"r = {r:g}", x, z) for r, x, z, _, _ in panels], ctx.path("figure3.svg"),
                    "graph blow-ups v(r x)/r along y = 0", "x", "z", desc=ctx.tag)
    return {"ks": list(tg.ks), "skipped": list(tg.skipped), "panel_values": [p[3] for p in panels]}


# --- potential theory ----------------------------------------------------------


@experiment("solve", "Dirichlet solve of the conjugated problem on the template domain",
            DOMAIN, PROFILE, OSC, SIDE, RHO,
            Param("K", "float", 2.0, "half-width of the box", lo=0.1, hi=8.0),
            Param("h", "float", 1 / 48, "grid step", lo=1e-3, hi=0.5),
            Param("inner", "float", 0.0, "radius of the excluded inner ball (0 for none)", lo=0.0),
            Param("tolerance", "float", 1e-8, "relative residual", lo=1e-15, hi=1e-2),
            Param("pair", "bool", False, "also solve the other side and export gradient ratios"))
def run_solve(ctx, domain, profile, oscillation, side, rho, K, h, inner, tolerance, pair):
    from ..potential import (
        UNKNOWN,
        SolveSpec,
        interface_gradient_ratio,
        interface_samples,
        solve_conjugated,
        write_grid,
    )

    kind = build_kind(domain, profile, oscillation, side)
    _describe(ctx, kind)
    spec = SolveSpec(kind, _scale(rho), K=K, h=h, inner=inner, tolerance=tolerance)
    sol = solve_conjugated(spec)
    write_grid(ctx.path("solution.grid"), sol, ctx.manifest.id, ctx.seed)
    hist = sol.history[: sol.iterations]
    ctx.csv("history.csv", ["iteration", "relative_residual"], ([i + 1, float(v)] for i, v in enumerate(hist)))
    out = {"unknowns": int(np.count_nonzero(sol.status == UNKNOWN)), "iterations": sol.iterations,
           "residual": sol.residual, "min_value": sol.min_value, "max_principle": sol.max_principle_ok}
    if pair:
        other = solve_conjugated(SolveSpec(kind.with_side(-side), _scale(rho), K=K, h=h, inner=inner,
                                           tolerance=tolerance))
        plus, minus = (sol, other) if side == 1 else (other, sol)
        radii = (0.5, 0.75, 1.0, 1.5) if K >= 2 else (0.25, 0.5)
        pts = interface_samples(kind, radii=radii, per_shell=40)
        r = interface_gradient_ratio(plus, minus, pts)
        ctx.csv("gradient_ratios.csv", ["x", "y", "z", "ratio", "template_ratio"],
                ([*p, a, b] for p, a, b in zip(r.points.tolist(), r.ratios.tolist(), r.template_ratios.tolist())))
        out["max_abs_log_ratio"] = r.max_abs_log
    return out


WOS_PARAMS = (
    Param("walks", "int", 100_000, "root walks per side", lo=1, hi=10**9),
    Param("eps", "float", 1e-4, "absorption shell", lo=1e-12, hi=0.5),
    Param("batches", "int", 20, "independent batches", lo=2, hi=10_000),
    Param("split_levels", "ints", (), "dyadic levels where walks split", lo=-4, hi=24, optional=True),
    Param("split_factor", "int", 1, "copies per split", lo=1, hi=64),
    Param("sectors", "int", 12, "angular sectors per annulus", lo=2, hi=720),
    Param("level_max", "int", 24, "deepest dyadic level", lo=0, hi=40),
)


def _partition(sectors, level_max):
    from ..potential import PatchPartition

    try:
        return PatchPartition(level_max=level_max, sectors=sectors)
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc


def _paths(hist) -> int:
    return int(hist.counts.sum() + hist.escaped.sum())


@experiment("wos", "harmonic measure histogram by walk-on-spheres", DOMAIN, PROFILE, OSC, SIDE, *WOS_PARAMS,
            seeded=True)
def run_wos(ctx, domain, profile, oscillation, side, walks, eps, batches, split_levels, split_factor, sectors,
            level_max):
    from ..potential import wos_sample

    kind = build_kind(domain, profile, oscillation, side)
    _describe(ctx, kind)
    hist = wos_sample(kind, walks=walks, master_seed=ctx.seed, eps=eps, partition=_partition(sectors, level_max),
                      batches=batches, split_levels=split_levels, split_factor=split_factor)
    hist.to_csv(ctx.path("histogram.csv"), ctx.manifest.id)
    balls = [(j, *hist.measure(hist.ball_mask(j))) for j in range(0, level_max + 1)]
    ctx.csv("balls.csv", ["level", "r", "measure", "std_error"], ([j, 2.0**-j, p, se] for j, p, se in balls))
    return {"walks": walks, "paths": _paths(hist), "steps": hist.steps, "escape_fraction": hist.escape_fraction,
            "escape_warning": hist.escape_warning, "unit_disc_measure": balls[0][1], "unit_disc_se": balls[0][2]}


@experiment("logh", "two-sided harmonic measure comparison on dyadic sectors",
            DOMAIN, PROFILE, OSC, *WOS_PARAMS[:1],
            Param("eps", "float", 1e-5, "absorption shell", lo=1e-12, hi=0.5), *WOS_PARAMS[2:],
            Param("levels", "ints", tuple(range(4, 11)), "dyadic levels j of the profile", lo=-4, hi=40),
            seeded=True)
def run_logh(ctx, domain, profile, oscillation, walks, eps, batches, split_levels, split_factor, sectors,
             level_max, levels):
    from ..potential import log_h_profile, symmetric_patch_z, wos_sample

    kind = build_kind(domain, profile, oscillation, 1)
    _describe(ctx, kind)
    part = _partition(sectors, level_max)
    kw = dict(walks=walks, master_seed=ctx.seed, eps=eps, partition=part, batches=batches,
              split_levels=split_levels, split_factor=split_factor)
    plus = wos_sample(kind, **kw)
    minus = wos_sample(kind.with_side(-1), **kw)
    plus.to_csv(ctx.path("hist_plus.csv"), ctx.manifest.id)
    minus.to_csv(ctx.path("hist_minus.csv"), ctx.manifest.id)
    est = log_h_profile(plus, minus, levels)
    est.to_csv(ctx.path("logh.csv"), ctx.manifest.id, ctx.seed)
    z = symmetric_patch_z(plus, minus)
    ctx.csv("symmetric_z.csv", ["z"], ([float(v)] for v in z))
    stat = est.statistic
    ok = ~np.isnan(stat)
    if ok.any():
        svg.line_panels([("sector statistic", est.levels[ok], stat[ok]),
                         ("plus one standard error", est.levels[ok], (stat + est.band)[ok]),
                         ("whole ball", est.levels[ok], est.ball[ok])],
                        ctx.path("logh.svg"), "log h profile", "dyadic level j (r = 2^-j)", "|log ratio|",
                        desc=ctx.tag)
    return {"levels": est.levels.tolist(), "statistic": stat.tolist(), "band": est.band.tolist(),
            "inconclusive": est.inconclusive.tolist(),
            "decreasing": bool(ok.all() and _decreasing(stat.tolist())),
            "symmetric_within_3sigma": float(np.mean(np.abs(z) <= 3)) if len(z) else math.nan,
            "paths": _paths(plus) + _paths(minus),
            "escape_fraction": max(plus.escape_fraction, minus.escape_fraction)}


# --- report and verify -------------------------------------------------------


def _manifests(source: Path):
    return sorted(p for p in source.rglob(MANIFEST_NAME) if p.is_file())


def export_figures(source, target: Path, tag: str = "") -> list[tuple]:
    """Figures from stored artifacts: z-axis projections of every PLY cloud,
    graph blow-up panels from ``figure3.csv`` and log h profiles."""
    from ..surfgeo import read_ply

    source, target = Path(source), Path(target)
    # earlier reports are indexes, not runs
    found = [m for m in _manifests(source) if m.parent.resolve() != target.resolve()
             and RunManifest.read(m).experiment != "report"]
    if not found:
        raise MissingArtifact(f"no run manifests under {source}")
    index = []
    for mpath in found:
        man = RunManifest.read(mpath)
        run_dir = mpath.parent
        prefix = f"{man.experiment}-{man.short_id}"
        for out in man.outputs:
            path = run_dir / out["path"]
            if not path.is_file():
                raise MissingArtifact(f"{path} listed in {mpath} is missing")
            status = "ok" if sha256_file(path) == out["sha256"] else "modified"
            index.append((man.experiment, man.id, out["path"], out["sha256"], status))
            if path.suffix == ".ply":
                pts = read_ply(path)
                svg.projection(pts, target / f"{prefix}-{path.stem}.svg", f"{man.experiment}: {path.stem}",
                               desc=tag)
            elif path.name == "figure3.csv":
                _figure3_from_csv(path, target / f"{prefix}-figure3.svg", tag)
            elif path.name == "logh.csv":
                _logh_from_csv(path, target / f"{prefix}-logh.svg", tag)
    return index


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _figure3_from_csv(path, out, tag):
    rows = _read_rows(path)
    panels = {}
    for row in rows:
        panels.setdefault(float(row["r"]), ([], []))
        panels[float(row["r"])][0].append(float(row["x"]))
        panels[float(row["r"])][1].append(float(row["z"]))
    svg.line_panels([(f"r = {r:g}", np.array(x), np.array(z)) for r, (x, z) in panels.items()], out,
                    "graph blow-ups v(r x)/r along y = 0", "x", "z", desc=tag)


def _logh_from_csv(path, out, tag):
    rows = [r for r in _read_rows(path) if r["inconclusive"] == "False"]
    if not rows:
        return
    lv = np.array([float(r["level"]) for r in rows])
    st = np.array([float(r["sector_statistic"]) for r in rows])
    svg.line_panels([("sector statistic", lv, st)], out, "log h profile", "dyadic level j", "|log ratio|",
                    desc=tag)


@experiment("report", "regenerate figures and an artifact index from earlier runs",
            Param("source", "str", "", "directory holding run outputs (searched recursively)"))
def run_report(ctx, source):
    if not source:
        raise ParameterError("report needs --source")
    src = Path(source).resolve()
    if not src.is_dir():
        raise MissingArtifact(f"{src} is not a directory")
    index = export_figures(src, ctx.directory, ctx.tag)
    ctx.csv("index.csv", ["experiment", "run", "output", "sha256", "status"], index)
    return {"runs": len({row[1] for row in index}), "files": len(index),
            "modified": [row[2] for row in index if row[4] != "ok"]}


@experiment("verify", "invariant suites with measured constants",
            Param("suite", "str", "all", "suite to run", choices=("fields", "geometry", "potential", "all")),
            seeded=True)
def run_verify(ctx, suite):
    from .suites import CHECK_HEADER, run_suites

    checks = run_suites(suite, seed=ctx.seed)
    ctx.csv("verify.csv", CHECK_HEADER, [c.row() for c in checks])
    lines = [f"{'PASS' if c.ok else 'FAIL'} {c.suite}/{c.name}: {c.value:.6g} (limit {c.limit:.6g})"
             for c in checks]
    bad = [c for c in checks if c.hard and not c.ok]
    lines.append(f"{len(checks) - len(bad)}/{len(checks)} hard checks passed")
    ctx.path("summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"checks": len(checks), "hard_failures": [f"{c.suite}/{c.name}" for c in bad], "lines": lines}
