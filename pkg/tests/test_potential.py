import math
import warnings

import numba
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fblab.fields import (
    DomainError,
    LogScale,
    OscillatingGraph,
    TwistedSzulkin,
    TwistProfile,
    half_space,
    szulkin,
)
from fblab.potential import (
    FIXED,
    OTHER,
    UNKNOWN,
    NotAdjacentError,
    PatchPartition,
    SolverError,
    SolveSpec,
    assemble,
    halfspace_patch_measure,
    interface_gradient_ratio,
    interface_samples,
    log_h_profile,
    read_grid,
    solve_conjugated,
    symmetric_patch_z,
    wos_sample,
    write_grid,
)
from fblab.potential import _kernels as K_
from fblab.potential import wos as W
from fblab.surfgeo import graph_slope_targets

warnings.filterwarnings("ignore", message=".*TBB.*")
NONE = TwistProfile.none()


# ---------------------------------------------------------------------------
# conjugated solves


def test_slab_reproduces_linear_data():
    sol = solve_conjugated(SolveSpec(half_space(), None, K=1.0, h=1 / 16, tolerance=1e-13))
    p, v = sol.unknown_points()
    assert np.max(np.abs(v - p[:, 2])) <= 1e-10
    assert sol.residual <= 1e-13


def test_minus_slab_is_mirror():
    sol = solve_conjugated(SolveSpec(half_space(-1), None, K=1.0, h=1 / 8, tolerance=1e-13))
    p, v = sol.unknown_points()
    assert np.all(p[:, 2] < 0)
    assert np.max(np.abs(v + p[:, 2])) <= 1e-10


@pytest.mark.parametrize(
    "kwargs, err",
    [
        (dict(K=1.0, h=0.3), ValueError),
        (dict(tolerance=0.0), ValueError),
        (dict(data="cubic"), ValueError),
        (dict(inner=2.0), ValueError),
    ],
)
def test_solve_spec_validation(kwargs, err):
    with pytest.raises(err):
        SolveSpec(TwistedSzulkin(NONE), None, **kwargs)


def test_scale_must_be_pure_across_grid():
    with pytest.raises(DomainError):
        SolveSpec(TwistedSzulkin(), LogScale(5.0), K=2.0, h=1 / 8)
    with pytest.raises(DomainError):
        SolveSpec(TwistedSzulkin(), None, K=2.0, h=1 / 8)
    with pytest.raises(ValueError):
        SolveSpec(OscillatingGraph(), LogScale(1e3), K=1.0, h=1 / 8, inner=0.5)
    SolveSpec(TwistedSzulkin(), LogScale(10.0), K=2.0, h=1 / 8)


def test_interface_mask_and_data():
    spec = SolveSpec(TwistedSzulkin(NONE), None, K=1.0, h=1 / 8)
    asm = assemble(spec)
    x = (asm.lo + np.argwhere(asm.status == UNKNOWN)) * spec.h
    assert np.all(szulkin(x) > 0)
    assert np.all(np.sum(x * x, axis=1) < 1.0)
    assert np.all(asm.values[asm.status == OTHER] == 0.0)
    fixed = np.argwhere(asm.status == FIXED)
    np.testing.assert_allclose(asm.values[tuple(fixed.T)], szulkin((asm.lo + fixed) * spec.h), atol=1e-15)
    assert np.all(asm.cuts.theta >= K_.THETA_MIN if hasattr(K_, "THETA_MIN") else asm.cuts.theta > 0)
    assert np.all(asm.cuts.theta <= 1.0)


def test_untwisted_annulus_converges():
    errs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        sol = solve_conjugated(SolveSpec(TwistedSzulkin(NONE), None, K=1.0, h=h, inner=0.5, tolerance=1e-10))
        p, v = sol.unknown_points()
        errs.append(np.max(np.abs(v - szulkin(p))))
        assert sol.max_principle_ok
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.0), (errs, orders)


def test_maximum_principle_twisted():
    sol = solve_conjugated(SolveSpec(TwistedSzulkin(side=-1), LogScale(10.0), K=1.0, h=1 / 16))
    assert sol.min_value >= 0.0
    assert sol.max_principle_ok
    assert sol.residual <= 1e-8


def test_conjugation_deviation_decays_like_inverse_rho():
    K, h = 2.0, 1 / 16
    base = solve_conjugated(SolveSpec(TwistedSzulkin(NONE), None, K=K, h=h, tolerance=1e-11))
    p0, v0 = base.unknown_points()
    sel = np.linalg.norm(p0, axis=1) < 1.5
    devs = []
    for rho in (10.0, 100.0, 1000.0):
        sol = solve_conjugated(SolveSpec(TwistedSzulkin(), LogScale(rho), K=K, h=h, tolerance=1e-11))
        p, v = sol.unknown_points()
        np.testing.assert_array_equal(p, p0)
        devs.append(np.max(np.abs(v - v0)[sel]))
    scaled = np.array(devs) * np.array([10.0, 100.0, 1000.0])
    assert devs[0] > devs[1] > devs[2]
    assert scaled.max() / scaled.min() < 2.0, scaled


def test_iteration_cap_raises():
    with pytest.raises(SolverError, match="no convergence"):
        solve_conjugated(SolveSpec(TwistedSzulkin(NONE), None, K=1.0, h=1 / 16, max_iter=2))


def test_indefinite_operator_detected():
    n = 4
    diag = -np.ones(n)
    nb = -np.ones((n, 6), dtype=np.int64)
    off = np.zeros((n, 6))
    corners = np.zeros((0, 8), dtype=np.int32)
    boff = np.zeros((0, 3))
    status, _, _ = K_.pcg(np.ones(n), np.zeros(n), diag, nb, off, corners, boff, 1e-10, 10, np.zeros(10))
    assert status == K_.INDEFINITE


def test_operator_is_symmetric_positive_definite():
    spec = SolveSpec(OscillatingGraph(), graph_slope_targets(1.0, [2])[0], K=0.5, h=1 / 8)
    asm = assemble(spec)
    n = len(asm.rhs)
    cols = np.empty((n, n))
    e = np.zeros(n)
    for i in range(n):
        e[:] = 0.0
        e[i] = 1.0
        K_.apply_operator(e, cols[:, i], asm.diag, asm.nb, asm.off, asm.corners, asm.boff)
    np.testing.assert_allclose(cols, cols.T, atol=1e-12)
    assert np.linalg.eigvalsh(cols).min() > 0
    assert len(asm.corners) > 0


def test_grid_round_trip(tmp_path):
    sol = solve_conjugated(SolveSpec(TwistedSzulkin(NONE), None, K=1.0, h=1 / 8))
    path = write_grid(tmp_path / "u.grid", sol, manifest_id="abc123", seed=7)
    header, mask, values = read_grid(path)
    np.testing.assert_array_equal(mask, sol.status)
    np.testing.assert_array_equal(np.isnan(values), np.isnan(sol.values))
    ok = ~np.isnan(values)
    np.testing.assert_array_equal(values[ok], sol.values[ok])
    assert header["spacing"] == sol.h
    assert header["manifest"] == "abc123" and header["seed"] == "7"
    np.testing.assert_array_equal(header["origin"], sol.origin)


# ---------------------------------------------------------------------------
# gradient ratios


@pytest.fixture(scope="module")
def untwisted_pair():
    spec = dict(K=2.0, h=1 / 24, tolerance=1e-10)
    plus = solve_conjugated(SolveSpec(TwistedSzulkin(NONE, 1), None, **spec))
    minus = solve_conjugated(SolveSpec(TwistedSzulkin(NONE, -1), None, **spec))
    return plus, minus


def test_untwisted_ratios_near_one(untwisted_pair):
    plus, minus = untwisted_pair
    pts = interface_samples(TwistedSzulkin(), radii=(0.5, 1.0, 1.5), per_shell=30)
    r = interface_gradient_ratio(plus, minus, pts)
    assert r.max_abs_log < 0.15
    assert abs(np.median(r.log_ratios)) < 0.02
    np.testing.assert_allclose(r.ratios, r.template_ratios, rtol=1e-14)


def test_reflection_matches_minus_solve(untwisted_pair):
    plus, minus = untwisted_pair
    pts = interface_samples(TwistedSzulkin(), radii=(0.75, 1.25), per_shell=20)
    a = interface_gradient_ratio(plus, minus, pts)
    b = interface_gradient_ratio(plus, None, pts)
    np.testing.assert_allclose(a.ratios, b.ratios, rtol=1e-6)


def test_ratio_rejects_bad_points_and_pairs(untwisted_pair):
    plus, minus = untwisted_pair
    with pytest.raises(NotAdjacentError):
        interface_gradient_ratio(plus, minus, [[5.0, 5.0, 5.0]])
    with pytest.raises(ValueError):
        interface_gradient_ratio(minus, plus, [[1.0, 0.0, 0.0]])
    other = solve_conjugated(SolveSpec(TwistedSzulkin(NONE, -1), None, K=1.0, h=1 / 8))
    with pytest.raises(ValueError, match="grid"):
        interface_gradient_ratio(plus, other, [[0.5, 0.0, 0.0]])


def test_graph_factors_cancel():
    sc = graph_slope_targets(1.0, [2])[0]
    spec = dict(K=1.0, h=1 / 16, tolerance=1e-10)
    plus = solve_conjugated(SolveSpec(OscillatingGraph(side=1), sc, **spec))
    minus = solve_conjugated(SolveSpec(OscillatingGraph(side=-1), sc, **spec))
    pts = interface_samples(OscillatingGraph(), radii=(0.25, 0.5), per_shell=16)
    r = interface_gradient_ratio(plus, minus, pts)
    np.testing.assert_allclose(r.ratios, r.template_ratios, rtol=1e-12)
    assert r.max_abs_log < 0.1


# ---------------------------------------------------------------------------
# walk on spheres


HALF_DISC = 1.0 - 1.0 / math.sqrt(2.0)


@pytest.fixture(scope="module")
def plane_pair():
    plus = wos_sample(half_space(1), walks=200_000, master_seed=11)
    minus = wos_sample(half_space(-1), walks=200_000, master_seed=11)
    return plus, minus


def test_halfspace_disc_measure(plane_pair):
    hist = plane_pair[0]
    p, se = hist.measure(hist.ball_mask(0))
    assert abs(p - HALF_DISC) <= 3 * se
    assert hist.escape_fraction == 0.0
    assert hist.counts.sum() + hist.escaped.sum() == hist.walks


def test_halfspace_patches_match_poisson_kernel(plane_pair):
    hist = plane_pair[0]
    exact = halfspace_patch_measure(hist.partition)
    est, _ = hist.patch_measures()
    keep = exact > 1e-5
    se = np.sqrt(exact * (1 - exact) / hist.walks)[keep]
    inside = np.abs(est[keep] - exact[keep]) <= 3 * se
    assert inside.mean() >= 0.95


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 20.0), st.integers(-6, 0), st.integers(1, 30))
def test_poisson_patches_sum_to_one(height, lo, span):
    part = PatchPartition(level_min=lo, level_max=lo + span, sectors=4)
    assert abs(halfspace_patch_measure(part, height).sum() - 1.0) < 1e-12


def test_ball_measures_monotone(plane_pair):
    hist = plane_pair[0]
    vals = [hist.measure(hist.ball_mask(j))[0] for j in range(-3, 12)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_plane_log_h_is_flat(plane_pair):
    est = log_h_profile(*plane_pair, range(0, 4))
    assert not est.inconclusive.any()
    # twelve sectors per scale: allow the max of twelve noisy terms
    assert np.all(est.statistic <= 4 * est.band)
    assert np.all(est.ball <= 3 * est.ball_band)


def test_reproducible_and_batch_independent():
    kind = TwistedSzulkin()
    a = wos_sample(kind, walks=3000, master_seed=5)
    b = wos_sample(kind, walks=3000, master_seed=5)
    np.testing.assert_array_equal(a.counts, b.counts)
    c = wos_sample(kind, walks=3000, master_seed=5, batches=7)
    np.testing.assert_array_equal(a.counts.sum(axis=0), c.counts.sum(axis=0))
    d = wos_sample(kind, walks=3000, master_seed=6)
    assert not np.array_equal(a.counts, d.counts)


def test_thread_count_does_not_change_counts(monkeypatch):
    kind = OscillatingGraph()
    a = wos_sample(kind, walks=2000, master_seed=9)
    monkeypatch.setenv("FBLAB_THREADS", "1")
    b = wos_sample(kind, walks=2000, master_seed=9)
    numba.set_num_threads(numba.config.NUMBA_NUM_THREADS)
    np.testing.assert_array_equal(a.counts, b.counts)


@pytest.mark.parametrize("kind", [TwistedSzulkin(), OscillatingGraph()], ids=["twist", "graph"])
def test_symmetric_patches(kind):
    plus = wos_sample(kind.with_side(1), walks=20_000, master_seed=2)
    minus = wos_sample(kind.with_side(-1), walks=20_000, master_seed=2)
    z = symmetric_patch_z(plus, minus)
    assert len(z) > 20
    assert np.mean(np.abs(z) <= 3) >= 0.95
    # whole-ball measures agree on the two sides
    est = log_h_profile(plus, minus, range(0, 3))
    assert np.all(est.ball <= 3 * est.ball_band)


def test_splitting_is_unbiased():
    hist = wos_sample(half_space(), walks=20_000, master_seed=4, split_levels=(1, 2, 3), split_factor=4)
    exact = halfspace_patch_measure(hist.partition)
    for j in (0, 2, 3, 4):
        p, se = hist.measure(hist.ball_mask(j))
        q = exact[hist.partition.level_index(j):].sum()
        assert abs(p - q) <= 3.5 * se, (j, p, q, se)
    assert hist.counts.shape[1] == 4
    assert hist.counts[:, 3].sum() > hist.counts[:, 0, hist.partition.level_index(3):].sum()


def test_wos_preconditions():
    with pytest.raises(ValueError, match="inside"):
        wos_sample(TwistedSzulkin(), pole=[0.0, 0.0, -1.0], walks=10)
    with pytest.raises(ValueError, match="eps"):
        wos_sample(half_space(), walks=10, eps=1e-7)
    with pytest.raises(ValueError, match="sectors"):
        PatchPartition(sectors=5)
    a = wos_sample(half_space(), walks=100)
    b = wos_sample(half_space(-1), walks=100, partition=PatchPartition(sectors=8))
    with pytest.raises(ValueError, match="partition"):
        log_h_profile(a, b, [0])


def test_escape_warning():
    with pytest.warns(RuntimeWarning, match="step cap"):
        hist = wos_sample(TwistedSzulkin(), walks=500, master_seed=1, max_steps=3)
    assert hist.escape_warning
    assert hist.counts.sum() + hist.escaped.sum() == 500


def test_counts_never_exceed_walks():
    hist = wos_sample(OscillatingGraph(-1), walks=4000, master_seed=3)
    assert hist.counts.sum() <= hist.walks
    p, se = hist.patch_measures()
    np.testing.assert_allclose(se, np.sqrt(p * (1 - p) / hist.walks))


def test_csv_exports(tmp_path, plane_pair):
    import csv

    path = plane_pair[0].to_csv(tmp_path / "h.csv", manifest_id="m1")
    rows = list(csv.DictReader(open(path)))
    assert rows and all(r["manifest"] == "m1" for r in rows)
    assert sum(int(r["raw_count"]) for r in rows) == plane_pair[0].counts.sum()
    est = log_h_profile(*plane_pair, range(0, 3))
    rows = list(csv.DictReader(open(est.to_csv(tmp_path / "l.csv", "m1", seed=11))))
    assert [int(r["level"]) for r in rows] == [0, 1, 2]


@settings(max_examples=200, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_bin_antipodal(x, y, z):
    r = math.sqrt(x * x + y * y + z * z)
    assume(r > 1e-3)
    part = PatchPartition(folds=True)
    par = W._params(TwistedSzulkin(NONE))
    # stay off sector and level boundaries, which are measure-zero ties
    phi = (math.atan2(y, x) + math.pi) / (2 * math.pi) * part.sectors
    assume(abs(phi - round(phi)) > 1e-6)
    lv = -math.log2(r)
    assume(abs(lv - round(lv)) > 1e-9)
    rc = math.hypot(x, y)
    assume(rc > 1e-6)
    c3 = (x * x - 3 * y * y) * x / rc**3
    assume(abs(27 * c3 * c3 - 13.5) > 1e-6)  # double root of the meridian cubic
    zeta = z / rc
    roots = np.sort(np.roots([1.0, 0.0, -1.5, c3]).real) if 27 * c3 * c3 < 13.5 else np.array([])
    if len(roots) == 3:
        dist = np.sort(np.abs(roots - zeta))
        assume(dist[1] - dist[0] > 1e-6)  # equidistant from two roots
    nl = part.levels
    a = W._bin(par, x, y, z, part.level_min, nl, part.sectors, True)
    b = W._bin(par, -x, -y, -z, part.level_min, nl, part.sectors, True)
    assert b[0] == a[0]
    assert b[1] == (a[1] + part.sectors // 2) % part.sectors
    assert b[2] == 2 - a[2]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**63), st.integers(0, 10**9))
def test_uniforms_in_unit_interval(seed, walk):
    key = np.uint64(W._key(np.uint64(seed), walk, np.uint64(0)))
    u = np.array([W._uniform(key, d) for d in range(64)])
    assert np.all((u >= 0) & (u < 1))
    assert len(np.unique(u)) == 64
