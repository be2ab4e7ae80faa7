import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fblab.fields import (
    LOG100,
    DomainError,
    LogScale,
    OscillatingGraph,
    TwistedSzulkin,
    TwistProfile,
    graph_jet,
    half_space,
    rotate_z,
    szulkin,
    theta_jet,
)
from fblab.surfgeo import (
    PointCloud,
    accumulation_coverage,
    area_ratio_probe,
    best_rotation_distance,
    blowup_convergence,
    blowup_log_scales,
    corkscrew_probe,
    default_curve,
    excess,
    graph_slope_targets,
    hausdorff_in_ball,
    hd_lemma_check,
    interface_point,
    read_ply,
    rotation_excess,
    rotation_hausdorff,
    sample_interface,
    sample_twisted,
    self_similarity_distance,
    shell_hausdorff,
    trace_base_curve,
    write_ply,
)
from fblab.surfgeo.blowup import _sup_t_dtheta

LOGLOG = TwistProfile.loglog()
NONE = TwistProfile.none()
LINEAR = TwistProfile.power(1.0)


@pytest.fixture(scope="module")
def curve():
    return trace_base_curve(1e-3)


def _bisect(f, a, b):
    fa = f(a)
    for _ in range(200):
        m = 0.5 * (a + b)
        if (f(m) > 0) == (fa > 0):
            a, fa = m, f(m)
        else:
            b = m
    return 0.5 * (a + b)


# --- base curve ----------------------------------------------------------------


def test_curve_invariants(curve):
    p = curve.points
    assert np.max(np.abs(szulkin(p))) <= 1e-10
    assert np.max(np.abs(np.linalg.norm(p, axis=1) - 1)) <= 1e-12
    assert curve.gap <= 1e-3
    chords = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    assert chords.max() <= 1e-3 and chords.min() > 0
    assert np.array_equal(p[0], [0.0, 1.0, 0.0])
    assert np.min(np.linalg.norm(p - np.array([0.0, -1.0, 0.0]), axis=1)) <= 1e-3


def test_curve_single_loop_and_symmetry(curve):
    # a single closed loop: turning by a third of a revolution maps it onto itself
    assert rotation_hausdorff(curve, np.array(2 * math.pi / 3)) <= 1e-6
    tangents = curve.tangents
    # no reversals along the loop
    assert np.min(np.sum(tangents * np.roll(tangents, -1, axis=0), axis=1)) > 0.9


def test_curve_meets_plane_y0_at_cubic_root(curve):
    t_star = _bisect(lambda t: t**3 - 1.5 * t + 1.0, -1.5, -1.4)
    assert -1.5 < t_star < -1.4
    target = np.array([1.0, 0.0, t_star]) / math.hypot(1.0, t_star)
    y = curve.points[:, 1]
    idx = np.flatnonzero(np.sign(y) != np.sign(np.roll(y, -1)))
    hits = []
    for i in idx:
        a, b = curve.points[i], curve.points[(i + 1) % len(y)]
        w = a[1] / (a[1] - b[1])
        hits.append(a + w * (b - a))
    hits = np.array(hits)
    hits /= np.linalg.norm(hits, axis=1, keepdims=True)
    assert np.min(np.linalg.norm(hits - target, axis=1)) <= 1e-6
    assert np.min(np.linalg.norm(hits + target, axis=1)) <= 1e-6


def test_tracing_rejects_bad_gap():
    with pytest.raises(ValueError):
        trace_base_curve(0.2)
    with pytest.raises(ValueError):
        trace_base_curve(1e-7)


def test_rotation_excess_branches_agree(curve):
    # the first-order expansion and the polyline distance meet at the switch-over
    a = rotation_excess(curve, np.array([0.99e-4]))[0]
    b = rotation_excess(curve, np.array([1.01e-4]))[0]
    assert b / a == pytest.approx(1.01 / 0.99, rel=2e-3)
    assert rotation_excess(curve, np.array(0.0)) == 0.0


def test_cone_distance_identity(curve):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(1000, 3))
    X *= rng.uniform(0.2, 1.5, (1000, 1)) / np.linalg.norm(X, axis=1, keepdims=True)
    u = X / np.linalg.norm(X, axis=1, keepdims=True)
    ang = curve.angular_distance(u)
    predicted = np.linalg.norm(X, axis=1) * np.sin(np.minimum(ang, math.pi / 2))
    dense = sample_twisted(NONE, None, 3.0, 2e-3)
    brute, _ = __import__("scipy.spatial", fromlist=["cKDTree"]).cKDTree(dense.points).query(X)
    mask = ang <= math.pi / 2
    assert np.all(np.abs(brute[mask] - predicted[mask]) <= dense.gap)
    assert np.median(np.abs(brute[mask] - predicted[mask])) <= 2e-4


# --- clouds ---------------------------------------------------------------------


@pytest.mark.parametrize("kind,scale", [
    (TwistedSzulkin(LOGLOG), LogScale(1e3)),
    (TwistedSzulkin(LINEAR), LogScale(10.0)),
    (OscillatingGraph(), LogScale(1e3)),
    (OscillatingGraph(), None),
    (half_space(), None),
])
def test_cloud_gap_is_certified(kind, scale):
    coarse = sample_interface(kind, scale, 2.0, None, 0.03)
    dense = sample_interface(kind, scale, 2.0, None, 0.004)
    assert coarse.gap <= 0.03
    # every dense sample (a proxy for the true surface) is within the coarse gap
    assert excess(dense.clip(2.0), coarse).value <= coarse.gap
    assert np.any(np.all(coarse.points == 0.0, axis=1))


def test_untwisted_cloud_lies_on_cone():
    c = sample_interface(TwistedSzulkin(NONE), LogScale(10.0), 2.0, None, 0.02)
    assert np.max(np.abs(szulkin(c.points))) <= 1e-8


def test_blowup_shell_equals_base_curve():
    sc = LogScale(math.exp(2 * math.pi))
    cloud = sample_interface(TwistedSzulkin(LOGLOG), sc, 1.0, None, 0.01)
    shell = cloud.points[np.abs(np.linalg.norm(cloud.points, axis=1) - 1.0) < 1e-12]
    base = default_curve().points
    stride = len(base) // len(shell) if len(shell) < len(base) else 1
    assert len(shell) > 0
    d, _ = __import__("scipy.spatial", fromlist=["cKDTree"]).cKDTree(base).query(shell)
    assert d.max() <= 1e-6


def test_graph_ring_flat_at_sine_root():
    sc = LogScale(math.exp(3 * math.pi))
    cloud = sample_interface(OscillatingGraph(), sc, 1.0, None, 0.01)
    ring = cloud.points[np.abs(np.linalg.norm(cloud.points[:, :2], axis=1) - 1.0) < 1e-12]
    assert len(ring) > 100 and np.max(np.abs(ring[:, 2])) <= 1e-12


def test_sampling_refuses_blend_region():
    with pytest.raises(DomainError):
        sample_interface(TwistedSzulkin(LOGLOG), LogScale(5.0), 2.0, None, 0.05)
    with pytest.raises(DomainError):
        sample_interface(OscillatingGraph(), LogScale(5.0), 2.0, None, 0.05)


def test_excess_examples():
    S = PointCloud(np.random.default_rng(0).normal(size=(50, 3)), 0.0)
    assert excess(S, S).value == 0.0
    assert excess(np.array([[1.0, 0, 0]]), np.array([[0.0, 0, 0]])).value == 1.0
    assert excess(np.zeros((0, 3)), S).value == 0.0
    with pytest.raises(ValueError):
        excess(S, np.zeros((0, 3)))
    assert hausdorff_in_ball(S, S, 10.0).value == 0.0


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_excess_and_hausdorff_properties(seed):
    rng = np.random.default_rng(seed)
    A, B, C = (rng.normal(size=(rng.integers(5, 40), 3)) for _ in range(3))
    sub = A[: max(len(A) // 2, 1)]
    assert excess(sub, B).value <= excess(A, B).value
    R = 100.0
    ab, ba = hausdorff_in_ball(A, B, R).value, hausdorff_in_ball(B, A, R).value
    assert ab == ba
    assert hausdorff_in_ball(A, C, R).value <= ab + hausdorff_in_ball(B, C, R).value + 1e-12
    assert hausdorff_in_ball(2 * A, 2 * B, 2 * R).value == 2 * ab


def test_rotated_cloud_matched_bound():
    c = sample_twisted(NONE, None, 1.0, 0.02).clip(1.0)
    sphere = c.points[np.abs(np.linalg.norm(c.points, axis=1) - 1) < 1e-12]
    for phi in (0.01, 0.3, 1.0):
        # clip just outside the unit sphere so rounding cannot drop points from one side only
        hd = hausdorff_in_ball(sphere, rotate_z(sphere, phi), 1.0 + 1e-9).value
        assert hd <= 2 * math.sin(phi / 2) * np.max(np.hypot(sphere[:, 0], sphere[:, 1])) + 1e-12


def test_ply_round_trip(tmp_path):
    c = sample_twisted(LOGLOG, LogScale(50.0), 1.0, 0.05)
    write_ply(tmp_path / "c.ply", c, comment="manifest abc")
    back = read_ply(tmp_path / "c.ply")
    assert np.array_equal(back, c.points)
    assert (tmp_path / "c.ply").read_bytes().startswith(b"ply\nformat binary_little_endian 1.0\n")


# --- distance bound and blow-ups -----------------------------------------------


def test_lemma_check_untwisted_is_zero():
    r = hd_lemma_check(NONE, LogScale(50.0), 2.0)
    assert r.lhs <= 1e-12 and r.ratio <= 1e-10


def test_linear_law_chord_sup_formula():
    for rho in (10.0, 100.0, 1e4):
        eps = 0.01
        got = _sup_t_dtheta(LINEAR, LogScale(rho), eps, 2.0)
        assert got == pytest.approx(max(eps * abs(math.log(eps)), 2 * math.log(2)), rel=1e-9)


@pytest.mark.parametrize("profile,rho,R,gap", [(LOGLOG, 20.0, 2.0, 0.01), (LINEAR, 10.0, 1.0, 0.03)])
def test_shell_formula_matches_brute_force_clouds(profile, rho, R, gap):
    shell = hd_lemma_check(profile, LogScale(rho), R, method="shell")
    cloud = hd_lemma_check(profile, LogScale(rho), R, method="cloud", target_gap=gap)
    assert abs(shell.lhs - cloud.lhs) <= cloud.cloud_gap + shell.lhs_error


def test_lemma_chord_ratio_is_stable():
    ratios = [hd_lemma_check(LOGLOG, LogScale(math.exp(2 * math.pi * k)), R).chord_ratio
              for k in (1, 2, 3) for R in (2.0, 10.0)]
    assert max(ratios) <= 1.5 * min(ratios)


def test_blowup_scales():
    seq = blowup_log_scales(0.0, [1, 2])
    assert seq.scales[0].rho == pytest.approx(535.4917, abs=1e-4)
    assert seq.scales[1].rho == pytest.approx(286751.3, abs=0.1)
    for theta0 in (0.5, 3.0, 6.0):
        if math.exp(theta0) < LOG100:
            with pytest.raises(DomainError):
                blowup_log_scales(theta0, [0])
        s = blowup_log_scales(theta0, range(1, 4))
        assert all(a.rho < b.rho for a, b in zip(s.scales, s.scales[1:]))
        for sc in s.scales:
            jet = theta_jet(LOGLOG, sc)
            assert abs((jet.theta_mod - theta0 + math.pi) % (2 * math.pi) - math.pi) <= 1e-9
        assert s.eps == [sc.rho ** -0.5 for sc in s.scales]
    with pytest.raises(DomainError):
        blowup_log_scales(0.0, [12])
    with pytest.raises(ValueError):
        blowup_log_scales(7.0, [1])


def test_blowup_convergence_trends():
    steps = blowup_convergence(math.pi, [1, 2, 3], 2.0)
    vals = [s.d_shell for s in steps]
    assert vals[0] > vals[1] > vals[2] > 0
    assert all(s.d_shell <= s.d_matched * (1 + 1e-9) for s in steps)
    none = blowup_convergence(0.0, [1, 2], 2.0, profile=NONE)
    assert all(s.d_shell == 0.0 and s.d_matched == 0.0 for s in none)


def test_blowup_attouch_wets_both_excesses():
    # both one-sided distances shrink along the sequence for every R in a grid
    for R in (0.5, 1.0, 2.0, 4.0):
        prev = None
        for k in (1, 2, 3):
            sc = LogScale.from_blowup_index(0.0, k)
            d = shell_hausdorff(LOGLOG, sc, R).value
            if prev is not None:
                assert d < prev
            prev = d


def test_blowup_cloud_budget_error_lists_feasible():
    from fblab.surfgeo import ResolutionError

    with pytest.raises(ResolutionError, match="feasible k"):
        blowup_convergence(0.0, [1], 2.0, cloud=True)


def test_accumulation_examples():
    rho = np.arange(1, 1_000_001) * math.log(2.0)
    rep = accumulation_coverage(rho, 0.01)
    assert rep.coverage == 1.0 and rep.non_unique
    none = accumulation_coverage(rho[:1000], 0.01, profile=NONE)
    assert none.diameter <= 0.011 and not none.non_unique
    assert np.all(np.minimum(none.accumulation, 2 * math.pi - none.accumulation) <= 0.01 + 1e-12)
    seq = blowup_log_scales(2.0, range(0, 10))
    rep = accumulation_coverage(seq.scales, 0.01)
    assert rep.accumulation.size > 0
    assert np.all(np.abs(rep.accumulation - 2.0) <= 0.01 + 1e-12)
    assert not rep.non_unique


def test_phase_linear_law_constant_and_self_similar():
    ds = [best_rotation_distance(LINEAR, LogScale(r), 2.0).d_star for r in (10.0, 100.0, 1e3, 1e4)]
    assert min(ds) > 0.05
    assert max(ds) <= 1.1 * min(ds)
    m = self_similarity_distance(LogScale(10.0), LogScale(1e4), 2.0, 0.02)
    assert m.value <= 2 * 0.02


def test_phase_sublinear_law_decays():
    ds = [best_rotation_distance(TwistProfile.power(0.5), LogScale(r), 2.0).d_star
          for r in (10.0, 100.0, 1e3, 1e4)]
    assert all(a > b for a, b in zip(ds, ds[1:]))
    assert ds[-1] < 0.1 * ds[0]


# --- probes ----------------------------------------------------------------------


def test_corkscrew_half_space():
    for s in (0.1, 0.5, 1.0):
        r = corkscrew_probe(half_space(), None, np.zeros(3), s)
        assert r.M == pytest.approx(2.0, rel=1e-6)


def test_corkscrew_trends():
    k = TwistedSzulkin(LOGLOG)
    ms = [corkscrew_probe(k, LogScale(r), interface_point(k, LogScale(r)), 0.25).M for r in (1e2, 1e4, 1e6)]
    assert max(ms) <= 1.5 * min(ms)
    k2 = TwistedSzulkin(TwistProfile.power(2.0))
    m2 = [corkscrew_probe(k2, LogScale(r), interface_point(k2, LogScale(r)), 0.25).M for r in (10.0, 100.0, 1e3, 1e4)]
    assert all(a < b for a, b in zip(m2, m2[1:]))
    assert m2[-1] >= 10 * m2[0]


def test_area_ratio_oracles():
    plane = area_ratio_probe(half_space(), None, None, [0.1, 1.0])
    assert all(v == pytest.approx(math.pi, rel=1e-5) for _, v in plane)
    cone = area_ratio_probe(TwistedSzulkin(NONE), LogScale(10.0), None, [1e-3, 1e-1, 1.0])
    vals = [v for _, v in cone]
    assert max(vals) - min(vals) <= 1e-9 * max(vals)
    assert vals[0] == pytest.approx(default_curve().length / 2, rel=1e-3)


def test_area_ratio_loglog_bounded():
    vals = [v for _, v in area_ratio_probe(TwistedSzulkin(LOGLOG), None, None, [1e-3, 1e-4, 1e-5, 1e-6])]
    C = max(max(vals), 1 / min(vals))
    assert all(1 / C <= v <= C for v in vals)
    assert max(vals) / min(vals) < 1.05


def test_slope_targets():
    zero = graph_slope_targets(0.0, range(1, 5))
    assert [s.rho for s in zero] == [math.exp(math.pi * k) for k in range(1, 5)]
    one = graph_slope_targets(1.0, range(0, 8))
    assert one.ks == [2, 4, 6] and 0 in one.skipped and 1 in one.skipped
    for sc in one:
        assert graph_jet(np.array([1.0, 0.0]), sc)[0] == pytest.approx(1.0, abs=1e-9)
    big = graph_slope_targets(10.0, range(0, 6))
    assert big.ks == [4] and 2 in big.skipped
    neg = graph_slope_targets(-1.0, range(1, 6))
    assert neg.ks == [1, 3, 5]
    for sc in neg:
        assert sc.rho >= math.exp(math.log(LOG100))
