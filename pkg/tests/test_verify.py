import math

import numpy as np
import pytest
from scipy.integrate import quad

from heisrect import flows
from heisrect.heisenberg import cc_norm, inv, mul
from heisrect.verify import (
    MIN_DN,
    check_claim2,
    check_claim3_bounds,
    claim3_arrays,
    hausdorff_box_count,
    sample_pairs,
    triangle_legs,
    verify_lipschitz,
)


@pytest.fixture(scope="module")
def charts(chart_factory):
    return {s: chart_factory(s) for s in ("x", "x + y^2", "x + y*z", "x - z")}


def test_plane_is_isometric_for_gauge(charts):
    rep = verify_lipschitz(charts["x"], 500, rng_seed=2)
    ratios = np.array([r.ratio_gauge for r in rep.pairs])
    assert np.allclose(ratios, 1.0, atol=1e-12)
    assert rep.verdict == "pass" and rep.failures == {}
    # cc / gauge never exceeds 2 sqrt(pi)
    assert rep.max_ratio_cc <= 2 * math.sqrt(math.pi) + 1e-6


def test_zero_samples(charts):
    rep = verify_lipschitz(charts["x"], 0)
    assert rep.pairs == [] and rep.verdict == "pass" and rep.failure_fraction == 0


def test_verify_is_deterministic(charts):
    a = verify_lipschitz(charts["x + y*z"], 300, rng_seed=11)
    b = verify_lipschitz(charts["x + y*z"], 300, rng_seed=11)
    assert a.pairs == b.pairs and a.summary() == b.summary()
    c = verify_lipschitz(charts["x + y*z"], 300, rng_seed=12)
    assert c.pairs != a.pairs


def test_pair_records(charts):
    rep = verify_lipschitz(charts["x - z"], 200, rng_seed=3)
    n = charts["x - z"].consts.n
    for r in rep.pairs:
        assert r.status == flows.OK
        assert r.d_N >= MIN_DN
        assert max(abs(r.y1), abs(r.z1), abs(r.y2), abs(r.z2)) <= n
        assert r.d_cc >= r.d_gauge * (1 - 1e-9)
        assert r.ratio_cc == pytest.approx(r.d_cc / r.d_N)
    assert rep.sandwich_violations == 0


def test_sample_pairs_respects_min_distance():
    uv = sample_pairs(1e-4, 2000, 0)
    d = ((uv[:, 0] - uv[:, 2]) ** 4 + (uv[:, 1] - uv[:, 3]) ** 2) ** 0.25
    assert d.min() >= MIN_DN and np.abs(uv).max() <= 1e-4


def test_claim2_against_quadrature(charts):
    chart = charts["x + y^2"]
    for y1, y2, z in [(0.0, 0.3, 0.1), (-0.25, 0.2, -0.05), (0.1, -0.3, 0.0)]:
        res = check_claim2(chart, y1, y2, z)
        exact = abs(quad(lambda t: math.sqrt(1 + 4 * t * t), y1, y2)[0])
        assert res.lhs == pytest.approx(exact, rel=1e-6)
        assert res.passed and res.aux["length_dominates"]
        assert res.rhs == pytest.approx(abs(y1 - y2) * math.sqrt(1 + chart.consts.M**2))


def test_claim2_degenerate_and_plane(charts):
    res = check_claim2(charts["x"], 0.1, 0.1, 0.0)
    assert res.lhs == 0 and res.passed
    res = check_claim2(charts["x"], -0.2, 0.3, 0.1)
    assert res.lhs == pytest.approx(0.5, rel=1e-12)
    assert res.aux["d_cc"] == pytest.approx(0.5, rel=1e-9)


@pytest.mark.parametrize("src", ["x + y^2", "x + y*z", "x - z"])
def test_claim2_length_dominates_distance(charts, src):
    chart = charts[src]
    n = chart.consts.n
    rng = np.random.default_rng(6)
    for y1, y2, z in rng.uniform(-n, n, (15, 3)):
        res = check_claim2(chart, y1, y2, z)
        assert res.passed
        assert res.aux["d_cc"] <= res.lhs * (1 + 1e-6)


def test_claim3_plane(charts):
    checks = {c.name: c for c in check_claim3_bounds(charts["x"], 0.2, -0.1, 0.15)}
    assert checks["lemma"].lhs == 0 and checks["gronwall"].lhs == 0
    assert checks["eta3"].lhs == pytest.approx(0.25)
    assert checks["claim3"].lhs == pytest.approx(0.5)
    assert all(c.passed for c in checks.values())


@pytest.mark.parametrize("src", ["x + y^2", "x + y*z", "x - z"])
def test_claim3_bounds_hold(charts, src):
    chart = charts[src]
    n = chart.consts.n
    y, z1, z2 = np.random.default_rng(9).uniform(-n, n, (3, 300))
    v = claim3_arrays(chart, y, z1, z2)
    for name in ("lemma", "gronwall", "eta3", "claim3"):
        assert np.all(v[f"{name}_lhs"] <= v[f"{name}_rhs"] * (1 + 1e-3)), name
    # the twisted value is the gauge norm of gamma^-1 eta, which cc dominates
    assert np.all(v["d_cc"] >= v["claim3_lhs"] * (1 - 1e-9))


def test_triangle_decomposition(charts):
    chart = charts["x + y*z"]
    n = chart.consts.n
    for y1, z1, y2, z2 in np.random.default_rng(10).uniform(-n, n, (20, 4)):
        direct, leg_y, leg_z = triangle_legs(chart, y1, z1, y2, z2)
        assert direct <= leg_y + leg_z + 1e-9
        a, c = chart.psi(y1, z1), chart.psi(y2, z2)
        assert direct == pytest.approx(cc_norm(mul(inv(np.array(a)), np.array(c)), 1e-9), rel=1e-9)


def test_box_count_single_point():
    table = hausdorff_box_count([(0.1, 0.2, 0.3)], [0.5, 0.1])
    assert [row[1] for row in table] == [1, 1]
    assert table[1][2] == pytest.approx(0.1**3)


def test_box_count_segment_vanishes():
    t = np.linspace(0, 1, 20001)
    seg = np.stack([0 * t, t, 0 * t], -1)
    table = hausdorff_box_count(seg, [0.1, 0.05, 0.025])
    est = [row[2] for row in table]
    assert est[0] > est[1] > est[2]
    assert est[2] <= 0.001


def test_box_count_vertical_plane_is_stable():
    y, z = np.meshgrid(np.linspace(-0.45, 0.45, 300), np.linspace(-0.45, 0.45, 3000))
    pts = np.stack([0 * y.ravel(), y.ravel(), z.ravel()], -1)
    est = [row[2] for row in hausdorff_box_count(pts, [0.2, 0.1, 0.05, 0.025])]
    # a two-dimensional vertical patch has positive finite 3-dimensional measure
    assert max(est[1:]) / min(est[1:]) <= 1.3
    assert 0.5 * 0.81 <= est[-1] <= 2 * 0.81


def test_box_count_empty_and_validation():
    assert hausdorff_box_count([], [0.1]) == [(0.1, 0, 0.0)]
    with pytest.raises(ValueError):
        hausdorff_box_count([(0, 0, 0)], [0.1, 0.2])
    with pytest.raises(ValueError):
        hausdorff_box_count([(0, 0, 0)], [0.0])


def test_claim2_parabola_example(charts):
    res = check_claim2(charts["x + y^2"], 0.0, 0.4, 0.0)
    # int_0^0.4 sqrt(1 + 4 y^2) dy in closed form
    exact = 0.5 * (0.4 * math.sqrt(1 + 0.64) + 0.5 * math.asinh(0.8))
    assert exact == pytest.approx(0.43929, abs=1e-5)
    assert res.lhs == pytest.approx(exact, rel=1e-7)
    assert res.rhs == pytest.approx(0.4 * math.sqrt(1 + 1.05**2))
    assert res.passed
