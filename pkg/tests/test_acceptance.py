"""End-to-end acceptance checks, one test per criterion.

A summary line per criterion is printed at the end of the pytest run.
"""

import math
import time

import numpy as np
import pytest

from heisrect import flows
from heisrect.cli import main
from heisrect.construction import estimate_B
from heisrect.heisenberg import cc_dist, cc_norm, dilate, gauge_norm, inv, mul
from heisrect.surface import ParseError, parse
from heisrect.verify import claim3_arrays, hausdorff_box_count, verify_lipschitz
from oracles import central_diff, polygon_cc_length

pytestmark = pytest.mark.acceptance


def test_criterion_1_identity_chart(chart_factory):
    start = time.perf_counter()
    chart = chart_factory("x")
    B = estimate_B()
    rep = verify_lipschitz(chart, 10_000, rng_seed=0, B=B)
    elapsed = time.perf_counter() - start
    ratio_g = np.array([r.ratio_gauge for r in rep.pairs])
    ratio_c = np.array([r.ratio_cc for r in rep.pairs])
    assert len(rep.pairs) == 10_000 and rep.failures == {}
    assert np.abs(ratio_g - 1).max() <= 1e-9
    assert ratio_c.max() <= B * (1 + 1e-3)
    assert elapsed <= 60


def test_criterion_2_closed_form_chart(chart_factory):
    chart = chart_factory("x + y^2")
    n = chart.consts.n
    t = np.linspace(-n, n, 21)
    Y, Z = (g.ravel() for g in np.meshgrid(t, t))
    pts, status = chart.psi_many(Y, Z)
    assert (status == flows.OK).all()
    exact = np.stack([-(Y**2), Y, Z + Y**3 / 6], -1)
    assert np.abs(pts - exact).max() <= 1e-6

    # RK4 integrates the polynomial field of x + y^2 exactly, so the order is
    # measured on x + sin(y), whose flow from the origin is
    # (-sin y, y, y sin(y)/2 + cos(y) - 1)
    e = parse("x + sin(y)")

    def err(step):
        c = flows.flow_theta(e, (0, 0, 0), 1.0, step=step, level_tol=1e-6)
        y = c.ys
        return np.abs(c.gamma3 - (y * np.sin(y) / 2 + np.cos(y) - 1)).max()

    errs = [err(h) for h in (0.1, 0.05, 0.025)]
    assert errs[0] / errs[1] >= 12 and errs[1] / errs[2] >= 12


@pytest.mark.parametrize("src", ["x + y^2", "x + y*z"])
def test_criterion_3_lipschitz_verdict(chart_factory, src):
    rep = verify_lipschitz(chart_factory(src), 10_000, rng_seed=0, margin=1e-3)
    assert rep.verdict == "pass"
    assert rep.max_ratio_cc <= rep.constants.A * (1 + 1e-3)
    assert rep.failure_fraction < 0.01


def test_criterion_4_intermediate_bounds(chart_factory):
    chart = chart_factory("x + y*z")
    n = chart.consts.n
    y, z1, z2 = np.random.default_rng(0).uniform(-n, n, (3, 1000))
    v = claim3_arrays(chart, y, z1, z2)
    for name in ("lemma", "gronwall", "eta3", "claim3"):
        assert np.all(v[f"{name}_lhs"] <= v[f"{name}_rhs"] * (1 + 1e-3)), name


def test_criterion_5_claim1_saturated(chart_factory):
    chart = chart_factory("x - z")
    e = parse("x - z")
    # on the slice y = 0 every partial has modulus 1 and Xf = 1, so L/K = 1
    z = np.linspace(-chart.consts.n, chart.consts.n, 100)
    x = chart.seed_many(z)
    assert np.all(np.abs(x) <= np.abs(z) + 1e-9)
    assert np.abs(e(x, 0 * z, z)).max() <= 1e-9
    assert np.abs(x - z).max() <= 1e-9


def test_criterion_6_metric_kernel():
    assert cc_dist((0, 0, 0), (1, 0, 0)) == pytest.approx(1, abs=1e-4)
    vertical = cc_dist((0, 0, 0), (0, 0, 1))
    assert vertical == pytest.approx(2 * math.sqrt(math.pi), abs=1e-2)
    assert vertical == pytest.approx(polygon_cc_length((0, 0, 1)), abs=1e-2)

    rng = np.random.default_rng(0)
    p, q, g = rng.uniform(-1, 1, (3, 1000, 3))
    r = rng.uniform(0.1, 3, 1000)
    d_pq = cc_norm(mul(inv(p), q))
    d_gpq = cc_norm(mul(inv(mul(g, p)), mul(g, q)))
    assert np.abs(d_gpq - d_pq).max() <= 1e-6 * np.maximum(1, d_pq).max()
    dp, dq = dilate(p, r), dilate(q, r)
    assert np.abs(cc_norm(mul(inv(dp), dq)) - r * d_pq).max() <= 1e-6 * max(1, (r * d_pq).max())
    gp = gauge_norm(mul(inv(p), q))
    assert np.abs(gauge_norm(mul(inv(mul(g, p)), mul(g, q))) - gp).max() <= 1e-6
    assert np.abs(gauge_norm(mul(inv(dp), dq)) - r * gp).max() <= 1e-6


def test_criterion_7_characteristic_locus():
    res = flows.char_locus_scan(parse("z"))
    assert res.hits
    for p in res.hits:
        assert max(abs(c) for c in p) <= res.grid_spacing
    est = [row[2] for row in hausdorff_box_count(res.hits, [0.2, 0.1, 0.05, 0.025])]
    for a, b in zip(est, est[1:]):
        assert b > 0 and a / b >= 4


CORPUS = [
    "x + y^2",
    "x + y*z",
    "x - z",
    "z - x^2 - y^2",
    "sin(x) * cos(y) + z",
    "exp(x*y) - z^3",
    "x / (2 + y^2)",
    "cos(x + y*z)^2 - sin(z)/3",
    "-x^3 + 4*x*y*z - exp(-z)",
    "(x - 1)^4 * (y + 0.5) / (1 + z^2)",
]


def test_criterion_8_dsl():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (100, 3))
    for src in CORPUS:
        e = parse(src)
        for var in "xyz":
            sym = e.partial(var)(*pts.T)
            fd = np.array([central_diff(lambda *q: float(e(*q)), p, var) for p in pts])
            assert np.all(np.abs(sym - fd) <= 1e-6 * np.maximum(1, np.abs(sym))), (src, var)
    for src, offset in [("x + + y", 4), ("x $ y", 2), ("foo(x)", 0), ("(x + y", 6), ("x^2.5", 2)]:
        with pytest.raises(ParseError) as info:
            parse(src)
        assert info.value.offset == offset


def test_criterion_9_reproducibility(tmp_path, capsys):
    runs = []
    for _ in range(2):
        assert main(["verify", "--surface", "x + y*z", "--samples", "10000", "--seed", "0",
                     "--out", str(tmp_path)]) == 0
        runs.append({n: (tmp_path / n).read_bytes() for n in ("report.json", "pairs.csv")})
    capsys.readouterr()
    assert runs[0] == runs[1]
