"""Empirical checks of the Lipschitz estimate for Psi and its intermediate bounds."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import simpson

from . import flows
from .construction import (
    DEFAULT_B_BOX,
    ETA3_COEFF,
    SQRT_E,
    Chart,
    LipschitzConstants,
    estimate_B,
    lipschitz_constants,
)
from .heisenberg import CCSolveError, cc_norm, dN, gauge_norm, inv, mul

log = logging.getLogger(__name__)

SOLVER_FAIL = "solver-fail"
MIN_DN = 1e-6
MAX_FAILURE_FRACTION = 0.01


class PairRecord(NamedTuple):
    pair_id: int
    y1: float
    z1: float
    y2: float
    z2: float
    d_N: float
    d_gauge: float
    d_cc: float
    ratio_gauge: float
    ratio_cc: float
    status: str


@dataclass
class LipschitzReport:
    pairs: list[PairRecord]
    constants: LipschitzConstants
    max_ratio_cc: float
    max_ratio_gauge: float
    verdict: str
    rng_seed: int
    margin: float
    failures: dict[str, int] = field(default_factory=dict)
    sandwich_violations: int = 0

    @property
    def failure_fraction(self) -> float:
        n = len(self.pairs)
        return sum(self.failures.values()) / n if n else 0.0

    def summary(self) -> dict:
        return {
            "samples": len(self.pairs),
            "rng_seed": self.rng_seed,
            "margin": self.margin,
            "constants": self.constants.as_dict(),
            "max_ratio_cc": self.max_ratio_cc,
            "max_ratio_gauge": self.max_ratio_gauge,
            "failures": dict(sorted(self.failures.items())),
            "failure_fraction": self.failure_fraction,
            "sandwich_violations": self.sandwich_violations,
            "verdict": self.verdict,
        }


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    aux: dict = field(default_factory=dict, compare=False)


def _bound(name, lhs, rhs, margin, **aux) -> BoundCheck:
    lhs, rhs = float(lhs), float(rhs)
    return BoundCheck(name, lhs, rhs, margin, lhs <= rhs * (1.0 + margin), aux)


def _cc_many(g: np.ndarray, tol: float):
    """CC norms with per-row failure flags instead of one batch-wide exception."""
    try:
        return cc_norm(g, tol), np.zeros(len(g), dtype=bool)
    except CCSolveError:
        out = np.full(len(g), np.nan)
        failed = np.zeros(len(g), dtype=bool)
        for i, row in enumerate(g):
            try:
                out[i] = cc_norm(row, tol)
            except CCSolveError:
                failed[i] = True
        return out, failed


def sample_pairs(n_box: float, samples: int, rng_seed: int) -> np.ndarray:
    """``samples`` rows ``(y1, z1, y2, z2)`` uniform on the box, with ``d_N >= 1e-6``."""
    rng = np.random.default_rng(rng_seed)
    out = rng.uniform(-n_box, n_box, size=(samples, 4))
    for _ in range(100):
        close = dN(out[:, :2], out[:, 2:]) < MIN_DN
        if not close.any():
            break
        out[close] = rng.uniform(-n_box, n_box, size=(int(close.sum()), 4))
    return out


def verify_lipschitz(
    chart: Chart,
    samples: int,
    rng_seed: int = 0,
    margin: float = 1e-3,
    cc_tol: float = 1e-6,
    B: float | None = None,
    b_samples: int = 10_000,
    b_box=DEFAULT_B_BOX,
) -> LipschitzReport:
    """Sample pairs in ``C`` and compare ``d_cc(Psi p, Psi q) / d_N(p, q)`` with ``A``."""
    if B is None:
        B = estimate_B(b_box, b_samples, rng_seed)
    consts = lipschitz_constants(chart.consts, B)
    if samples <= 0:
        return LipschitzReport([], consts, 0.0, 0.0, "pass", rng_seed, margin)

    uv = sample_pairs(chart.consts.n, samples, rng_seed)
    y = np.concatenate([uv[:, 0], uv[:, 2]])
    z = np.concatenate([uv[:, 1], uv[:, 3]])
    pts, status = chart.psi_many(y, z)
    p, q = pts[:samples], pts[samples:]
    st = np.where(status[:samples] != flows.OK, status[:samples], status[samples:])

    d_n = dN(uv[:, :2], uv[:, 2:])
    g = mul(inv(p), q)
    d_gauge = gauge_norm(g)
    ok = st == flows.OK
    d_cc = np.full(samples, np.nan)
    cc_ok, failed = _cc_many(g[ok], cc_tol)
    d_cc[ok] = cc_ok
    st = st.copy()
    st[np.flatnonzero(ok)[failed]] = SOLVER_FAIL
    ok = st == flows.OK
    d_gauge = np.where(ok, d_gauge, np.nan)

    ratio_g = d_gauge / d_n
    ratio_c = d_cc / d_n
    # comparability sandwich: gauge / B <= cc <= B * gauge
    sandwich = ok & ((d_cc > B * d_gauge * (1 + margin)) | (d_gauge > B * d_cc * (1 + margin)))

    failures: dict[str, int] = {}
    for s in st[~ok]:
        failures[s] = failures.get(s, 0) + 1
    max_c = float(np.max(ratio_c[ok])) if ok.any() else 0.0
    max_g = float(np.max(ratio_g[ok])) if ok.any() else 0.0
    frac = (~ok).sum() / samples
    verdict = "pass" if max_c <= consts.A * (1 + margin) and frac <= MAX_FAILURE_FRACTION else "fail"
    if frac > MAX_FAILURE_FRACTION:
        log.warning("%.2f%% of pairs failed", 100 * frac)

    records = [
        PairRecord(i, *map(float, uv[i]), float(d_n[i]), float(d_gauge[i]), float(d_cc[i]),
                   float(ratio_g[i]), float(ratio_c[i]), str(st[i]))
        for i in range(samples)
    ]
    return LipschitzReport(
        records, consts, max_c, max_g, verdict, rng_seed, margin, failures, int(sandwich.sum())
    )


def triangle_legs(chart: Chart, y1, z1, y2, z2, cc_tol: float = 1e-9):
    """CC lengths of the direct pair and of the two legs through ``Psi(y2, z1)``."""
    pts, status = chart.psi_many([y1, y2, y2], [z1, z1, z2])
    if np.any(status != flows.OK):
        raise flows.FlowError(f"flow failure in triangle legs: {list(status)}")
    a, b, c = pts
    direct = cc_norm(mul(inv(a), c), cc_tol)
    leg_y = cc_norm(mul(inv(a), b), cc_tol)
    leg_z = cc_norm(mul(inv(b), c), cc_tol)
    return direct, leg_y, leg_z


def check_claim2(chart: Chart, y1: float, y2: float, z: float, margin: float = 1e-3,
                 cc_tol: float = 1e-9) -> BoundCheck:
    """Length of the flow line between ``y1`` and ``y2`` against ``|y1 - y2| sqrt(1 + M^2)``.

    The length integrand is ``sqrt(1 + gamma1'(y)^2)``, evaluated from the
    field at the RK4 samples and integrated with Simpson's rule.
    """
    chart.check_box(np.array([y1, y2]), np.array([z]))
    rhs = abs(y1 - y2) * math.sqrt(1.0 + chart.consts.M**2)
    if y1 == y2:
        return _bound("claim2", 0.0, rhs, margin, d_cc=0.0, length_dominates=True)
    e = chart.surface
    start = chart.psi(y1, z)
    curve = flows.flow_theta(e, start, y2, chart.step, chart.level_tol, region=chart.consts)
    x, y, zz = curve.points.T
    slope, _, _ = flows.v_field_arrays(e, x, y, zz)
    integrand = np.sqrt(1.0 + slope**2)
    length = abs(float(simpson(integrand, x=y)))
    d_cc = cc_norm(mul(inv(curve.points[0]), curve.points[-1]), cc_tol)
    return _bound(
        "claim2", length, rhs, margin,
        d_cc=float(d_cc), length_dominates=bool(d_cc <= length * (1 + margin)),
    )


def claim3_arrays(chart: Chart, y, z1, z2, cc_tol: float = 1e-9) -> dict[str, np.ndarray]:
    """Both sides of the four Claim-3 style bounds for arrays of ``(y, z1, z2)``.

    ``gamma`` is the flow from ``phi(z1)`` and ``eta`` the flow from
    ``phi(z2)``, both evaluated at ``y``.
    """
    y, z1, z2 = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, float)) for v in (y, z1, z2)))
    m = len(y)
    pts, status = chart.psi_many(np.concatenate([y, y]), np.concatenate([z1, z2]))
    if np.any(status != flows.OK):
        raise flows.FlowError(f"{int((status != flows.OK).sum())} flow(s) failed")
    gam, eta = pts[:m], pts[m:]
    K, L = chart.consts.K, chart.consts.L
    dz = np.abs(z2 - z1)
    d1 = eta[:, 0] - gam[:, 0]
    d3 = eta[:, 2] - gam[:, 2]
    twisted = d3 + 0.5 * y * d1
    A2 = lipschitz_constants(chart.consts, 1.0).A2
    return {
        "lemma_lhs": np.abs(d1),
        "lemma_rhs": L / K * np.abs(twisted),
        "gronwall_lhs": np.abs(d1),
        "gronwall_rhs": L / K * SQRT_E * dz,
        "eta3_lhs": np.abs(d3),
        "eta3_rhs": ETA3_COEFF * dz,
        # the gauge distance of the two image points carries the twist term
        "claim3_lhs": (d1**4 + twisted**2) ** 0.25,
        "claim3_untwisted": (d1**4 + d3**2) ** 0.25,
        "claim3_rhs": A2 * np.sqrt(dz),
        "d_cc": cc_norm(mul(inv(gam), eta), cc_tol),
    }


def check_claim3_bounds(chart: Chart, y: float, z1: float, z2: float,
                        margin: float = 1e-3) -> list[BoundCheck]:
    v = {k: float(a[0]) for k, a in claim3_arrays(chart, y, z1, z2).items()}
    return [
        _bound("lemma", v["lemma_lhs"], v["lemma_rhs"], margin),
        _bound("gronwall", v["gronwall_lhs"], v["gronwall_rhs"], margin),
        _bound("eta3", v["eta3_lhs"], v["eta3_rhs"], margin),
        _bound("claim3", v["claim3_lhs"], v["claim3_rhs"], margin,
               untwisted=v["claim3_untwisted"], d_cc=v["d_cc"]),
    ]


def hausdorff_box_count(points, scales) -> list[tuple[float, int, float]]:
    """Cover by gauge boxes (``r x r x r^2``); report ``count * r^3`` per scale."""
    scales = [float(s) for s in scales]
    if any(s <= 0 for s in scales):
        raise ValueError("scales must be positive")
    if any(b >= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be strictly decreasing")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    out = []
    for r in scales:
        if len(pts) == 0:
            out.append((r, 0, 0.0))
            continue
        cells = np.floor(pts / np.array([r, r, r * r])).astype(np.int64)
        count = len(np.unique(cells, axis=0))
        out.append((r, count, count * r**3))
    return out
