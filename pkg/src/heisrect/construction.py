"""Chart construction: region constants, seed curve, the map Psi and its constants.

After normalization the base point sits at the origin with ``Xf(0) > 0`` and
``Yf(0) = 0``.  ``Psi(y, z)`` starts at the seed point ``phi(z)`` (the root of
``x -> f(x, 0, z)``) and follows the horizontal tangential flow to parameter
``y``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import flows
from .heisenberg import IDENTITY, NPoint, Point, cc_norm, gauge_norm, mul, inv, rotate_z
from .surface import SurfaceExpr, Var, add, const, mul as mul_node, sub

log = logging.getLogger(__name__)

SQRT_E = math.exp(0.5)
ETA3_COEFF = 1.0 + 0.75 * SQRT_E
DEFAULT_B_BOX = ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0))


class RegionRejected(ValueError):
    """The candidate region contains points with ``Xf <= 0``."""


class DomainViolation(ValueError):
    """A parameter lies outside the box on which the chart is defined."""


class SeedError(RuntimeError):
    """No sign change of ``x -> f(x, 0, z)`` in the expected bracket."""


@dataclass(frozen=True)
class RegionConstants:
    a: float
    K: float
    L: float
    M: float
    n: float
    grid_n: int
    margin: float = 0.0
    K_raw: float = float("nan")
    L_raw: float = float("nan")
    M_raw: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "a": self.a,
            "K": self.K,
            "L": self.L,
            "M": self.M,
            "n": self.n,
            "grid_n": self.grid_n,
            "margin": self.margin,
            "K_raw": self.K_raw,
            "L_raw": self.L_raw,
            "M_raw": self.M_raw,
        }


@dataclass(frozen=True)
class LipschitzConstants:
    B: float
    A2: float
    A1: float
    A: float

    def as_dict(self) -> dict:
        return {"B": self.B, "A2": self.A2, "A1": self.A1, "A": self.A}


# --- normalization ----------------------------------------------------------


def normalization_angle(e: SurfaceExpr, base) -> float:
    Xf, Yf, _ = e.horizontal(*(float(c) for c in base))
    return math.atan2(float(Yf), float(Xf))


def normalize_surface(
    e: SurfaceExpr, base=IDENTITY, level_tol: float = 1e-9, char_tol: float = flows.CHAR_TOL
) -> SurfaceExpr:
    """Return ``u -> f(base * R(u))`` with ``R`` the z-rotation by ``atan2(Yf, Xf)``.

    Both maps are isometries fixing the frame up to rotation, so the result
    vanishes at the origin with ``Xf(0) = |(Xf, Yf)(base)| > 0`` and
    ``Yf(0) = 0``.
    """
    base = Point(*(float(c) for c in base))
    if flows.is_characteristic(e, base, char_tol):
        raise flows.CharacteristicPointError(
            f"base point {tuple(base)} is characteristic (Xf = Yf = 0), so K <= 0 on every region"
        )
    if abs(float(e(*base))) > level_tol:
        raise ValueError(f"base point {tuple(base)} is not on the surface f = 0")
    theta = normalization_angle(e, base)
    c, s = math.cos(theta), math.sin(theta)
    c = 0.0 if abs(c) < 1e-15 else c
    s = 0.0 if abs(s) < 1e-15 else s
    x, y, z = Var("x"), Var("y"), Var("z")
    rx = sub(mul_node(const(c), x), mul_node(const(s), y))
    ry = add(mul_node(const(s), x), mul_node(const(c), y))
    twist = mul_node(
        const(0.5), sub(mul_node(const(base.x), ry), mul_node(rx, const(base.y)))
    )
    mapping = {
        "x": add(const(base.x), rx),
        "y": add(const(base.y), ry),
        "z": add(add(const(base.z), z), twist),
    }
    return e.compose(mapping)


# --- region constants -------------------------------------------------------


def region_grid(a: float, grid_n: int):
    """``grid_n^3`` points of ``C1 = {|x|,|y| <= a, |z + xy/2| <= a}``."""
    t = np.linspace(-a, a, grid_n)
    X, Y, S = np.meshgrid(t, t, t, indexing="ij")
    return X, Y, S - 0.5 * X * Y


def estimate_region_constants(
    e: SurfaceExpr, a: float, grid_n: int = 41, margin: float = 0.05
) -> RegionConstants:
    if a <= 0 or grid_n < 2:
        raise ValueError("need a > 0 and grid_n >= 2")
    X, Y, Z = region_grid(a, grid_n)
    fx, fy, fz = e.grad(X, Y, Z)
    Xf = fx - 0.5 * Y * fz
    Yf = fy + 0.5 * X * fz
    K_raw = float(Xf.min())
    if K_raw <= 0:
        raise RegionRejected(f"K <= 0 check failed: min Xf = {K_raw:.6g} on C1 with a = {a:g}")
    L_raw = float(max(np.abs(fx).max(), np.abs(fy).max(), np.abs(fz).max()))
    M_raw = float(np.abs(Yf / Xf).max())
    K = K_raw * (1.0 - margin)
    L = max(L_raw * (1.0 + margin), K)
    M = M_raw * (1.0 + margin)
    return RegionConstants(a, K, L, M, K / (2.0 * L), grid_n, margin, K_raw, L_raw, M_raw)


def lipschitz_constants(consts: RegionConstants, B: float) -> LipschitzConstants:
    if B < 1:
        raise ValueError("comparability constant B must be >= 1")
    K, L, n = consts.K, consts.L, consts.n
    A2 = ((math.e**2 * L**4 / K**4) * (2.0 * n) ** 2 + ETA3_COEFF**2) ** 0.25
    A1 = max(A2, math.sqrt(1.0 + consts.M**2))
    return LipschitzConstants(B, A2, A1, A1 * 2.0**0.75 * B)


def estimate_B(box=DEFAULT_B_BOX, samples: int = 10_000, rng_seed: int = 0, tol: float = 1e-9) -> float:
    """Sampled comparability constant between gauge and CC distance, times 1.05."""
    if samples < 2:
        raise ValueError("samples must be at least 2")
    rng = np.random.default_rng(rng_seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    p = rng.uniform(lo, hi, size=(samples, 3))
    q = rng.uniform(lo, hi, size=(samples, 3))
    g = mul(inv(p), q)
    gauge = gauge_norm(g)
    keep = gauge > 0
    cc = cc_norm(g[keep], tol)
    ratio = np.maximum(cc / gauge[keep], gauge[keep] / cc)
    best = float(ratio.max()) if ratio.size else 1.0
    return max(best, 1.0) * 1.05


# --- the chart --------------------------------------------------------------


@dataclass
class Chart:
    surface: SurfaceExpr
    consts: RegionConstants
    step: float = 1e-3
    level_tol: float = 1e-9
    bisection_tol: float = 1e-12
    base: Point = IDENTITY
    angle: float = 0.0
    original: SurfaceExpr | None = None
    seed_spacing: float = 1e-3
    _seed_z: np.ndarray = field(init=False, repr=False)
    _seed_x: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        half = self.consts.n
        m = max(int(math.ceil(half / self.seed_spacing)), 1)
        self._seed_z = np.linspace(-m * self.seed_spacing, m * self.seed_spacing, 2 * m + 1)
        self._seed_z = np.clip(self._seed_z, -self.z_limit, self.z_limit)
        self._seed_x = self._bisect(self._seed_z, *self._claim1_bracket(self._seed_z))

    @property
    def z_limit(self) -> float:
        c = self.consts
        return c.K / c.L * c.a

    def _claim1_bracket(self, z):
        c = self.consts
        pad = 1e-9 + 4 * self.bisection_tol
        half = c.L / c.K * np.abs(z) + pad
        return np.maximum(-half, -c.a), np.minimum(half, c.a)

    def _bisect(self, z, lo, hi):
        f = self.surface
        zeros = np.zeros_like(z)
        flo, fhi = f(lo, zeros, z), f(hi, zeros, z)
        bad = (flo > 0) | (fhi < 0)
        if bad.any():
            raise SeedError(
                f"no sign change of f(x, 0, z) for z = {z[bad][0]:.6g}; region constants are inconsistent"
            )
        lo, hi = lo.copy(), hi.copy()
        for _ in range(200):
            if np.all(hi - lo <= self.bisection_tol):
                break
            mid = 0.5 * (lo + hi)
            fm = f(mid, zeros, z)
            pos = fm > 0
            hi = np.where(pos, mid, hi)
            lo = np.where(pos, lo, mid)
        x = 0.5 * (lo + hi)
        # keep the endpoint with the smaller residual when it is strictly better
        for cand in (lo, hi):
            better = np.abs(f(cand, zeros, z)) < np.abs(f(x, zeros, z))
            x = np.where(better, cand, x)
        return x

    def seed_many(self, z) -> np.ndarray:
        """x-coordinates of ``phi(z)`` for an array of ``z``."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if np.any(np.abs(z) > self.z_limit + 1e-12):
            raise DomainViolation(f"seed curve needs |z| <= (K/L) a = {self.z_limit:.6g}")
        lo1, hi1 = self._claim1_bracket(z)
        h = self.seed_spacing
        zt, xt = self._seed_z, self._seed_x
        i = np.clip(np.searchsorted(zt, z) - 1, 0, len(zt) - 2)
        # |dphi/dz| <= L/K, so neighbouring table values bracket the root
        pad = self.consts.L / self.consts.K * h * 1.01 + 4 * self.bisection_tol
        lo = np.maximum(np.minimum(xt[i], xt[i + 1]) - pad, lo1)
        hi = np.minimum(np.maximum(xt[i], xt[i + 1]) + pad, hi1)
        in_table = (z >= zt[0]) & (z <= zt[-1])
        lo = np.where(in_table, lo, lo1)
        hi = np.where(in_table, hi, hi1)
        return self._bisect(z, lo, hi)

    def phi(self, z: float) -> Point:
        return Point(float(self.seed_many(z)[0]), 0.0, float(z))

    def check_box(self, y, z):
        n = self.consts.n * (1 + 1e-12)
        if np.any(np.abs(y) > n) or np.any(np.abs(z) > n):
            raise DomainViolation(f"(y, z) must lie in [-n, n]^2 with n = {self.consts.n:.6g}")

    def psi_many(self, y, z):
        """Vectorized Psi; returns ``(points, status)`` without raising on flow failures."""
        y, z = np.broadcast_arrays(np.atleast_1d(np.asarray(y, float)), np.atleast_1d(np.asarray(z, float)))
        self.check_box(y, z)
        x0 = self.seed_many(z)
        pts, status, _ = flows.flow_batch(
            self.surface, x0, 0.0, z, y, self.step, self.level_tol, region=self.consts
        )
        return pts, status

    def psi(self, y: float, z: float) -> Point:
        pts, status = self.psi_many(y, z)
        if status[0] != flows.OK:
            raise flows.error_for_status(status[0])(f"Psi({y}, {z}): flow stopped ({status[0]})")
        return Point(*pts[0].tolist())

    def to_original(self, p):
        """Map a point from normalized coordinates back to the input frame."""
        return mul(self.base, rotate_z(np.asarray(p, dtype=float), self.angle))


def seed_curve_phi(chart: Chart, z: float) -> Point:
    return chart.phi(z)


def psi(chart: Chart, p: NPoint) -> Point:
    return chart.psi(p.y, p.z)


def build_chart(
    surface: SurfaceExpr,
    base=IDENTITY,
    a: float = 0.5,
    grid_n: int = 41,
    margin: float = 0.05,
    step: float = 1e-3,
    level_tol: float = 1e-9,
    bisection_tol: float = 1e-12,
    max_halvings: int = 8,
    domain_probe: int = 21,
) -> Chart:
    """Normalize, estimate constants (halving ``a`` on rejection) and validate ``C``.

    The box ``C = [-n, n]^2`` must sit inside the set where the flows exist.
    It is probed by flowing from ``phi(z)`` to ``y = +-n`` for ``domain_probe``
    values of ``z``; ``n`` shrinks by 20% until every probe stays in ``C1``.
    """
    base = Point(*(float(c) for c in base))
    e = normalize_surface(surface, base, level_tol)
    angle = normalization_angle(surface, base)
    for attempt in range(max_halvings + 1):
        try:
            consts = estimate_region_constants(e, a, grid_n, margin)
            break
        except RegionRejected:
            if attempt == max_halvings:
                raise
            log.info("region rejected at a=%g, halving", a)
            a *= 0.5
    for _ in range(30):
        chart = Chart(e, consts, step, level_tol, bisection_tol, base, angle, surface)
        zs = np.linspace(-consts.n, consts.n, domain_probe)
        ys = np.concatenate([np.full_like(zs, consts.n), np.full_like(zs, -consts.n)])
        try:
            _, status = chart.psi_many(ys, np.concatenate([zs, zs]))
            if np.all(status == flows.OK):
                return chart
        except SeedError:
            pass
        log.info("flows leave C1 inside the box with n=%g; shrinking", consts.n)
        consts = replace(consts, n=0.8 * consts.n)
    raise RegionRejected("could not find a box C on which all flows stay in C1")
