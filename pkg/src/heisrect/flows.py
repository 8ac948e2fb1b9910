"""Horizontal tangential field ``V = -(Yf/Xf) X + Y`` and its integral curves.

Curves are parameterized by their ``y`` coordinate, which works because the
``Y`` component of ``V`` is identically one.  The state along a curve is
``(x, z)`` with

    dx/dy = -Yf/Xf
    dz/dy = (y/2) Yf/Xf + x/2

Integration is classical RK4 at fixed step, followed after every step by a
Newton projection along ``x`` back onto ``f = 0``.  ``flow_batch`` integrates
many curves at once; ``flow_theta`` is the single-curve, fully sampled form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .heisenberg import Point, TangentVector
from .surface import DomainError, SurfaceExpr

log = logging.getLogger(__name__)

CHAR_TOL = 1e-9

OK = "ok"
CHARACTERISTIC = "characteristic"
REGION_EXIT = "region-exit"
PROJECTION_FAIL = "projection-fail"
STATUSES = (OK, CHARACTERISTIC, REGION_EXIT, PROJECTION_FAIL)


class FlowError(RuntimeError):
    status = "flow-error"

    def __init__(self, message: str, curve: "FlowCurve | None" = None):
        super().__init__(message)
        self.curve = curve


class CharacteristicPointError(FlowError):
    status = CHARACTERISTIC


class RegionExitError(FlowError):
    status = REGION_EXIT


class ProjectionError(FlowError):
    status = PROJECTION_FAIL


_ERRORS = {
    CHARACTERISTIC: CharacteristicPointError,
    REGION_EXIT: RegionExitError,
    PROJECTION_FAIL: ProjectionError,
}


def error_for_status(status: str) -> type[FlowError]:
    return _ERRORS.get(status, FlowError)


@dataclass
class FlowCurve:
    base: Point
    ys: np.ndarray
    points: np.ndarray  # (n, 3); points[:, 1] == ys
    step: float
    level_residual_max: float
    status: str = OK

    @property
    def samples(self) -> list[tuple[float, Point]]:
        return [(float(y), Point(*p)) for y, p in zip(self.ys, self.points.tolist())]

    @property
    def end(self) -> Point:
        return Point(*self.points[-1].tolist())

    @property
    def gamma1(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def gamma3(self) -> np.ndarray:
        return self.points[:, 2]


@dataclass
class CharScanResult:
    hits: list[Point]
    grid_spacing: float
    tolerance: float
    candidates: int = 0
    box: tuple = field(default=())


def v_field_arrays(e: SurfaceExpr, x, y, z):
    """Coordinate components of ``V``; no characteristic guard."""
    Xf, Yf, _ = e.horizontal(x, y, z)
    ratio = Yf / Xf
    return -ratio, np.ones_like(ratio), 0.5 * y * ratio + 0.5 * x


def v_field(e: SurfaceExpr, p, char_tol: float = CHAR_TOL) -> TangentVector:
    x, y, z = (float(c) for c in p)
    Xf, Yf, _ = e.horizontal(x, y, z)
    if abs(Xf) < char_tol:
        raise CharacteristicPointError(f"|Xf| = {abs(Xf):.3g} < {char_tol:g} at {p}")
    ratio = Yf / Xf
    return TangentVector(-ratio, 1.0, 0.5 * y * ratio + 0.5 * x)


def is_characteristic(e: SurfaceExpr, p, tol: float = CHAR_TOL) -> bool:
    Xf, Yf, _ = e.horizontal(*(float(c) for c in p))
    return max(abs(Xf), abs(Yf)) <= tol


def in_region(x, y, z, a: float):
    """Membership in ``{|x|<=a, |y|<=a, |z + xy/2| <= a}``."""
    return (np.abs(x) <= a) & (np.abs(y) <= a) & (np.abs(z + 0.5 * x * y) <= a)


def _project(e: SurfaceExpr, x, y, z, level_tol: float, max_iter: int = 20):
    fx_expr = e.partial("x")
    ok = np.ones(x.shape, dtype=bool)
    for _ in range(max_iter):
        f = e(x, y, z)
        need = np.abs(f) > 1e-3 * level_tol
        if not need.any():
            break
        fx = fx_expr(x[need], y[need], z[need])
        safe = fx != 0
        upd = x[need]
        upd[safe] -= f[need][safe] / fx[safe]
        x[need] = upd
        bad = np.zeros_like(ok)
        bad[np.flatnonzero(need)[~safe]] = True
        ok &= ~bad
    resid = np.abs(e(x, y, z))
    ok &= resid <= level_tol
    return x, ok, resid


def flow_batch(
    e: SurfaceExpr,
    x0,
    y0,
    z0,
    y_target,
    step: float = 1e-3,
    level_tol: float = 1e-9,
    region=None,
    char_tol: float = CHAR_TOL,
    record: bool = False,
):
    """Integrate ``V`` from each ``(x0, y0, z0)`` until ``y == y_target``.

    ``region`` (anything with attributes ``a`` and ``K``) bounds the working
    set: a curve stops with status ``region-exit`` when it leaves the region or
    ``Xf`` drops below ``K/2``.  Each curve uses ``ceil(|dy|/step)`` equal
    steps, so targets on the step grid are hit exactly.

    Returns ``(points, status, residual)`` and, with ``record``, a list of
    per-step point snapshots.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x, y, z, yt = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(v, dtype=float)) for v in (x0, y0, z0, y_target))
    )
    x, y, z = x.copy(), y.copy(), z.copy()
    n = x.shape[0]
    dy = yt - y
    n_steps = np.ceil(np.abs(dy) / step - 1e-9).astype(int)
    n_steps = np.maximum(n_steps, 0)
    h = np.where(n_steps > 0, dy / np.maximum(n_steps, 1), 0.0)
    y_start = y.copy()
    status = np.array([OK] * n, dtype=object)
    resid = np.abs(e(x, y, z))
    history = [np.stack([x, y, z], axis=-1)] if record else None

    def rhs(xs, ys, zs):
        Xf, Yf, _ = e.horizontal(xs, ys, zs)
        bad = np.abs(Xf) < char_tol
        ratio = Yf / np.where(bad, 1.0, Xf)
        return -ratio, 0.5 * ys * ratio + 0.5 * xs, bad

    for k in range(int(n_steps.max(initial=0))):
        idx = np.flatnonzero((k < n_steps) & (status == OK))
        if idx.size == 0:
            break
        xi, zi, hi = x[idx], z[idx], h[idx]
        yi = y_start[idx] + k * hi
        try:
            k1x, k1z, b1 = rhs(xi, yi, zi)
            k2x, k2z, b2 = rhs(xi + 0.5 * hi * k1x, yi + 0.5 * hi, zi + 0.5 * hi * k1z)
            k3x, k3z, b3 = rhs(xi + 0.5 * hi * k2x, yi + 0.5 * hi, zi + 0.5 * hi * k2z)
            k4x, k4z, b4 = rhs(xi + hi * k3x, yi + hi, zi + hi * k3z)
        except DomainError as exc:
            raise FlowError(f"expression left its domain during integration: {exc}") from exc
        char = b1 | b2 | b3 | b4
        status[idx[char]] = CHARACTERISTIC
        keep = ~char
        idx, xi, zi, hi, yi = idx[keep], xi[keep], zi[keep], hi[keep], yi[keep]
        xn = xi + hi / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)[keep]
        zn = zi + hi / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)[keep]
        # the final step lands exactly on the target
        yn = np.where(k + 1 == n_steps[idx], yt[idx], yi + hi)
        xn, proj_ok, r = _project(e, xn, yn, zn, level_tol)
        good = proj_ok.copy()
        status[idx[~proj_ok]] = PROJECTION_FAIL
        if region is not None:
            inside = in_region(xn, yn, zn, region.a)
            Xf, _, _ = e.horizontal(xn, yn, zn)
            inside &= Xf >= 0.5 * region.K
            status[idx[good & ~inside]] = REGION_EXIT
            good &= inside
        gi = idx[good]
        x[gi], y[gi], z[gi] = xn[good], yn[good], zn[good]
        resid[gi] = np.maximum(resid[gi], r[good])
        if record:
            history.append(np.stack([x, y, z], axis=-1))
    points = np.stack([x, y, z], axis=-1)
    return (points, status, resid, history) if record else (points, status, resid)


def flow_theta(
    e: SurfaceExpr,
    q,
    y_target: float,
    step: float = 1e-3,
    level_tol: float = 1e-9,
    region=None,
    char_tol: float = CHAR_TOL,
) -> FlowCurve:
    """Integral curve of ``V`` through ``q``, sampled at every step."""
    q = Point(*(float(c) for c in q))
    if abs(float(e(*q))) > level_tol:
        raise ValueError(f"base point {q} is not on the level set (|f| > {level_tol:g})")
    if is_characteristic(e, q, char_tol) or abs(e.horizontal(*q)[0]) < char_tol:
        raise CharacteristicPointError(f"base point {q} is characteristic")
    _, status, resid, history = flow_batch(
        e, q.x, q.y, q.z, y_target, step, level_tol, region, char_tol, record=True
    )
    pts = np.array([hist[0] for hist in history])
    # drop duplicated trailing snapshots left by a stopped curve
    keep = np.concatenate([[True], np.diff(pts[:, 1]) != 0])
    pts = pts[keep]
    curve = FlowCurve(q, pts[:, 1].copy(), pts, step, float(resid[0]), str(status[0]))
    if curve.status != OK:
        raise _ERRORS[curve.status](
            f"flow from {q} stopped at y={pts[-1, 1]:.6g} ({curve.status})", curve
        )
    return curve


def char_locus_scan(
    e: SurfaceExpr,
    box=((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)),
    grid_n: int = 64,
    tol: float = 1e-6,
    max_newton: int = 50,
    max_candidates: int = 5000,
) -> CharScanResult:
    """Locate points of ``{f = 0}`` with ``Xf = Yf = 0`` inside ``box``.

    Grid points are kept as candidates when a first-order Taylor bound over one
    grid cell allows all of ``f``, ``Xf``, ``Yf`` to vanish nearby; each
    candidate is then refined by Gauss-Newton on that 3x3 system.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    axes = [np.linspace(lo, hi, grid_n) for lo, hi in box]
    spacing = max((hi - lo) / (grid_n - 1) for lo, hi in box)
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    X, Y, Z = X.ravel(), Y.ravel(), Z.ravel()

    comps = _char_system(e)
    reach = 1.5 * np.sqrt(3.0) * spacing
    cand = np.ones(X.shape, dtype=bool)
    for fn, grad in comps:
        val = np.abs(fn(X, Y, Z))
        g = np.sqrt(sum(gi(X, Y, Z) ** 2 for gi in grad))
        cand &= val <= reach * g + tol
    idx = np.flatnonzero(cand)
    if idx.size > max_candidates:
        log.info("char scan: %d candidates, keeping %d", idx.size, max_candidates)
        idx = idx[np.linspace(0, idx.size - 1, max_candidates).astype(int)]

    hits: list[Point] = []
    lo_b = np.array([b[0] for b in box])
    hi_b = np.array([b[1] for b in box])
    for i in idx:
        p = np.array([X[i], Y[i], Z[i]])
        for _ in range(max_newton):
            F = np.array([float(fn(*p)) for fn, _ in comps])
            if np.max(np.abs(F)) <= 1e-3 * tol:
                break
            J = np.array([[float(gi(*p)) for gi in grad] for _, grad in comps])
            dp = np.linalg.lstsq(J, -F, rcond=None)[0]
            p = p + dp
            if np.linalg.norm(dp) < 1e-15:
                break
        F = np.array([float(fn(*p)) for fn, _ in comps])
        if np.max(np.abs(F)) <= tol and np.all(p >= lo_b - spacing) and np.all(p <= hi_b + spacing):
            hits.append(Point(*p.tolist()))
    hits = _dedupe(hits, tol)
    return CharScanResult(hits, spacing, tol, int(idx.size), tuple(map(tuple, box)))


def _char_system(e: SurfaceExpr):
    """``[(f, grad f), (Xf, grad Xf), (Yf, grad Yf)]`` as compiled expressions."""
    from .surface import Const, Var, add, mul, sub

    fx, fy, fz = (e.partial(v).root for v in "xyz")
    half_y = mul(Const(0.5), Var("y"))
    half_x = mul(Const(0.5), Var("x"))
    xf = SurfaceExpr(sub(fx, mul(half_y, fz)))
    yf = SurfaceExpr(add(fy, mul(half_x, fz)))
    return [
        (g, [g.partial(v) for v in "xyz"]) for g in (e, xf, yf)
    ]


def _dedupe(points: list[Point], tol: float) -> list[Point]:
    out: list[Point] = []
    scale = max(tol, 1e-12) * 10
    seen = set()
    for p in points:
        key = tuple(int(round(c / scale)) for c in p)
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out
