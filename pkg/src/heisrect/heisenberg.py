"""Group law, frame, gauge and Carnot-Caratheodory distance on the Heisenberg group.

Points are exponential coordinates ``(x, y, z)`` for ``exp(xX + yY + zZ)`` with
``[X, Y] = Z``.  Every array-level helper accepts anything broadcastable to
shape ``(..., 3)`` so the same code serves single points and large batches.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class CCSolveError(RuntimeError):
    """The geodesic-family root solve did not reach the requested tolerance."""


class Point(NamedTuple):
    x: float
    y: float
    z: float

    @classmethod
    def of(cls, x, y, z) -> "Point":
        p = cls(float(x), float(y), float(z))
        if not all(math.isfinite(c) for c in p):
            raise ValueError(f"non-finite point coordinates: {p}")
        return p


class NPoint(NamedTuple):
    """A point ``(0, y, z)`` of the vertical subgroup, written ``(y, z)``."""

    y: float
    z: float

    def embed(self) -> Point:
        return Point(0.0, self.y, self.z)


class TangentVector(NamedTuple):
    dx: float
    dy: float
    dz: float


IDENTITY = Point(0.0, 0.0, 0.0)


def _split(p):
    p = np.asarray(p, dtype=float)
    return p[..., 0], p[..., 1], p[..., 2]


def mul(p, q) -> np.ndarray:
    """Vectorized group product ``p * q``."""
    x1, y1, z1 = _split(p)
    x2, y2, z2 = _split(q)
    return np.stack(
        [x1 + x2, y1 + y2, z1 + z2 + 0.5 * (x1 * y2 - x2 * y1)], axis=-1
    )


def inv(p) -> np.ndarray:
    return -np.asarray(p, dtype=float)


def group_mul(p: Point, q: Point) -> Point:
    return Point(*mul(p, q).tolist())


def group_inv(p: Point) -> Point:
    return Point(-p.x, -p.y, -p.z)


def rotate_z(p, angle: float):
    """Rotate the horizontal coordinates by ``angle``; a group automorphism."""
    c, s = math.cos(angle), math.sin(angle)
    if isinstance(p, Point):
        return Point(c * p.x - s * p.y, s * p.x + c * p.y, p.z)
    x, y, z = _split(p)
    return np.stack([c * x - s * y, s * x + c * y, z], axis=-1)


def dilate(p, r):
    """Carnot dilation with degrees (1, 1, 2); ``r`` may be an array for batches."""
    if np.any(np.asarray(r) <= 0):
        raise ValueError("dilation factor must be positive")
    if isinstance(p, Point):
        return Point(r * p.x, r * p.y, r * r * p.z)
    x, y, z = _split(p)
    return np.stack([r * x, r * y, r * r * z], axis=-1)


def gauge_norm(p):
    """Carnot gauge ``((x^2 + y^2)^2 + z^2)^(1/4)``."""
    x, y, z = _split(p)
    out = ((x * x + y * y) ** 2 + z * z) ** 0.25
    return float(out) if out.ndim == 0 else out


def gauge_dist(p, q):
    return gauge_norm(mul(inv(p), q))


def dN(p, q):
    """Gauge distance restricted to the vertical subgroup, in ``(y, z)`` coordinates."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    dy = p[..., 0] - q[..., 0]
    dz = p[..., 1] - q[..., 1]
    out = ((dy * dy) ** 2 + dz * dz) ** 0.25
    return float(out) if out.ndim == 0 else out


# --- left-invariant frame ---------------------------------------------------


def frame_X(p) -> TangentVector:
    return TangentVector(1.0, 0.0, -0.5 * p[1])


def frame_Y(p) -> TangentVector:
    return TangentVector(0.0, 1.0, 0.5 * p[0])


def frame_Z(p) -> TangentVector:
    return TangentVector(0.0, 0.0, 1.0)


def left_translation_jacobian(p) -> np.ndarray:
    """Differential of ``q -> p * q`` (constant in ``q``)."""
    x1, y1, _ = (float(c) for c in p)
    return np.array(
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-0.5 * y1, 0.5 * x1, 1.0]]
    )


# --- Carnot-Caratheodory distance -------------------------------------------

_HALF_PI = 0.5 * math.pi
_MAX_ITER = 200


def _segment_area_numer(two_phi: np.ndarray) -> np.ndarray:
    """``2phi - sin(2phi)`` without cancellation for small arguments."""
    t = two_phi
    series = t**3 / 6.0 - t**5 / 120.0 + t**7 / 5040.0 - t**9 / 362880.0
    return np.where(t < 2e-2, series, t - np.sin(t))


def _mu_minor(phi):
    # area / chord^2 for an arc of half-angle phi <= pi/2
    return _segment_area_numer(2.0 * phi) / (8.0 * np.sin(phi) ** 2)


def _mu_major(psi):
    # same with phi = pi - psi, psi in (0, pi/2]
    return (2.0 * math.pi - 2.0 * psi + np.sin(2.0 * psi)) / (8.0 * np.sin(psi) ** 2)


def _len_minor(r, phi):
    return r * np.where(phi == 0.0, 1.0, phi / np.where(phi == 0.0, 1.0, np.sin(phi)))


_VERTICAL_RATIO = 1e16


def _len_major(r, psi):
    return r * (math.pi - psi) / np.sin(psi)


def cc_norm(g, tol: float = 1e-12):
    """CC distance from the identity to ``g`` (vectorized).

    A horizontal curve's length is the length of its planar projection and its
    z-increment is the signed area swept, so minimizers project to circular
    arcs whose chord is ``r = |(x, y)|`` and whose segment area is ``|z|``.
    With half-angle ``phi`` of the arc, ``area / r^2 = (2phi - sin 2phi) /
    (8 sin^2 phi)`` and the length is ``r phi / sin(phi)``.  We bisect for
    ``phi``; beyond a half circle the complement ``pi - phi`` is the unknown
    so that ``sin`` keeps full relative precision.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x, y, z = _split(g)
    r = np.hypot(x, y)
    az = np.abs(z)
    scalar = r.ndim == 0
    r, az = np.atleast_1d(r).astype(float), np.atleast_1d(az).astype(float)
    out = np.empty_like(r)

    with np.errstate(all="ignore"):
        ratio = az / (r * r)
    # near the z-axis the length is 2 sqrt(pi |z|) - r + O(r^2 / sqrt|z|)
    vertical = (r == 0.0) | (ratio > _VERTICAL_RATIO)
    out[vertical] = 2.0 * np.sqrt(math.pi * az[vertical]) - r[vertical]
    flat = (~vertical) & (az == 0.0)
    out[flat] = r[flat]

    todo = ~(vertical | flat)
    t = ratio[todo]
    rr = r[todo]
    major = t > _mu_minor(np.array(_HALF_PI))
    res = np.empty_like(t)
    for branch, mu, length in ((False, _mu_minor, _len_minor), (True, _mu_major, _len_major)):
        sel = major == branch
        if not np.any(sel):
            continue
        tb, rb = t[sel], rr[sel]
        # minor: mu increases in phi on [0, pi/2]; major: mu decreases in psi
        lo = np.zeros_like(tb)
        hi = np.full_like(tb, _HALF_PI)
        for _ in range(_MAX_ITER):
            mid = 0.5 * (lo + hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                above = mu(mid) > tb
            if branch:
                lo = np.where(above, mid, lo)
                hi = np.where(above, hi, mid)
            else:
                hi = np.where(above, mid, hi)
                lo = np.where(above, lo, mid)
            with np.errstate(divide="ignore", invalid="ignore"):
                l_lo = length(rb, np.maximum(lo, 1e-300) if branch else lo)
                l_hi = length(rb, hi)
            width = np.abs(l_hi - l_lo)
            if np.all(width <= tol * np.maximum(1.0, l_hi)):
                break
        else:
            bad = width > tol * np.maximum(1.0, l_hi)
            raise CCSolveError(
                f"cc distance solve did not converge for {int(bad.sum())} point(s)"
            )
        res[sel] = 0.5 * (l_lo + l_hi)
    out[todo] = res
    return float(out[0]) if scalar else out


def cc_dist(p, q, tol: float = 1e-12):
    """Carnot-Caratheodory distance, accurate to ``tol`` (relative above 1)."""
    return cc_norm(mul(inv(p), q), tol)
