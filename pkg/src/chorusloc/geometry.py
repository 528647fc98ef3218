"""Planar geometry of concurrent-transmitter masking regions.

When two ultrasound transmitters fire in the same time slot, a receiver
hears the nearer wavefront first and its transducer keeps ringing for a
while (the aftershock).  The later wavefront is missed unless the two
path lengths differ by more than the confident separation distance
``omega``.  The set of receiver positions where transmitter ``a`` is
masked by a concurrent transmitter ``b`` is therefore

    { x : 0 < d(a,x) - d(b,x) <= omega  and  d(a,x) <= r }

bounded by the perpendicular bisector of the pair, one branch of the
hyperbola of constant path difference ``omega`` (foci ``a``, ``b``), and
the audible circle of ``a``.  This module provides the closed-form area
of that region, a point-membership predicate, and a rejection-sampling
estimator used as an independent cross-check of the closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

SPEED_OF_ULTRASOUND = 340.0  # meters/second in air

# Relative slack used when validating redundant parameter pairs.
_REL_TOL = 1e-9


@dataclass(frozen=True)
class Point2D:
    """Planar position in meters."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"coordinates must be finite, got ({self.x}, {self.y})")

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class AcousticParams:
    """Acoustic constants shared by the detection and geometry models.

    r        audible range of a transmitter, meters
    omega    confident separation distance between successive wavefronts
             for both to be detected, meters
    v_u      propagation speed of ultrasound, meters/second
    l_max    worst-case aftershock duration, seconds (omega / v_u)
    """

    r: float
    omega: float
    v_u: float = SPEED_OF_ULTRASOUND
    l_max: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.r) and self.r > 0):
            raise ValueError(f"r: audible range must be positive, got {self.r}")
        if not (math.isfinite(self.omega) and self.omega >= 0):
            raise ValueError(f"omega: separation distance must be >= 0, got {self.omega}")
        if not (math.isfinite(self.v_u) and self.v_u > 0):
            raise ValueError(f"v_u: ultrasound speed must be positive, got {self.v_u}")
        if self.l_max is None:
            object.__setattr__(self, "l_max", self.omega / self.v_u)
        else:
            expected = self.l_max * self.v_u
            if abs(expected - self.omega) > _REL_TOL * max(1.0, self.omega):
                raise ValueError(
                    f"l_max: inconsistent with omega, l_max*v_u={expected} != omega={self.omega}"
                )


@dataclass(frozen=True)
class BlindRegionParams:
    """Intermediate quantities of the masking-area computation.

    theta    half-angle subtended by the bisector chord, arccos(d_ab / 2r)
    a_h      hyperbola semi-major axis, omega / 2
    b_h      half the focal separation, d_ab / 2
    c_h      sqrt(a_h^2 + b_h^2)
    y_beta   ordinate of the circle/hyperbola intersection (0 when the
             hyperbola branch misses the audible circle)
    s_e      area carved out of the far chord segment by the hyperbola,
             i.e. the part of the audible disk where the path difference
             exceeds omega
    """

    theta: float
    a_h: float
    b_h: float
    c_h: float
    y_beta: float
    s_e: float


def distance(a: Point2D, b: Point2D) -> float:
    """Euclidean distance between two points, meters."""
    return math.hypot(a.x - b.x, a.y - b.y)


def _chord_segment_area(d_ab: float, r: float) -> float:
    # Area of the audible disk beyond the perpendicular bisector, i.e. the
    # circular segment cut by a chord at distance d_ab/2 from the center.
    theta = math.acos(min(1.0, d_ab / (2.0 * r)))
    return r * r * (theta - math.sin(theta) * math.cos(theta))


def _carve_geometry(d_ab: float, r: float, omega: float) -> tuple[float, float]:
    """Intersection ordinate and carved area for the middle regime.

    Valid for omega < d_ab < 2r - omega, where the hyperbola branch of
    path difference omega (vertex at (d_ab + omega)/2 from ``a``) cuts
    into the audible disk.  Returns (y_beta, s_e).
    """
    a_h = omega / 2.0
    b_sq = (d_ab * d_ab - omega * omega) / 4.0  # squared semi-minor axis
    # On the circle d(a,x) = r the masked boundary has d(b,x) = r - omega;
    # eliminating y gives the abscissa of the intersection (a at origin,
    # b at (d_ab, 0)).
    x_star = (d_ab * d_ab + omega * (2.0 * r - omega)) / (2.0 * d_ab)
    y_beta = math.sqrt(max(0.0, r * r - x_star * x_star))
    if y_beta <= 0.0:
        return 0.0, 0.0

    half_offset = d_ab / 2.0  # hyperbola center sits midway between the foci

    def width(y: float) -> float:
        circle = math.sqrt(max(0.0, r * r - y * y))
        hyper = half_offset + a_h * math.sqrt(1.0 + y * y / b_sq)
        return 2.0 * (circle - hyper)

    s_e, _ = integrate.quad(width, 0.0, y_beta, epsabs=1e-9, epsrel=1e-10, limit=200)
    return y_beta, max(0.0, s_e)


def blind_region_params(d_ab: float, params: AcousticParams) -> BlindRegionParams:
    """Expanded intermediate quantities for a pair separation ``d_ab`` <= 2r."""
    if not math.isfinite(d_ab) or d_ab < 0:
        raise ValueError(f"d_ab must be finite and >= 0, got {d_ab}")
    r, omega = params.r, params.omega
    if d_ab > 2.0 * r:
        raise ValueError(f"d_ab={d_ab} exceeds 2r={2 * r}; the masking region is empty")
    theta = math.acos(min(1.0, d_ab / (2.0 * r)))
    a_h = omega / 2.0
    b_h = d_ab / 2.0
    c_h = math.hypot(a_h, b_h)
    if omega < d_ab < 2.0 * r - omega:
        y_beta, s_e = _carve_geometry(d_ab, r, omega)
    else:
        y_beta, s_e = 0.0, 0.0
    return BlindRegionParams(theta=theta, a_h=a_h, b_h=b_h, c_h=c_h, y_beta=y_beta, s_e=s_e)


def blind_region_area(d_ab: float, params: AcousticParams) -> float:
    """Closed-form area of the region where ``a`` is masked by a concurrent
    transmitter at distance ``d_ab``.

    Piecewise in ``d_ab``: zero once the audible disks are disjoint
    (d_ab > 2r); the full far chord segment when the hyperbola branch
    misses the audible circle (d_ab >= 2r - omega) or when every point
    beyond the bisector is within the separation window (d_ab <= omega);
    otherwise the segment minus the hyperbola carve-out.  Continuous and
    non-increasing in ``d_ab``; ranges over [0, pi r^2 / 2].
    """
    if not math.isfinite(d_ab) or d_ab < 0:
        raise ValueError(f"d_ab must be finite and >= 0, got {d_ab}")
    r, omega = params.r, params.omega
    if d_ab > 2.0 * r:
        return 0.0
    if d_ab == 0.0:
        # Coincident transmitters: limit of the near branch, theta = pi/2.
        return 0.5 * math.pi * r * r
    segment = _chord_segment_area(d_ab, r)
    if d_ab <= omega or d_ab >= 2.0 * r - omega:
        return segment
    _, s_e = _carve_geometry(d_ab, r, omega)
    return max(0.0, segment - s_e)


def blind_region_contains(
    receiver: Point2D, a: Point2D, b: Point2D, params: AcousticParams
) -> bool:
    """True iff a receiver at ``receiver`` loses ``a``'s wavefront to ``b``'s
    aftershock: 0 < d(a,x) - d(b,x) <= omega and d(a,x) <= r."""
    d_ax = distance(a, receiver)
    if d_ax > params.r:
        return False
    diff = d_ax - distance(b, receiver)
    return 0.0 < diff <= params.omega


def monte_carlo_blind_area(
    a: Point2D,
    b: Point2D,
    params: AcousticParams,
    samples: int = 10_000_000,
    seed: int = 0,
    chunk: int = 2_000_000,
) -> float:
    """Rejection-sampling estimate of the masked area around ``a``.

    Samples uniformly over the audible disk of ``a`` and counts points
    satisfying the masking inequalities.  Unbiased, deterministic for a
    fixed seed; the binomial standard error is pi r^2 sqrt(p(1-p)/n).
    """
    if samples <= 0:
        raise ValueError(f"samples must be positive, got {samples}")
    r, omega = params.r, params.omega
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = samples
    while remaining > 0:
        n = min(chunk, remaining)
        rho = r * np.sqrt(rng.random(n))
        phi = (2.0 * math.pi) * rng.random(n)
        px = a.x + rho * np.cos(phi)
        py = a.y + rho * np.sin(phi)
        diff = rho - np.hypot(px - b.x, py - b.y)
        hits += int(np.count_nonzero((diff > 0.0) & (diff <= omega)))
        remaining -= n
    return math.pi * r * r * hits / samples
