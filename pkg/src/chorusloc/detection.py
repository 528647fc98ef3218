"""Threshold-comparator model of narrowband-ultrasound TOA detection.

A receiver compares the incoming wave power against a fixed threshold.
The first wavefront above threshold raises the comparator and triggers a
TOA event; the mechanical ring-down (aftershock) that follows keeps the
comparator high for up to ``l_max`` seconds, absorbing any wavefront that
arrives inside that window.  Detected TOAs carry no transmitter identity.

The distance-domain predicates mirror the same cascade: with path
difference expressed in meters, an arrival survives iff it trails the
previous *detected* arrival by more than ``omega = l_max * v_u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .geometry import AcousticParams, Point2D, distance


@dataclass(frozen=True)
class ArrivalEvent:
    """A wavefront reaching the receiver; ``source_id`` is ground truth the
    locator never sees."""

    time: float
    source_id: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.time) or self.time < 0:
            raise ValueError(f"time: arrival time must be finite and >= 0, got {self.time}")


@dataclass(frozen=True)
class DetectedToa:
    """A comparator rising edge; anonymous by construction."""

    time: float


def simulate_comparator(
    arrivals: Sequence[ArrivalEvent], params: AcousticParams
) -> list[DetectedToa]:
    """Run the threshold comparator over a slot's arrivals.

    The first arrival is always detected.  A later arrival is detected iff
    it lands at or after the end of the aftershock of the previous
    *detected* arrival (strictly later in time; coincident wavefronts
    merge into a single rising edge).  Absorbed arrivals do not extend the
    high window.
    """
    detected: list[DetectedToa] = []
    for event in sorted(arrivals, key=lambda e: e.time):
        if not detected:
            detected.append(DetectedToa(event.time))
            continue
        dt = event.time - detected[-1].time
        if dt > 0.0 and dt >= params.l_max:
            detected.append(DetectedToa(event.time))
    return detected


def pairwise_detectable(a: Point2D, b: Point2D, x: Point2D, params: AcousticParams) -> bool:
    """True iff a receiver at ``x`` resolves both concurrent transmitters:
    |d(a,x) - d(b,x)| > omega with both inside audible range."""
    d_ax = distance(a, x)
    d_bx = distance(b, x)
    return (
        abs(d_ax - d_bx) > params.omega and d_ax <= params.r and d_bx <= params.r
    )


def multi_detectable(
    targets: Sequence[Point2D], x: Point2D, params: AcousticParams
) -> list[bool]:
    """Which concurrent transmitters' TOAs survive at receiver ``x``.

    Returns one flag per input target.  Out-of-range targets are False.
    In-range targets are sorted by distance; the nearest is detected, and
    each later one is detected iff its distance exceeds the previous
    *detected* distance by more than omega (same cascade as the
    comparator, expressed in meters).
    """
    flags = [False] * len(targets)
    in_range = sorted(
        ((distance(t, x), idx) for idx, t in enumerate(targets) if distance(t, x) <= params.r),
    )
    last_detected: float | None = None
    for d, idx in in_range:
        if last_detected is None or d - last_detected > params.omega:
            flags[idx] = True
            last_detected = d
    return flags
