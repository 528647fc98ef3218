"""Coverage feasibility of concurrent locating under Poisson receiver deployments.

For a target to be trilaterated it needs at least three receivers inside
its TOA-detectable region (audible disk minus the masked regions caused
by the other concurrent transmitters).  With a guaranteed pairwise
separation ``d`` between concurrent transmitters, every receiver within
``d/2`` of a target hears that target first, so a disk around the target
survives masking; a Poisson receiver field of intensity ``lambda`` then
gives a closed-form lower bound on P(>= 3 receivers in the detectable
region).  Inverting that bound yields the separation distance used by the
slot scheduler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import AcousticParams, Point2D, blind_region_area

_MAX_RING_NEIGHBORS = 6  # ring of equal-radius neighbors keeps pairwise >= d only up to 6


@dataclass(frozen=True)
class DeploymentModel:
    """Poisson receiver field and the guaranteed target separation.

    intensity       expected receivers per square meter
    min_separation  minimum pairwise distance between concurrent targets, meters
    """

    intensity: float
    min_separation: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.intensity) and self.intensity > 0):
            raise ValueError(f"intensity: must be positive, got {self.intensity}")
        if not (math.isfinite(self.min_separation) and self.min_separation > 0):
            raise ValueError(f"min_separation: must be positive, got {self.min_separation}")


def tdr_lower_bound_area(d: float) -> float:
    """Area of the inscribed disk of radius d/2 that always survives masking."""
    if not (math.isfinite(d) and d > 0):
        raise ValueError(f"d: separation must be positive, got {d}")
    return math.pi * (d / 2.0) ** 2


def prob_three_receivers_lb(model: DeploymentModel) -> float:
    """Lower bound on P(at least 3 receivers inside the detectable region).

    Evaluates 1 - e^(-mu) (1 + mu + mu^2/2) with mu = lambda*pi*d^2/2,
    i.e. one minus the Poisson CDF at 2.  Increasing in both intensity
    and separation.
    """
    mu = model.intensity * math.pi * model.min_separation**2 / 2.0
    return 1.0 - math.exp(-mu) * (1.0 + mu + 0.5 * mu * mu)


def solve_separation_distance(
    intensity: float, target_prob: float = 0.99, resolution: float = 1e-3
) -> float:
    """Smallest separation d (to ``resolution`` meters) whose coverage bound
    reaches ``target_prob``.

    Bisection on the monotone bound; raises for target_prob outside (0, 1)
    (a probability of 1 is unattainable for finite d).
    """
    if not (math.isfinite(intensity) and intensity > 0):
        raise ValueError(f"intensity: must be positive, got {intensity}")
    if not (0.0 < target_prob < 1.0):
        raise ValueError(
            f"target_prob: must lie in (0, 1), got {target_prob} (>= 1 is unsatisfiable)"
        )
    hi = 1.0
    while prob_three_receivers_lb(DeploymentModel(intensity, hi)) < target_prob:
        hi *= 2.0
    lo = 0.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if prob_three_receivers_lb(DeploymentModel(intensity, mid)) >= target_prob:
            hi = mid
        else:
            lo = mid
    return hi


def symmetric_union_blind_area(
    k: int,
    d: float,
    params: AcousticParams,
    samples: int = 1_000_000,
    seed: int = 0,
    angles: Sequence[float] | None = None,
) -> float:
    """Monte Carlo area of the union of masked regions for ``k`` concurrent
    targets: a center target plus k-1 neighbors on a ring of radius ``d``.

    Neighbors default to equal angular spacing, the symmetric worst case
    for the union; ``angles`` (radians) overrides the placement.  Analysis
    helper only; the tracking pipeline never calls this.
    """
    if not 2 <= k <= _MAX_RING_NEIGHBORS + 1:
        raise ValueError(f"k: supported range is 2..{_MAX_RING_NEIGHBORS + 1}, got {k}")
    if not (math.isfinite(d) and d > 0):
        raise ValueError(f"d: separation must be positive, got {d}")
    if samples <= 0:
        raise ValueError(f"samples must be positive, got {samples}")
    n_neighbors = k - 1
    if angles is None:
        angles = [2.0 * math.pi * j / n_neighbors for j in range(n_neighbors)]
    elif len(angles) != n_neighbors:
        raise ValueError(f"angles: expected {n_neighbors} entries, got {len(angles)}")
    neighbors = [(d * math.cos(t), d * math.sin(t)) for t in angles]

    r, omega = params.r, params.omega
    rng = np.random.default_rng(seed)
    rho = r * np.sqrt(rng.random(samples))
    phi = (2.0 * math.pi) * rng.random(samples)
    px = rho * np.cos(phi)
    py = rho * np.sin(phi)
    masked = np.zeros(samples, dtype=bool)
    for sx, sy in neighbors:
        diff = rho - np.hypot(px - sx, py - sy)
        masked |= (diff > 0.0) & (diff <= omega)
    return math.pi * r * r * float(np.count_nonzero(masked)) / samples


def empirical_prob_three_receivers(
    model: DeploymentModel,
    params: AcousticParams,
    n_neighbors: int,
    draws: int = 100_000,
    seed: int = 0,
) -> float:
    """Empirical P(>= 3 receivers inside the *true* detectable region).

    Draws Poisson receiver fields over the audible disk of a center target
    surrounded by ``n_neighbors`` ring neighbors at radius
    ``model.min_separation`` and counts receivers that survive masking by
    every neighbor.  Independent sampling oracle for the closed-form bound.
    """
    if not 1 <= n_neighbors <= _MAX_RING_NEIGHBORS:
        raise ValueError(f"n_neighbors: supported range is 1..{_MAX_RING_NEIGHBORS}")
    r, omega = params.r, params.omega
    d = model.min_separation
    neighbors = [
        (d * math.cos(2.0 * math.pi * j / n_neighbors), d * math.sin(2.0 * math.pi * j / n_neighbors))
        for j in range(n_neighbors)
    ]
    rng = np.random.default_rng(seed)
    counts = rng.poisson(model.intensity * math.pi * r * r, size=draws)
    total = int(counts.sum())
    draw_idx = np.repeat(np.arange(draws), counts)
    rho = r * np.sqrt(rng.random(total))
    phi = (2.0 * math.pi) * rng.random(total)
    px = rho * np.cos(phi)
    py = rho * np.sin(phi)
    masked = np.zeros(total, dtype=bool)
    for sx, sy in neighbors:
        diff = rho - np.hypot(px - sx, py - sy)
        masked |= (diff > 0.0) & (diff <= omega)
    detectable = np.bincount(draw_idx[~masked], minlength=draws)
    return float(np.count_nonzero(detectable >= 3)) / draws
