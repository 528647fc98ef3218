"""Track filtering over candidate positions via motion-consistency scoring.

Each target keeps its ``l`` most plausible tracks.  Every slot the track
endpoints are crossed with the locator's candidate positions to form
particles; each particle's step speed and speed change are scored against
online-updated Gaussian densities of the target's speed and acceleration,
and the ``l`` best-scoring particles survive as the new tracks.  The best
particle's endpoint is the position estimate.  When no candidates arrive
the tracks coast along their last velocity and the estimate is flagged as
predicted; a target that coasts too long is declared lost so the
scheduler can grant it an exclusive slot.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .geometry import Point2D
from .locating import CandidatePosition

_EMA_WEIGHT = 0.05  # per-observation weight of the running moment updates


@dataclass(frozen=True)
class MotionPdf:
    """Gaussian density with exponentially weighted moments and a floor on
    the standard deviation (keeps likelihoods strictly positive)."""

    mean: float
    std: float
    count: int = 0
    floor_std: float = 0.05

    def __post_init__(self) -> None:
        if not (math.isfinite(self.floor_std) and self.floor_std > 0):
            raise ValueError(f"floor_std: must be positive, got {self.floor_std}")
        if self.std < self.floor_std:
            object.__setattr__(self, "std", self.floor_std)

    def density(self, x: float) -> float:
        z = (x - self.mean) / self.std
        return math.exp(-0.5 * z * z) / (self.std * math.sqrt(2.0 * math.pi))


def update_pdf(
    pdf: MotionPdf, observations: Sequence[float], alpha: float = _EMA_WEIGHT
) -> MotionPdf:
    """Fold a batch of observations into the running Gaussian moments.

    Per observation: mean <- mean + alpha*(x - mean) and
    var <- (1 - alpha)*(var + alpha*(x - mean)^2), the standard
    exponentially weighted mean/variance recursion.  An empty batch leaves
    the pdf unchanged; the deviation floor is re-applied at the end.
    """
    if not observations:
        return pdf
    mean = pdf.mean
    var = pdf.std * pdf.std
    for x in observations:
        delta = x - mean
        mean += alpha * delta
        var = (1.0 - alpha) * (var + alpha * delta * delta)
    return MotionPdf(
        mean=mean,
        std=max(math.sqrt(var), pdf.floor_std),
        count=pdf.count + len(observations),
        floor_std=pdf.floor_std,
    )


def evaluate_likelihood(v_pdf: MotionPdf, a_pdf: MotionPdf, v: float, a: float) -> float:
    """Product of the speed and acceleration densities for one particle."""
    return v_pdf.density(v) * a_pdf.density(a)


@dataclass
class Track:
    """One position history plus the motion of its last step (per slot)."""

    positions: list[Point2D]
    last_speed: float = 0.0  # m/slot
    last_velocity: tuple[float, float] = (0.0, 0.0)  # m/slot components


@dataclass(frozen=True)
class Particle:
    """A candidate extension of one track."""

    parent_track: int
    candidate: int
    v_t: float  # m/slot
    a_t: float  # m/slot^2
    likelihood: float
    residue: float
    order: int


@dataclass
class FilterStepResult:
    tracks: list[Track]
    estimate: Point2D
    v_pdf: MotionPdf
    a_pdf: MotionPdf
    located: bool
    particles_formed: int = 0
    best_candidate: CandidatePosition | None = None  # None when coasting


class OpCounter:
    """Counts ranking comparisons; used to check the per-step cost model."""

    def __init__(self) -> None:
        self.comparisons = 0


def _rank_particles(
    particles: list[Particle], counter: OpCounter | None
) -> list[Particle]:
    # Best likelihood first; ties broken by lower candidate residue, then
    # by formation order (stable).
    def key(p: Particle) -> tuple[float, float, int]:
        return (-p.likelihood, p.residue, p.order)

    if counter is None:
        return sorted(particles, key=key)

    def cmp(a: Particle, b: Particle) -> int:
        counter.comparisons += 1
        ka, kb = key(a), key(b)
        return -1 if ka < kb else (1 if ka > kb else 0)

    return sorted(particles, key=functools.cmp_to_key(cmp))


def filter_step(
    tracks: Sequence[Track],
    candidates: Sequence[CandidatePosition],
    v_pdf: MotionPdf,
    a_pdf: MotionPdf,
    l: int,
    gap: int = 1,
    counter: OpCounter | None = None,
) -> FilterStepResult:
    """One filtering step for a single target.

    Forms the track x candidate cross product, scores each particle by the
    product of the speed and acceleration densities (speeds normalized to
    meters per slot by ``gap``, the slots elapsed since the last update),
    keeps the top ``l``, and updates the motion pdfs from the retained
    particles.  With no candidates the tracks coast along their last
    velocity, the pdfs stay untouched, and the result is flagged as
    predicted rather than located.
    """
    if l < 1:
        raise ValueError(f"l: must be >= 1, got {l}")
    if not tracks:
        raise ValueError("filter_step needs at least one track")
    if gap < 1:
        raise ValueError(f"gap: must be >= 1, got {gap}")

    if not candidates:
        coasted = []
        for tr in tracks:
            last = tr.positions[-1]
            vx, vy = tr.last_velocity
            nxt = Point2D(last.x + vx * gap, last.y + vy * gap)
            coasted.append(
                Track(positions=tr.positions + [nxt], last_speed=tr.last_speed,
                      last_velocity=tr.last_velocity)
            )
        return FilterStepResult(
            tracks=coasted,
            estimate=coasted[0].positions[-1],
            v_pdf=v_pdf,
            a_pdf=a_pdf,
            located=False,
        )

    particles: list[Particle] = []
    for ti, tr in enumerate(tracks):
        last = tr.positions[-1]
        for ci, cand in enumerate(candidates):
            dx = cand.position.x - last.x
            dy = cand.position.y - last.y
            v = math.hypot(dx, dy) / gap
            a = (v - tr.last_speed) / gap
            particles.append(
                Particle(
                    parent_track=ti,
                    candidate=ci,
                    v_t=v,
                    a_t=a,
                    likelihood=evaluate_likelihood(v_pdf, a_pdf, v, a),
                    residue=cand.residue,
                    order=len(particles),
                )
            )

    ranked = _rank_particles(particles, counter)
    kept = ranked[: min(l, len(ranked))]
    new_tracks = []
    for p in kept:
        parent = tracks[p.parent_track]
        cand = candidates[p.candidate]
        last = parent.positions[-1]
        new_tracks.append(
            Track(
                positions=parent.positions + [cand.position],
                last_speed=p.v_t,
                last_velocity=(
                    (cand.position.x - last.x) / gap,
                    (cand.position.y - last.y) / gap,
                ),
            )
        )
    return FilterStepResult(
        tracks=new_tracks,
        estimate=new_tracks[0].positions[-1],
        v_pdf=update_pdf(v_pdf, [p.v_t for p in kept]),
        a_pdf=update_pdf(a_pdf, [p.a_t for p in kept]),
        located=True,
        particles_formed=len(particles),
        best_candidate=candidates[kept[0].candidate],
    )


class TargetTracker:
    """Per-target filter state wired into the slot loop.

    Bootstraps from a single located position (all ``l`` tracks start as
    copies), steps on each scheduled slot, counts consecutive coasts, and
    reports itself lost once the coast limit is hit so the scheduler can
    reacquire it in an exclusive slot (motion pdfs survive reacquisition).
    """

    def __init__(
        self,
        target_id: int,
        position: Point2D,
        l: int,
        v_e: float,
        floor_std: float = 0.05,
        coast_limit: int = 5,
    ) -> None:
        self.target_id = target_id
        self.l = l
        self.coast_limit = coast_limit
        self.coast_count = 0
        self.v_pdf = MotionPdf(mean=v_e / 2.0, std=max(v_e / 2.0, floor_std), floor_std=floor_std)
        self.a_pdf = MotionPdf(mean=0.0, std=max(v_e / 2.0, floor_std), floor_std=floor_std)
        self.tracks = [Track(positions=[position]) for _ in range(l)]
        self.estimate = position

    @property
    def lost(self) -> bool:
        return self.coast_count >= self.coast_limit

    def step(self, candidates: Sequence[CandidatePosition], gap: int = 1) -> FilterStepResult:
        result = filter_step(
            self.tracks, candidates, self.v_pdf, self.a_pdf, self.l, gap=gap
        )
        self.tracks = result.tracks
        self.v_pdf = result.v_pdf
        self.a_pdf = result.a_pdf
        self.estimate = result.estimate
        self.coast_count = 0 if result.located else self.coast_count + 1
        return result

    def reacquire(self, position: Point2D) -> None:
        """Restart the tracks from an exclusive-slot fix, keeping the pdfs."""
        self.tracks = [Track(positions=[position]) for _ in range(self.l)]
        self.estimate = position
        self.coast_count = 0

    def mark_lost(self) -> None:
        """Force reacquisition regardless of coast state."""
        self.coast_count = self.coast_limit
