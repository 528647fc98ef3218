"""Ground-truth scene generation and the per-slot measurement model.

Targets follow independent random walks: straight legs at a per-leg speed
drawn from a clipped normal, with a fresh uniform heading every turn
interval, reflecting off the arena walls.  Each slot, the scheduled
targets transmit; every receiver turns the in-range arrivals into
detected TOAs through the aftershock comparator, converts them back to
distances, optionally adds a positive uniform ranging offset, and reports
them in shuffled order so nothing identifies the transmitter.

All randomness derives from the single scenario seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .detection import ArrivalEvent, simulate_comparator
from .geometry import AcousticParams, Point2D, distance


@dataclass
class ScenarioConfig:
    """Scene, motion, deployment, and noise settings for one experiment."""

    arena_width: float = 10.0
    arena_height: float = 10.0
    n_targets: int = 10
    slot_length: float = 0.1  # seconds; also the location update interval
    speed_mean: float = 1.0  # m/s
    speed_std: float = 0.1  # m/s
    turn_interval: float = 5.0  # seconds between heading redraws
    noise_max_offset: float = 0.0  # l_o: ranging offsets are U(0, l_o), meters
    acoustic: AcousticParams = field(default_factory=lambda: AcousticParams(r=3.0, omega=0.33))
    seed: int = 0
    # Exactly one receiver layout: a square grid pitch, explicit positions,
    # or a Poisson intensity (receivers per square meter).
    receiver_grid_spacing: float | None = 2.0
    receiver_positions: tuple[Point2D, ...] | None = None
    receiver_intensity: float | None = None

    def validate(self) -> None:
        if not (math.isfinite(self.arena_width) and self.arena_width > 0):
            raise ValueError(f"arena_width: must be positive, got {self.arena_width}")
        if not (math.isfinite(self.arena_height) and self.arena_height > 0):
            raise ValueError(f"arena_height: must be positive, got {self.arena_height}")
        if self.n_targets < 1:
            raise ValueError(f"n_targets: must be >= 1, got {self.n_targets}")
        if not (math.isfinite(self.slot_length) and self.slot_length > 0):
            raise ValueError(f"slot_length: must be positive, got {self.slot_length}")
        if not (math.isfinite(self.speed_mean) and self.speed_mean >= 0):
            raise ValueError(f"speed_mean: must be >= 0, got {self.speed_mean}")
        if not (math.isfinite(self.speed_std) and self.speed_std >= 0):
            raise ValueError(f"speed_std: must be >= 0, got {self.speed_std}")
        if not (math.isfinite(self.turn_interval) and self.turn_interval > 0):
            raise ValueError(f"turn_interval: must be positive, got {self.turn_interval}")
        if not (math.isfinite(self.noise_max_offset) and self.noise_max_offset >= 0):
            raise ValueError(f"noise_max_offset: must be >= 0, got {self.noise_max_offset}")
        layouts = [
            self.receiver_grid_spacing is not None,
            self.receiver_positions is not None,
            self.receiver_intensity is not None,
        ]
        if sum(layouts) != 1:
            raise ValueError(
                "receiver_grid_spacing/receiver_positions/receiver_intensity: exactly one "
                "layout must be set"
            )
        if self.receiver_grid_spacing is not None and self.receiver_grid_spacing <= 0:
            raise ValueError(
                f"receiver_grid_spacing: must be positive, got {self.receiver_grid_spacing}"
            )
        if self.receiver_intensity is not None and self.receiver_intensity <= 0:
            raise ValueError(
                f"receiver_intensity: must be positive, got {self.receiver_intensity}"
            )

    @property
    def turn_slots(self) -> int:
        return max(1, round(self.turn_interval / self.slot_length))

    @property
    def max_speed(self) -> float:
        """Upper bound honored by the motion model (clipped normal)."""
        return self.speed_mean + 4.0 * self.speed_std


@dataclass(frozen=True)
class AnonymousDistanceSet:
    """Distances one receiver measured in one slot, source-unlabeled and
    order-shuffled."""

    receiver_id: int
    slot_index: int
    distances: tuple[float, ...]


class GroundTruth:
    """Per-slot true positions of all targets, for evaluation only."""

    def __init__(self) -> None:
        self.rows: list[tuple[int, int, float, float]] = []
        self._index: dict[tuple[int, int], Point2D] = {}

    def record(self, slot: int, positions: Sequence[Point2D]) -> None:
        for tid, pos in enumerate(positions):
            self.rows.append((slot, tid, pos.x, pos.y))
            self._index[(slot, tid)] = pos

    def position(self, slot: int, target_id: int) -> Point2D:
        return self._index[(slot, target_id)]

    def __contains__(self, key: tuple[int, int]) -> bool:
        return key in self._index


def build_receivers(config: ScenarioConfig, rng: np.random.Generator) -> list[tuple[int, Point2D]]:
    """Materialize the receiver deployment as (id, position) pairs."""
    if config.receiver_positions is not None:
        return list(enumerate(config.receiver_positions))
    if config.receiver_grid_spacing is not None:
        s = config.receiver_grid_spacing
        nx = int(math.floor(config.arena_width / s + 1e-9)) + 1
        ny = int(math.floor(config.arena_height / s + 1e-9)) + 1
        out = []
        for iy in range(ny):
            for ix in range(nx):
                out.append((len(out), Point2D(ix * s, iy * s)))
        return out
    area = config.arena_width * config.arena_height
    n = int(rng.poisson(config.receiver_intensity * area))
    xs = rng.uniform(0.0, config.arena_width, size=n)
    ys = rng.uniform(0.0, config.arena_height, size=n)
    return [(i, Point2D(float(x), float(y))) for i, (x, y) in enumerate(zip(xs, ys))]


@dataclass
class MotionState:
    """Mutable random-walk state for all targets."""

    xs: np.ndarray
    ys: np.ndarray
    headings: np.ndarray
    speeds: np.ndarray  # m/s, constant within a leg
    slots_to_turn: np.ndarray
    rng: np.random.Generator

    def positions(self) -> list[Point2D]:
        return [Point2D(float(x), float(y)) for x, y in zip(self.xs, self.ys)]


def _draw_speeds(config: ScenarioConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    speeds = rng.normal(config.speed_mean, config.speed_std, size=n)
    return np.clip(speeds, 0.0, config.max_speed)


def init_motion(config: ScenarioConfig, rng: np.random.Generator) -> MotionState:
    n = config.n_targets
    return MotionState(
        xs=rng.uniform(0.0, config.arena_width, size=n),
        ys=rng.uniform(0.0, config.arena_height, size=n),
        headings=rng.uniform(0.0, 2.0 * math.pi, size=n),
        speeds=_draw_speeds(config, rng, n),
        slots_to_turn=np.full(n, config.turn_slots, dtype=int),
        rng=rng,
    )


def _reflect(value: float, hi: float) -> tuple[float, bool]:
    # Fold a coordinate back into [0, hi]; report whether it bounced.
    flipped = False
    while not 0.0 <= value <= hi:
        if value < 0.0:
            value = -value
        else:
            value = 2.0 * hi - value
        flipped = not flipped
    return value, flipped


def step_motion(state: MotionState, config: ScenarioConfig) -> list[Point2D]:
    """Advance every target by one slot; returns the new positions.

    Heading and per-leg speed are redrawn when a target's turn countdown
    expires; walls reflect both position and heading.
    """
    due = state.slots_to_turn <= 0
    if due.any():
        k = int(due.sum())
        state.headings[due] = state.rng.uniform(0.0, 2.0 * math.pi, size=k)
        state.speeds[due] = _draw_speeds(config, state.rng, k)
        state.slots_to_turn[due] = config.turn_slots
    step = state.speeds * config.slot_length
    for i in range(len(state.xs)):
        nx = state.xs[i] + step[i] * math.cos(state.headings[i])
        ny = state.ys[i] + step[i] * math.sin(state.headings[i])
        nx, flip_x = _reflect(nx, config.arena_width)
        ny, flip_y = _reflect(ny, config.arena_height)
        if flip_x or flip_y:
            hx = math.cos(state.headings[i]) * (-1.0 if flip_x else 1.0)
            hy = math.sin(state.headings[i]) * (-1.0 if flip_y else 1.0)
            state.headings[i] = math.atan2(hy, hx) % (2.0 * math.pi)
        state.xs[i] = nx
        state.ys[i] = ny
    state.slots_to_turn -= 1
    return state.positions()


def measure_slot(
    scheduled: Mapping[int, Point2D],
    receivers: Sequence[tuple[int, Point2D]],
    config: ScenarioConfig,
    slot_index: int,
    rng: np.random.Generator,
) -> list[AnonymousDistanceSet]:
    """Anonymous distances every receiver reports for one slot.

    Per receiver: arrivals of the in-range scheduled targets run through
    the aftershock comparator; surviving TOAs convert back to distances,
    gain independent U(0, l_o) offsets, and are shuffled.  Noise is applied
    after detection; the offsets are far below omega, so detectability is
    decided by the true geometry.
    """
    params = config.acoustic
    out: list[AnonymousDistanceSet] = []
    for rid, rpos in receivers:
        arrivals = []
        for tid in sorted(scheduled):
            d = distance(scheduled[tid], rpos)
            if d <= params.r:
                arrivals.append(ArrivalEvent(time=d / params.v_u, source_id=tid))
        toas = simulate_comparator(arrivals, params)
        dists = np.array([t.time * params.v_u for t in toas])
        if dists.size and config.noise_max_offset > 0.0:
            dists = dists + rng.uniform(0.0, config.noise_max_offset, size=dists.size)
        if dists.size > 1:
            dists = dists[rng.permutation(dists.size)]
        out.append(
            AnonymousDistanceSet(
                receiver_id=rid,
                slot_index=slot_index,
                distances=tuple(float(d) for d in dists),
            )
        )
    return out
