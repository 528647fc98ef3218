"""Location-based time-slot assignment for concurrent transmitters.

Targets whose pairwise distances all reach the confident separation
``d_s`` may share a slot; everyone else is split off greedily.  Targets
with unknown or lost positions always get exclusive slots, which is also
how the pipeline bootstraps: with nothing located yet, the first round is
one exclusive slot per target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .geometry import Point2D, distance


@dataclass(frozen=True)
class SlotSchedule:
    """One scheduling round: each slot is the set of ids transmitting together."""

    slots: tuple[tuple[int, ...], ...]

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def all_targets(self) -> list[int]:
        return [tid for slot in self.slots for tid in slot]


def _normalize(positions: Mapping[int, Point2D] | Sequence[Point2D]) -> list[tuple[int, Point2D]]:
    if isinstance(positions, Mapping):
        return sorted(positions.items())
    return list(enumerate(positions))


def _closest_pair(items: list[tuple[int, Point2D]]) -> tuple[int, int, float] | None:
    # Scanning i<j in id order with a strict '<' keeps the lowest-id pair on ties.
    best: tuple[int, int, float] | None = None
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            d = distance(items[i][1], items[j][1])
            if best is None or d < best[2]:
                best = (i, j, d)
    return best


def _second_nearest(items: list[tuple[int, Point2D]], idx: int, partner: int) -> float:
    best = math.inf
    for k, (_, pt) in enumerate(items):
        if k == idx or k == partner:
            continue
        best = min(best, distance(items[idx][1], pt))
    return best


def divide_closest_targets(
    positions: Mapping[int, Point2D] | Sequence[Point2D], d_s: float
) -> list[list[int]]:
    """Greedy partition into groups whose pairwise distances are all >= d_s.

    While the working set's closest pair is under d_s, the more crowded
    member of the pair (smaller distance to its second-nearest neighbor;
    ties evict the higher id) moves to the next working set.  The
    surviving set becomes a group and the procedure recurses on the moved
    members.  Valid but not minimal: finding the fewest groups is NP-hard.
    """
    if not (math.isfinite(d_s) and d_s > 0):
        raise ValueError(f"d_s: separation must be positive, got {d_s}")
    working = _normalize(positions)
    groups: list[list[int]] = []
    while working:
        moved: list[tuple[int, Point2D]] = []
        while len(working) >= 2:
            pair = _closest_pair(working)
            assert pair is not None
            i, j, d = pair
            if d >= d_s:
                break
            sec_i = _second_nearest(working, i, j)
            sec_j = _second_nearest(working, j, i)
            if sec_i < sec_j:
                evict = i
            elif sec_j < sec_i:
                evict = j
            else:
                evict = j  # equal crowding: keep the lower id in this group
            moved.append(working.pop(evict))
        groups.append([tid for tid, _ in working])
        working = sorted(moved)
    return groups


def build_schedule(
    known: Mapping[int, Point2D],
    unknown_or_lost: Iterable[int],
    d_s: float,
) -> SlotSchedule:
    """One slot per d_s-separated group of located targets, then one
    exclusive slot per unknown or lost target."""
    unknown = sorted(set(unknown_or_lost))
    overlap = set(known) & set(unknown)
    if overlap:
        raise ValueError(f"targets cannot be both known and unknown: {sorted(overlap)}")
    slots: list[tuple[int, ...]] = []
    if known:
        slots.extend(tuple(group) for group in divide_closest_targets(known, d_s))
    slots.extend((tid,) for tid in unknown)
    return SlotSchedule(slots=tuple(slots))
