"""Consistent position generation from anonymous distance measurements.

The receivers report distances without transmitter identity.  Labeling
exploits motion continuity: a target displaces at most ``v_e`` per slot,
so a measured distance can only belong to it if it stays within ``v_e``
of the distance predicted from the target's previous position.  Labeled
distances are combined three at a time into trilaterated candidate
positions, each scored by its self-consistency residue (mean squared
mismatch against every labeled distance it explains); the best few
candidates per target feed the track filter.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import Point2D, distance
from .scenario import AnonymousDistanceSet

# A 3-receiver combination is unusable when the triangle it spans is this
# flat (|sin| of the corner angle); grid deployments make exactly
# collinear triples common.
_DEGENERACY_SIN = 1e-9


class DegenerateGeometryError(ValueError):
    """Raised when the supporting receivers cannot fix a position."""


@dataclass(frozen=True)
class LabeledDistance:
    """One anonymous distance plus the targets it could have come from."""

    receiver_id: int
    distance: float
    candidate_sources: frozenset[int]


@dataclass(frozen=True)
class CandidatePosition:
    """A trilaterated hypothesis for one target's current position."""

    target_id: int
    position: Point2D
    residue: float
    support: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class LocatorConfig:
    """Knobs of the candidate generator.

    v_e               per-step displacement bound, meters (labeling window
                      and candidate velocity gate)
    n_candidates      hypotheses kept per target per slot
    max_combinations  cap on trilaterated triples per target per slot
    arena             (xmin, ymin, xmax, ymax) bounds used to discard wild
                      solutions, or None to skip the check
    arena_margin      slack added around the arena before discarding
    residue_window    mismatch bound for a labeled distance to count as
                      explained by a candidate; defaults to v_e.  This
                      gates measurement agreement against a hypothesized
                      position, so it should track ranging uncertainty
                      (a couple of centimeters plus the noise bound), not
                      the motion bound: a wide window lets accidental
                      near-matches pollute the score of the true position.
    audible_range     receiver audibility radius, enabling the support
                      gate: a real transmitter at x is heard by roughly
                      the receivers within this range of x, so a
                      candidate explaining fewer than min_support_fraction
                      of them is discarded as a ghost.  None disables the
                      gate.
    min_support_fraction  fraction of in-range receivers a candidate must
                      explain when audible_range is set; below 1/2 by
                      default so aftershock masking of a few receivers
                      does not reject genuine fixes.
    """

    v_e: float
    n_candidates: int = 5
    max_combinations: int = 200
    arena: tuple[float, float, float, float] | None = None
    arena_margin: float = 0.5
    residue_window: float | None = None
    audible_range: float | None = None
    min_support_fraction: float = 0.5

    def __post_init__(self) -> None:
        if not (math.isfinite(self.v_e) and self.v_e > 0):
            raise ValueError(f"v_e: must be positive, got {self.v_e}")
        if self.n_candidates < 1:
            raise ValueError(f"n_candidates: must be >= 1, got {self.n_candidates}")
        if self.max_combinations < 1:
            raise ValueError(f"max_combinations: must be >= 1, got {self.max_combinations}")
        if self.residue_window is not None and self.residue_window <= 0:
            raise ValueError(f"residue_window: must be positive, got {self.residue_window}")
        if not 0.0 <= self.min_support_fraction <= 1.0:
            raise ValueError(
                f"min_support_fraction: must lie in [0, 1], got {self.min_support_fraction}"
            )

    @property
    def effective_residue_window(self) -> float:
        return self.v_e if self.residue_window is None else self.residue_window


def label_distances(
    distance_sets: Iterable[AnonymousDistanceSet],
    prev_positions: Mapping[int, Point2D],
    receivers: Mapping[int, Point2D],
    config: LocatorConfig,
) -> list[LabeledDistance]:
    """Attach candidate source labels to every measured distance.

    Distance D at receiver j is labeled with target i iff
    |D - d(receiver_j, prev_position_i)| <= v_e.  Labels are independent
    per target, so a distance may carry several labels or none.
    """
    labeled: list[LabeledDistance] = []
    for ds in distance_sets:
        rpos = receivers[ds.receiver_id]
        predicted = {tid: distance(rpos, pos) for tid, pos in prev_positions.items()}
        for d in ds.distances:
            sources = frozenset(
                tid for tid, pd in predicted.items() if abs(d - pd) <= config.v_e
            )
            labeled.append(
                LabeledDistance(receiver_id=ds.receiver_id, distance=d, candidate_sources=sources)
            )
    return labeled


def self_consistency(x: Point2D, supports: Sequence[tuple[Point2D, float]]) -> float:
    """Mean squared mismatch between measured distances and distances from
    ``x`` to the supporting receivers."""
    if not supports:
        raise ValueError("self_consistency needs at least one support")
    return sum((d - distance(x, rpos)) ** 2 for rpos, d in supports) / len(supports)


def _gauss_newton_step(x: np.ndarray, pts: np.ndarray, dists: np.ndarray) -> np.ndarray:
    """One Gauss-Newton update of the range residuals ||x - p_i|| - d_i."""
    delta = x - pts
    norms = np.linalg.norm(delta, axis=1)
    norms = np.where(norms < 1e-12, 1.0, norms)
    jac = delta / norms[:, None]
    resid = np.linalg.norm(x - pts, axis=1) - dists
    jtj = jac.T @ jac
    if abs(np.linalg.det(jtj)) < 1e-12:
        return x
    return x - np.linalg.solve(jtj, jac.T @ resid)


def trilaterate(supports: Sequence[tuple[Point2D, float]]) -> Point2D:
    """Least-squares position from >= 3 (receiver position, distance) pairs.

    Linearizes by subtracting the first circle equation from the rest and
    solving the resulting linear system, then applies one Gauss-Newton
    refinement step on the range residuals.  Raises
    DegenerateGeometryError for collinear or otherwise rank-deficient
    receiver geometry.
    """
    if len(supports) < 3:
        raise DegenerateGeometryError(f"need >= 3 supports, got {len(supports)}")
    pts = np.array([[p.x, p.y] for p, _ in supports], dtype=float)
    dists = np.array([d for _, d in supports], dtype=float)
    a_mat = 2.0 * (pts[1:] - pts[0])
    b_vec = (
        dists[0] ** 2
        - dists[1:] ** 2
        + np.sum(pts[1:] ** 2, axis=1)
        - np.sum(pts[0] ** 2)
    )
    sol, _, rank, sv = np.linalg.lstsq(a_mat, b_vec, rcond=None)
    if rank < 2 or sv[-1] <= 1e-9 * sv[0]:
        raise DegenerateGeometryError("supporting receivers are collinear")
    refined = _gauss_newton_step(sol, pts, dists)
    return Point2D(float(refined[0]), float(refined[1]))


def _trilaterate_triples(pts: np.ndarray, dists: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized triple trilateration.

    pts: (K, 3, 2) receiver positions; dists: (K, 3).  Returns positions
    (K, 2) and a validity mask (False for degenerate triples).  Same math
    as :func:`trilaterate` specialized to exactly three supports.
    """
    e1 = pts[:, 1, :] - pts[:, 0, :]
    e2 = pts[:, 2, :] - pts[:, 0, :]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    valid = np.abs(det) > _DEGENERACY_SIN * np.where(scale > 0, scale, 1.0)

    b1 = (
        dists[:, 0] ** 2
        - dists[:, 1] ** 2
        + np.sum(pts[:, 1, :] ** 2, axis=1)
        - np.sum(pts[:, 0, :] ** 2, axis=1)
    )
    b2 = (
        dists[:, 0] ** 2
        - dists[:, 2] ** 2
        + np.sum(pts[:, 2, :] ** 2, axis=1)
        - np.sum(pts[:, 0, :] ** 2, axis=1)
    )
    safe_det = np.where(valid, 2.0 * det, 1.0)
    # Inverse of [[2 e1]; [2 e2]] applied to (b1, b2).
    x = (e2[:, 1] * b1 - e1[:, 1] * b2) / safe_det
    y = (-e2[:, 0] * b1 + e1[:, 0] * b2) / safe_det
    pos = np.stack([x, y], axis=1)

    # One Gauss-Newton step, batched.
    delta = pos[:, None, :] - pts
    norms = np.linalg.norm(delta, axis=2)
    resid = norms - dists
    safe_norms = np.where(norms < 1e-12, 1.0, norms)
    jac = delta / safe_norms[:, :, None]
    jtj = np.einsum("kij,kil->kjl", jac, jac)
    jtr = np.einsum("kij,ki->kj", jac, resid)
    det_jtj = jtj[:, 0, 0] * jtj[:, 1, 1] - jtj[:, 0, 1] * jtj[:, 1, 0]
    ok = np.abs(det_jtj) > 1e-12
    inv00 = np.where(ok, jtj[:, 1, 1], 0.0)
    inv11 = np.where(ok, jtj[:, 0, 0], 0.0)
    inv01 = np.where(ok, -jtj[:, 0, 1], 0.0)
    denom = np.where(ok, det_jtj, 1.0)
    step_x = (inv00 * jtr[:, 0] + inv01 * jtr[:, 1]) / denom
    step_y = (inv01 * jtr[:, 0] + inv11 * jtr[:, 1]) / denom
    pos = pos - np.stack([step_x, step_y], axis=1)
    return pos, valid


def generate_candidates(
    labeled: Sequence[LabeledDistance],
    target_id: int,
    receivers: Mapping[int, Point2D],
    config: LocatorConfig,
    prev_position: Point2D | None = None,
) -> list[CandidatePosition]:
    """Top candidate positions for one target, residue-ascending.

    Triples of the target's labeled distances (distinct receivers,
    enumerated best-predicted-first, capped at ``max_combinations``) are
    trilaterated; solutions that are degenerate, far outside the arena, or
    displaced from ``prev_position`` by more than ``v_e`` are dropped.
    Each survivor is scored against all of the target's labeled distances
    (one best distance per receiver) by a truncated mean squared mismatch:
    distances beyond the residue window contribute the window itself
    rather than their raw mismatch.  The truncation is what rejects ghost
    solutions on both sides: a candidate that explains most receivers
    almost exactly and writes one poisoned label off as an outlier beats
    both a triple that fits only its own three distances and a compromise
    point that fits every label moderately badly.  Candidates matching
    fewer than three receivers within the window are dropped.  Distinct
    combinations that agree on the same point are kept as separate
    entries on purpose: a well-supported position fills the list and
    starves out coincidental near-fits.  Fewer than three usable
    distances yields an empty list and the caller's filter coasts.
    """
    mine = [ld for ld in labeled if target_id in ld.candidate_sources]
    if len(mine) < 3:
        return []
    if prev_position is not None:
        mine.sort(
            key=lambda ld: abs(ld.distance - distance(receivers[ld.receiver_id], prev_position))
        )
    else:
        mine.sort(key=lambda ld: (ld.receiver_id, ld.distance))
    # Receiver-diverse enumeration: the best-matching label of every
    # distinct receiver comes before any receiver's second label, so the
    # combination budget spans all audible receivers instead of being
    # spent inside a prefix of near-prediction labels.
    seen: set[int] = set()
    primary: list[LabeledDistance] = []
    secondary: list[LabeledDistance] = []
    for ld in mine:
        if ld.receiver_id in seen:
            secondary.append(ld)
        else:
            seen.add(ld.receiver_id)
            primary.append(ld)
    mine = primary + secondary

    triples: list[tuple[int, int, int]] = []
    for combo in itertools.combinations(range(len(mine)), 3):
        rids = {mine[i].receiver_id for i in combo}
        if len(rids) < 3:
            continue
        triples.append(combo)
        if len(triples) >= config.max_combinations:
            break
    if not triples:
        return []

    idx = np.array(triples)
    rpos = np.array(
        [[receivers[ld.receiver_id].x, receivers[ld.receiver_id].y] for ld in mine]
    )
    dvec = np.array([ld.distance for ld in mine])
    pos, valid = _trilaterate_triples(rpos[idx], dvec[idx])

    if config.arena is not None:
        xmin, ymin, xmax, ymax = config.arena
        m = config.arena_margin
        valid &= (
            (pos[:, 0] >= xmin - m)
            & (pos[:, 0] <= xmax + m)
            & (pos[:, 1] >= ymin - m)
            & (pos[:, 1] <= ymax + m)
        )
    if prev_position is not None:
        disp = np.hypot(pos[:, 0] - prev_position.x, pos[:, 1] - prev_position.y)
        valid &= disp <= config.v_e
    if not valid.any():
        return []

    # Residue of every candidate against all of the target's labeled
    # distances: per receiver, the best-matching distance, with mismatch
    # truncated at the residue window so outliers cost a flat penalty.
    window = config.effective_residue_window
    rec_ids = sorted({ld.receiver_id for ld in mine})
    rec_index = {rid: k for k, rid in enumerate(rec_ids)}
    rec_xy = np.array([[receivers[rid].x, receivers[rid].y] for rid in rec_ids])
    max_per = max(sum(1 for ld in mine if ld.receiver_id == rid) for rid in rec_ids)
    dist_table = np.full((len(rec_ids), max_per), np.inf)
    fill = {rid: 0 for rid in rec_ids}
    for ld in mine:
        k = rec_index[ld.receiver_id]
        dist_table[k, fill[ld.receiver_id]] = ld.distance
        fill[ld.receiver_id] += 1

    predicted = np.hypot(
        pos[:, 0, None] - rec_xy[None, :, 0], pos[:, 1, None] - rec_xy[None, :, 1]
    )  # (K, R)
    mismatch = np.abs(dist_table[None, :, :] - predicted[:, :, None])  # (K, R, max_per)
    best_slot = np.argmin(mismatch, axis=2)
    best_mismatch = np.take_along_axis(mismatch, best_slot[:, :, None], axis=2)[:, :, 0]
    included = best_mismatch <= window
    counts = included.sum(axis=1)
    capped_sum = np.sum(np.minimum(best_mismatch, window) ** 2, axis=1)
    denom = np.full(len(pos), len(rec_ids), dtype=float)
    required = np.full(len(pos), 3)
    if config.audible_range is not None:
        # A transmitter actually at the candidate position would be heard
        # by every receiver within audible range (minus a few masked by
        # aftershock).  In-range receivers that contributed no label are
        # negative evidence and pay the truncation penalty, and a
        # hypothesis explaining less than min_support_fraction of its
        # in-range receivers is a ghost.
        all_xy = np.array([[p.x, p.y] for p in receivers.values()])
        labeled_set = set(rec_ids)
        silent_xy = np.array(
            [[p.x, p.y] for rid, p in receivers.items() if rid not in labeled_set]
        )
        in_range = (
            np.hypot(pos[:, 0, None] - all_xy[None, :, 0], pos[:, 1, None] - all_xy[None, :, 1])
            <= config.audible_range
        ).sum(axis=1)
        required = np.maximum(
            required, np.ceil(config.min_support_fraction * in_range).astype(int)
        )
        if silent_xy.size:
            silent_in_range = (
                np.hypot(
                    pos[:, 0, None] - silent_xy[None, :, 0],
                    pos[:, 1, None] - silent_xy[None, :, 1],
                )
                <= config.audible_range
            ).sum(axis=1)
            capped_sum += silent_in_range * window**2
            denom += silent_in_range
    residue = capped_sum / denom
    residue = np.where(valid & (counts >= required), residue, np.inf)

    order = sorted(
        (k for k in range(len(residue)) if np.isfinite(residue[k])),
        key=lambda k: (residue[k], k),
    )
    chosen = order[: config.n_candidates]

    out: list[CandidatePosition] = []
    for k in chosen:
        support = []
        for rnum, rid in enumerate(rec_ids):
            if included[k, rnum]:
                support.append((rid, float(dist_table[rnum, best_slot[k, rnum]])))
        out.append(
            CandidatePosition(
                target_id=target_id,
                position=Point2D(float(pos[k, 0]), float(pos[k, 1])),
                residue=float(residue[k]),
                support=tuple(support),
            )
        )
    return out
