"""Slot-by-slot experiment loop, metrics, presets, artifact IO, and replay.

One experiment wires the pieces together per scheduling round: the slot
scheduler partitions targets by current estimates, the scenario advances
the random walk and produces anonymous distances for each slot's
transmitters, the locator labels and trilaterates candidates, and the
per-target track filters emit position estimates.  Everything downstream
of the scenario is deterministic, which is what makes the ``replay``
entry point (re-running the locator on recorded distance logs) reproduce
a live run exactly.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import Point2D, distance
from .locating import LabeledDistance, LocatorConfig, generate_candidates, label_distances
from .scenario import (
    AnonymousDistanceSet,
    GroundTruth,
    ScenarioConfig,
    build_receivers,
    init_motion,
    measure_slot,
    step_motion,
)
from .scheduling import build_schedule
from .tracking import TargetTracker

LOCATED = "located"
PREDICTED = "predicted"


@dataclass
class ExperimentPreset:
    """A named experiment configuration plus pipeline knobs."""

    name: str
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    n_slots: int = 600
    tracks_per_target: int = 5  # l
    n_candidates: int = 5  # retained hypotheses per target per slot
    max_combinations: int = 200
    v_e: float | None = None  # per-slot displacement bound; None derives it
    d_s: float | None = None  # scheduler separation; None derives it
    coast_limit: int = 5
    floor_std: float = 0.05
    arena_margin: float = 0.5

    def effective_v_e(self) -> float:
        """Per-slot displacement bound: explicit, or speed_mean + 4 sigma
        over one slot (the motion model clips speeds at that bound)."""
        if self.v_e is not None:
            return self.v_e
        s = self.scenario
        return (s.speed_mean + 4.0 * s.speed_std) * s.slot_length

    def effective_d_s(self) -> float:
        """Scheduler separation: explicit, or the larger of twice the
        confident separation distance (pairwise detectability margin) and
        four per-slot displacement bounds (labeling disambiguation)."""
        if self.d_s is not None:
            return self.d_s
        return max(2.0 * self.scenario.acoustic.omega, 4.0 * self.effective_v_e())

    def validate(self) -> None:
        self.scenario.validate()
        if self.n_slots < 1:
            raise ValueError(f"n_slots: must be >= 1, got {self.n_slots}")
        if self.tracks_per_target < 1:
            raise ValueError(f"tracks_per_target: must be >= 1, got {self.tracks_per_target}")
        if self.n_candidates < 1:
            raise ValueError(f"n_candidates: must be >= 1, got {self.n_candidates}")
        if self.coast_limit < 1:
            raise ValueError(f"coast_limit: must be >= 1, got {self.coast_limit}")


@dataclass(frozen=True)
class EstimateRow:
    slot: int
    target_id: int
    x: float
    y: float
    flag: str


@dataclass
class MetricsReport:
    """Run-level metrics: sorted locating errors, scheduling efficiency,
    and coasting statistics."""

    errors: np.ndarray  # sorted, located slots only
    quantiles: dict[str, float]
    efficiency: float  # mean concurrent targets per slot
    predicted_fraction: float
    lost_events: int
    n_slots: int
    n_rounds: int


def compute_error_cdf(
    estimates: Sequence[EstimateRow], truth: GroundTruth
) -> np.ndarray:
    """Sorted located-slot errors (the empirical CDF sample set).

    Estimates are matched to ground truth by (slot, target_id); a located
    estimate without a truth row is an alignment error.
    """
    errs = []
    for row in estimates:
        if row.flag != LOCATED:
            continue
        if (row.slot, row.target_id) not in truth:
            raise ValueError(
                f"alignment: no ground truth for slot={row.slot} target={row.target_id}"
            )
        true_pos = truth.position(row.slot, row.target_id)
        errs.append(math.hypot(row.x - true_pos.x, row.y - true_pos.y))
    return np.sort(np.asarray(errs))


def quantile_summary(errors: np.ndarray) -> dict[str, float]:
    if errors.size == 0:
        return {"p50": math.nan, "p90": math.nan, "p99": math.nan}
    return {
        "p50": float(np.quantile(errors, 0.50)),
        "p90": float(np.quantile(errors, 0.90)),
        "p99": float(np.quantile(errors, 0.99)),
    }


def compute_efficiency(schedule_log: Sequence[Sequence[int]]) -> float:
    """Mean number of concurrently scheduled targets per slot."""
    if not schedule_log:
        raise ValueError("schedule_log must be non-empty")
    return sum(len(group) for group in schedule_log) / len(schedule_log)


class ChorusPipeline:
    """Locating + tracking state shared by live runs and replay.

    Feeding the same slot/group/distance sequence produces the same
    estimates: nothing in here draws randomness.
    """

    def __init__(self, receivers: Sequence[tuple[int, Point2D]], preset: ExperimentPreset):
        self.receivers = {rid: pos for rid, pos in receivers}
        self.preset = preset
        self.v_e = preset.effective_v_e()
        self.arena = (0.0, 0.0, preset.scenario.arena_width, preset.scenario.arena_height)
        self.trackers: dict[int, TargetTracker] = {}
        self.last_slot: dict[int, int] = {}
        self.last_exclusive_attempt: dict[int, int] = {}
        self.weak_streak: dict[int, int] = {}
        self.lost_events = 0

    def _locator_config(self, v_e: float) -> LocatorConfig:
        # The labeling window and displacement gate widen with the elapsed
        # slots; the residue window tracks ranging uncertainty instead
        # (the one-sided noise bound plus slack for solution jitter).
        noise = self.preset.scenario.noise_max_offset
        return LocatorConfig(
            v_e=v_e,
            n_candidates=self.preset.n_candidates,
            max_combinations=self.preset.max_combinations,
            arena=self.arena,
            arena_margin=self.preset.arena_margin,
            residue_window=noise + 0.02,
            audible_range=self.preset.scenario.acoustic.r,
        )

    def needs_exclusive(self, target_id: int) -> bool:
        tracker = self.trackers.get(target_id)
        return tracker is None or tracker.lost

    def known_positions(self) -> dict[int, Point2D]:
        return {
            tid: tr.estimate for tid, tr in self.trackers.items() if not tr.lost
        }

    def unknown_targets(self) -> list[int]:
        n = self.preset.scenario.n_targets
        return [tid for tid in range(n) if self.needs_exclusive(tid)]

    def process_slot(
        self, slot: int, group: Sequence[int], distance_sets: Sequence[AnonymousDistanceSet]
    ) -> list[EstimateRow]:
        rows: list[EstimateRow] = []
        for tid in sorted(group):
            if self.needs_exclusive(tid):
                row = self._process_exclusive(slot, tid, distance_sets)
            else:
                row = self._process_chorus(slot, tid, distance_sets)
            if row is not None:
                rows.append(row)
        return rows

    def next_exclusive(self) -> list[int]:
        """The unknown/lost target next in line for an exclusive slot
        (least recently attempted), or empty when everyone is tracked."""
        unknowns = self.unknown_targets()
        if not unknowns:
            return []
        return [min(unknowns, key=lambda t: (self.last_exclusive_attempt.get(t, -1), t))]

    def _process_exclusive(
        self, slot: int, tid: int, distance_sets: Sequence[AnonymousDistanceSet]
    ) -> EstimateRow | None:
        self.last_exclusive_attempt[tid] = slot
        # The target transmits alone, so every measured distance is
        # implicitly its own; no motion gate applies.
        labeled = [
            LabeledDistance(ds.receiver_id, d, frozenset({tid}))
            for ds in distance_sets
            for d in ds.distances
        ]
        cfg = self._locator_config(self.v_e)
        cands = generate_candidates(labeled, tid, self.receivers, cfg, prev_position=None)
        if not cands:
            return None  # still unknown; the scheduler retries next round
        best = cands[0]
        tracker = self.trackers.get(tid)
        if tracker is None:
            self.trackers[tid] = TargetTracker(
                tid,
                best.position,
                l=self.preset.tracks_per_target,
                v_e=self.v_e,
                floor_std=self.preset.floor_std,
                coast_limit=self.preset.coast_limit,
            )
        else:
            tracker.reacquire(best.position)
        self.last_slot[tid] = slot
        return EstimateRow(slot, tid, best.position.x, best.position.y, LOCATED)

    def _process_chorus(
        self, slot: int, tid: int, distance_sets: Sequence[AnonymousDistanceSet]
    ) -> EstimateRow:
        tracker = self.trackers[tid]
        gap = max(1, slot - self.last_slot[tid])
        # A measured distance can differ from the prediction by the motion
        # bound plus the ranging offset, so the labeling window and
        # displacement gate widen with the known noise bound.  No wider:
        # every extra centimeter of window feeds mislabeled candidates.
        noise = self.preset.scenario.noise_max_offset
        cfg = self._locator_config(self.v_e * gap + noise)
        labeled = label_distances(
            distance_sets, {tid: tracker.estimate}, self.receivers, cfg
        )
        cands = generate_candidates(
            labeled, tid, self.receivers, cfg, prev_position=tracker.estimate
        )
        was_lost = tracker.lost
        result = tracker.step(cands, gap=gap)
        if result.located:
            self._watch_fix_quality(tid, tracker, result.best_candidate, cfg)
        if tracker.lost and not was_lost:
            self.lost_events += 1
        self.last_slot[tid] = slot
        est = result.estimate
        return EstimateRow(slot, tid, est.x, est.y, LOCATED if result.located else PREDICTED)

    # Fixes that barely clear the support gate round after round are the
    # signature of a track riding accidental coincidences instead of a
    # transmitter (a real one is heard comfortably above the gate), so a
    # streak of them forces reacquisition through an exclusive slot.
    _WEAK_MARGIN = 1
    _WEAK_STREAK_LIMIT = 3

    def _watch_fix_quality(self, tid, tracker, candidate, cfg) -> None:
        pos = candidate.position
        in_range = sum(
            1
            for p in self.receivers.values()
            if math.hypot(p.x - pos.x, p.y - pos.y) <= cfg.audible_range
        )
        required = max(3, math.ceil(cfg.min_support_fraction * in_range))
        if len(candidate.support) - required <= self._WEAK_MARGIN:
            self.weak_streak[tid] = self.weak_streak.get(tid, 0) + 1
        else:
            self.weak_streak[tid] = 0
        if self.weak_streak[tid] >= self._WEAK_STREAK_LIMIT:
            tracker.mark_lost()
            self.weak_streak[tid] = 0


@dataclass
class RunArtifacts:
    """Everything a run produces, before any files are written."""

    preset: ExperimentPreset
    seed: int
    receivers: list[tuple[int, Point2D]]
    truth: GroundTruth
    estimates: list[EstimateRow]
    schedule_log: list[tuple[int, int, tuple[int, ...]]]  # (round, slot, ids)
    distance_rows: list[tuple[int, int, float]]  # (slot, receiver_id, distance)
    report: MetricsReport


def run_experiment(
    preset: ExperimentPreset, seed: int | None = None, outdir: str | None = None
) -> RunArtifacts:
    """Run one experiment: exclusive bootstrap slots, then scheduled rounds.

    Deterministic for a fixed preset and seed.  When ``outdir`` is given,
    the artifact CSVs and ``summary.json`` are written there.
    """
    preset.validate()
    scenario = preset.scenario if seed is None else replace(preset.scenario, seed=seed)
    actual_seed = scenario.seed
    ss = np.random.SeedSequence(actual_seed)
    receiver_rng, motion_rng, noise_rng = (np.random.default_rng(c) for c in ss.spawn(3))

    receivers = build_receivers(scenario, receiver_rng)
    state = init_motion(scenario, motion_rng)
    positions = state.positions()
    pipeline = ChorusPipeline(receivers, replace(preset, scenario=scenario))
    truth = GroundTruth()
    estimates: list[EstimateRow] = []
    schedule_log: list[tuple[int, int, tuple[int, ...]]] = []
    distance_rows: list[tuple[int, int, float]] = []

    slot = 0
    round_idx = 0
    while slot < preset.n_slots:
        # Admit one unknown/lost target per round.  Location estimates go
        # stale while a target waits for its turn to transmit, so running
        # all n bootstrap slots back to back would leave the first
        # acquisitions n slots old by the first shared slot; staggering
        # keeps every tracked target's staleness bounded by one round.
        schedule = build_schedule(
            pipeline.known_positions(), pipeline.next_exclusive(), preset.effective_d_s()
        )
        for group in schedule.slots:
            if slot >= preset.n_slots:
                break
            truth.record(slot, positions)
            schedule_log.append((round_idx, slot, tuple(group)))
            scheduled = {tid: positions[tid] for tid in group}
            dsets = measure_slot(scheduled, receivers, scenario, slot, noise_rng)
            for ds in dsets:
                for d in ds.distances:
                    distance_rows.append((slot, ds.receiver_id, d))
            estimates.extend(pipeline.process_slot(slot, group, dsets))
            positions = step_motion(state, scenario)
            slot += 1
        round_idx += 1

    errors = compute_error_cdf(estimates, truth)
    n_rows = len(estimates)
    predicted = sum(1 for r in estimates if r.flag == PREDICTED)
    report = MetricsReport(
        errors=errors,
        quantiles=quantile_summary(errors),
        efficiency=compute_efficiency([g for _, _, g in schedule_log]),
        predicted_fraction=predicted / n_rows if n_rows else 0.0,
        lost_events=pipeline.lost_events,
        n_slots=preset.n_slots,
        n_rounds=round_idx,
    )
    artifacts = RunArtifacts(
        preset=preset,
        seed=actual_seed,
        receivers=receivers,
        truth=truth,
        estimates=estimates,
        schedule_log=schedule_log,
        distance_rows=distance_rows,
        report=report,
    )
    if outdir is not None:
        write_artifacts(artifacts, outdir)
    return artifacts


# ---------------------------------------------------------------------------
# Artifact files


def write_artifacts(artifacts: RunArtifacts, outdir: str) -> None:
    os.makedirs(outdir, exist_ok=True)
    truth_rows = artifacts.truth.rows
    _write_csv(
        os.path.join(outdir, "truth.csv"),
        ["slot", "target_id", "x", "y"],
        [(s, t, repr(x), repr(y)) for s, t, x, y in truth_rows],
    )
    _write_csv(
        os.path.join(outdir, "estimates.csv"),
        ["slot", "target_id", "x", "y", "flag"],
        [(r.slot, r.target_id, repr(r.x), repr(r.y), r.flag) for r in artifacts.estimates],
    )
    error_rows = []
    for r in artifacts.estimates:
        if r.flag != LOCATED:
            continue
        tp = artifacts.truth.position(r.slot, r.target_id)
        error_rows.append((r.slot, r.target_id, repr(math.hypot(r.x - tp.x, r.y - tp.y))))
    _write_csv(os.path.join(outdir, "errors.csv"), ["slot", "target_id", "error"], error_rows)
    _write_csv(
        os.path.join(outdir, "schedule.csv"),
        ["round", "slot_index", "target_ids"],
        [(rnd, s, ";".join(str(t) for t in ids)) for rnd, s, ids in artifacts.schedule_log],
    )
    _write_csv(
        os.path.join(outdir, "distances.csv"),
        ["slot", "receiver_id", "distance"],
        [(s, rid, repr(d)) for s, rid, d in artifacts.distance_rows],
    )
    _write_csv(
        os.path.join(outdir, "receivers.csv"),
        ["receiver_id", "x", "y"],
        [(rid, repr(p.x), repr(p.y)) for rid, p in artifacts.receivers],
    )
    rep = artifacts.report
    summary = {
        "preset": artifacts.preset.name,
        "seed": artifacts.seed,
        "n_slots": rep.n_slots,
        "n_rounds": rep.n_rounds,
        "located_slots": int(rep.errors.size),
        "quantiles": rep.quantiles,
        "efficiency": rep.efficiency,
        "predicted_fraction": rep.predicted_fraction,
        "lost_events": rep.lost_events,
        "d_s": artifacts.preset.effective_d_s(),
        "v_e": artifacts.preset.effective_v_e(),
    }
    with open(os.path.join(outdir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header: list[str], rows: Iterable[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Replay from recorded logs


def replay(
    distances_path: str,
    schedule_path: str,
    receivers_path: str,
    preset: ExperimentPreset,
) -> list[EstimateRow]:
    """Re-run locating + tracking on recorded distance and schedule logs.

    The pipeline is randomness-free, so replaying a live run's logs with
    the same preset reproduces its estimates exactly.  This is also the
    ingestion path for externally recorded measurements.
    """
    receivers: list[tuple[int, Point2D]] = []
    with open(receivers_path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            receivers.append(
                (int(rec["receiver_id"]), Point2D(float(rec["x"]), float(rec["y"])))
            )
    slot_groups: list[tuple[int, tuple[int, ...]]] = []
    with open(schedule_path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            ids = tuple(int(t) for t in rec["target_ids"].split(";") if t != "")
            slot_groups.append((int(rec["slot_index"]), ids))
    slot_groups.sort()
    by_slot: dict[int, dict[int, list[float]]] = {}
    with open(distances_path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            slot = int(rec["slot"])
            rid = int(rec["receiver_id"])
            by_slot.setdefault(slot, {}).setdefault(rid, []).append(float(rec["distance"]))

    pipeline = ChorusPipeline(receivers, preset)
    estimates: list[EstimateRow] = []
    for slot, group in slot_groups:
        dsets = [
            AnonymousDistanceSet(receiver_id=rid, slot_index=slot, distances=tuple(ds))
            for rid, ds in by_slot.get(slot, {}).items()
        ]
        estimates.extend(pipeline.process_slot(slot, group, dsets))
    return estimates


# ---------------------------------------------------------------------------
# Presets and sweeps


def make_preset(name: str = "baseline", **overrides) -> ExperimentPreset:
    """Named presets; keyword overrides patch the scenario or preset fields."""
    if name == "baseline":
        preset = ExperimentPreset(name=name)
    elif name == "single-static":
        preset = ExperimentPreset(
            name=name,
            scenario=ScenarioConfig(n_targets=1, speed_mean=0.0, speed_std=0.0),
            n_slots=100,
        )
    else:
        raise ValueError(f"unknown preset: {name!r} (choose from: baseline, single-static)")
    scen_fields = set(ScenarioConfig.__dataclass_fields__)
    preset_fields = set(ExperimentPreset.__dataclass_fields__) - {"name", "scenario"}
    for key, value in overrides.items():
        if key in scen_fields:
            preset.scenario = replace(preset.scenario, **{key: value})
        elif key in preset_fields:
            setattr(preset, key, value)
        elif key in ("omega", "r", "v_u"):
            preset.scenario = replace(
                preset.scenario, acoustic=replace(preset.scenario.acoustic, **{key: value, "l_max": None})
            )
        else:
            raise ValueError(f"unknown preset override: {key!r}")
    return preset


def run_sweep(
    param: str,
    values: Sequence[float],
    seeds: Sequence[int],
    base: ExperimentPreset | None = None,
) -> dict:
    """Run a grid over one swept parameter x seeds and aggregate metrics.

    ``param`` is "omega" (confident separation distance, meters) or
    "noise" (max ranging offset l_o, meters).
    """
    if param not in ("omega", "noise"):
        raise ValueError(f"param: must be 'omega' or 'noise', got {param!r}")
    runs = []
    for value in values:
        for seed in seeds:
            if base is None:
                preset = make_preset("baseline")
            else:
                preset = replace(base, scenario=replace(base.scenario))
            if param == "omega":
                preset.scenario = replace(
                    preset.scenario,
                    acoustic=replace(preset.scenario.acoustic, omega=value, l_max=None),
                )
            else:
                preset.scenario = replace(preset.scenario, noise_max_offset=value)
            art = run_experiment(preset, seed=seed)
            runs.append(
                {
                    "param": param,
                    "value": value,
                    "seed": seed,
                    "quantiles": art.report.quantiles,
                    "efficiency": art.report.efficiency,
                    "predicted_fraction": art.report.predicted_fraction,
                    "lost_events": art.report.lost_events,
                    "errors": art.report.errors,
                }
            )
    aggregated = []
    for value in values:
        subset = [r for r in runs if r["value"] == value]
        pooled = np.sort(np.concatenate([r["errors"] for r in subset]))
        aggregated.append(
            {
                "value": value,
                "pooled_quantiles": quantile_summary(pooled),
                "mean_efficiency": float(np.mean([r["efficiency"] for r in subset])),
                "mean_predicted_fraction": float(
                    np.mean([r["predicted_fraction"] for r in subset])
                ),
                "total_lost_events": int(sum(r["lost_events"] for r in subset)),
            }
        )
    for r in runs:
        r["errors"] = None  # keep the returned structure JSON-friendly
    return {"param": param, "values": list(values), "runs": runs, "aggregated": aggregated}
