"""Command-line front end: run, sweep, analyze, replay."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace

import numpy as np

from .feasibility import (
    DeploymentModel,
    prob_three_receivers_lb,
    solve_separation_distance,
    symmetric_union_blind_area,
    tdr_lower_bound_area,
)
from .geometry import AcousticParams, Point2D, blind_region_area
from .harness import (
    ExperimentPreset,
    make_preset,
    replay,
    run_experiment,
    run_sweep,
    write_artifacts,
)
from .scenario import ScenarioConfig


def _load_config_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _preset_from_args(args: argparse.Namespace) -> ExperimentPreset:
    overrides: dict = {}
    if getattr(args, "config", None):
        raw = _load_config_file(args.config)
        acoustic = raw.pop("acoustic", None)
        overrides.update(raw)
        if acoustic:
            for key in ("r", "omega", "v_u"):
                if key in acoustic:
                    overrides[key] = acoustic[key]
    flag_map = {
        "n_targets": "n_targets",
        "slots": "n_slots",
        "omega": "omega",
        "audible_range": "r",
        "ultrasound_speed": "v_u",
        "noise_max_offset": "noise_max_offset",
        "grid_spacing": "receiver_grid_spacing",
        "slot_length": "slot_length",
        "arena_width": "arena_width",
        "arena_height": "arena_height",
        "d_s": "d_s",
        "v_e": "v_e",
        "tracks_per_target": "tracks_per_target",
        "n_candidates": "n_candidates",
        "coast_limit": "coast_limit",
        "speed_mean": "speed_mean",
        "speed_std": "speed_std",
        "turn_interval": "turn_interval",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    try:
        preset = make_preset(getattr(args, "preset", "baseline") or "baseline", **overrides)
        preset.validate()
    except (ValueError, TypeError) as exc:
        raise SystemExit(f"config error: {exc}") from exc
    return preset


def _add_common_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flat snake_case scenario/pipeline keys)")
    p.add_argument("--preset", default="baseline", help="preset name (baseline, single-static)")
    p.add_argument("--n-targets", dest="n_targets", type=int)
    p.add_argument("--slots", type=int, help="number of time slots to simulate")
    p.add_argument("--omega", type=float, help="confident separation distance, meters")
    p.add_argument("--audible-range", dest="audible_range", type=float)
    p.add_argument("--ultrasound-speed", dest="ultrasound_speed", type=float)
    p.add_argument("--noise-max-offset", dest="noise_max_offset", type=float)
    p.add_argument("--grid-spacing", dest="grid_spacing", type=float)
    p.add_argument("--slot-length", dest="slot_length", type=float)
    p.add_argument("--arena-width", dest="arena_width", type=float)
    p.add_argument("--arena-height", dest="arena_height", type=float)
    p.add_argument("--speed-mean", dest="speed_mean", type=float)
    p.add_argument("--speed-std", dest="speed_std", type=float)
    p.add_argument("--turn-interval", dest="turn_interval", type=float)
    p.add_argument("--d-s", dest="d_s", type=float, help="scheduler separation distance")
    p.add_argument("--v-e", dest="v_e", type=float, help="per-slot displacement bound")
    p.add_argument("--tracks-per-target", dest="tracks_per_target", type=int)
    p.add_argument("--n-candidates", dest="n_candidates", type=int)
    p.add_argument("--coast-limit", dest="coast_limit", type=int)


def _cmd_run(args: argparse.Namespace) -> int:
    preset = _preset_from_args(args)
    art = run_experiment(preset, seed=args.seed, outdir=args.out)
    rep = art.report
    print(f"preset={preset.name} seed={args.seed} slots={rep.n_slots} rounds={rep.n_rounds}")
    print(
        f"errors: p50={rep.quantiles['p50']:.6f} p90={rep.quantiles['p90']:.6f} "
        f"p99={rep.quantiles['p99']:.6f} (m, {rep.errors.size} located slots)"
    )
    print(
        f"efficiency={rep.efficiency:.3f} targets/slot  "
        f"predicted_fraction={rep.predicted_fraction:.4f}  lost_events={rep.lost_events}"
    )
    if args.out:
        print(f"artifacts written to {args.out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    preset = _preset_from_args(args)
    seeds = [args.base_seed + i for i in range(args.seeds)]
    result = run_sweep(args.param, args.values, seeds, base=preset)
    for agg in result["aggregated"]:
        q = agg["pooled_quantiles"]
        print(
            f"{args.param}={agg['value']:g}: p50={q['p50']:.6f} p90={q['p90']:.6f} "
            f"p99={q['p99']:.6f} efficiency={agg['mean_efficiency']:.3f} "
            f"lost={agg['total_lost_events']}"
        )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"sweep summary written to {args.out}")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    params = AcousticParams(r=args.audible_range, omega=args.omega)
    out = sys.stdout if args.out is None else open(args.out, "w", encoding="utf-8")
    try:
        if args.table == "blind":
            print("d_ab,area", file=out)
            d = args.d_min
            while d <= args.d_max + 1e-12:
                print(f"{d:.6f},{blind_region_area(d, params):.9f}", file=out)
                d += args.step
        elif args.table == "union":
            print("k,d,union_area", file=out)
            for k in range(2, 8):
                area = symmetric_union_blind_area(
                    k, args.separation, params, samples=args.samples, seed=args.seed
                )
                print(f"{k},{args.separation:.6f},{area:.9f}", file=out)
        elif args.table == "coverage":
            print("lambda,d,tdr_lb_area,prob_lb", file=out)
            for lam in np.linspace(args.lambda_min, args.lambda_max, args.lambda_steps):
                for d in np.linspace(args.d_min, args.d_max, args.d_steps):
                    model = DeploymentModel(float(lam), float(d))
                    print(
                        f"{lam:.6f},{d:.6f},{tdr_lower_bound_area(float(d)):.9f},"
                        f"{prob_three_receivers_lb(model):.9f}",
                        file=out,
                    )
        elif args.table == "separation":
            d_s = solve_separation_distance(args.intensity, args.target_prob)
            print("lambda,target_prob,d_s", file=out)
            print(f"{args.intensity:.6f},{args.target_prob:.6f},{d_s:.4f}", file=out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    preset = _preset_from_args(args)
    rows = replay(args.distances, args.schedule, args.receivers, preset)
    out = sys.stdout if args.out is None else open(args.out, "w", encoding="utf-8")
    try:
        print("slot,target_id,x,y,flag", file=out)
        for r in rows:
            print(f"{r.slot},{r.target_id},{r.x!r},{r.y!r},{r.flag}", file=out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chorusloc",
        description=(
            "Simulate and analyze concurrent (chorus-mode) narrowband-ultrasound "
            "multi-target locating."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_common_overrides(p_run)
    p_run.add_argument("--seed", type=int, required=True, help="scenario seed (required)")
    p_run.add_argument("--out", help="directory for CSV/JSON artifacts")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep omega or ranging noise over seeds")
    _add_common_overrides(p_sweep)
    p_sweep.add_argument("--param", choices=["omega", "noise"], required=True)
    p_sweep.add_argument("--values", type=float, nargs="+", required=True)
    p_sweep.add_argument("--seeds", type=int, default=10, help="number of seeds per value")
    p_sweep.add_argument("--base-seed", dest="base_seed", type=int, default=0)
    p_sweep.add_argument("--out", help="path for the sweep summary JSON")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_an = sub.add_parser("analyze", help="emit masking-area and coverage tables")
    p_an.add_argument("--table", choices=["blind", "union", "coverage", "separation"], required=True)
    p_an.add_argument("--audible-range", dest="audible_range", type=float, default=3.0)
    p_an.add_argument("--omega", type=float, default=0.33)
    p_an.add_argument("--d-min", dest="d_min", type=float, default=0.0)
    p_an.add_argument("--d-max", dest="d_max", type=float, default=7.0)
    p_an.add_argument("--step", type=float, default=0.05)
    p_an.add_argument("--separation", type=float, default=1.0, help="ring radius for --table union")
    p_an.add_argument("--samples", type=int, default=1_000_000)
    p_an.add_argument("--seed", type=int, default=0)
    p_an.add_argument("--lambda-min", dest="lambda_min", type=float, default=0.05)
    p_an.add_argument("--lambda-max", dest="lambda_max", type=float, default=1.0)
    p_an.add_argument("--lambda-steps", dest="lambda_steps", type=int, default=5)
    p_an.add_argument("--d-steps", dest="d_steps", type=int, default=8)
    p_an.add_argument("--intensity", type=float, default=0.25, help="receivers per m^2")
    p_an.add_argument("--target-prob", dest="target_prob", type=float, default=0.99)
    p_an.add_argument("--out", help="output file (default stdout)")
    p_an.set_defaults(func=_cmd_analyze)

    p_rep = sub.add_parser("replay", help="re-run the locator on recorded distance logs")
    _add_common_overrides(p_rep)
    p_rep.add_argument("--distances", required=True, help="distances.csv from a recorded run")
    p_rep.add_argument("--schedule", required=True, help="schedule.csv from a recorded run")
    p_rep.add_argument("--receivers", required=True, help="receivers.csv from a recorded run")
    p_rep.add_argument("--out", help="output estimates CSV (default stdout)")
    p_rep.set_defaults(func=_cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
