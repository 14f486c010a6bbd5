"""Command-line entry point: run, eval, serve, validate."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .episode import (
    RunConfig,
    load_config_scenario,
    run_episode,
    simulate_perception,
    write_episode_log,
)
from .errors import ConfigError, IoError, SchemaError, SentinelError, ValidationError
from .fusion import PerceptionProduct
from .metrics import (
    MetricReport,
    detection_map,
    full_per_class,
    gt_record,
    match_detections,
    motion_vpq,
    bev_miou,
    sweep_table_text,
    tp_metrics,
)
from .sensing import SensorConfig, ground_truth_grid, occupancy_mask
from .sweeps import (
    build_suite_traces,
    mean_good_pct,
    run_intensity_sweep,
    run_renewal_sweep,
)
from .v2x import ChannelModel
from .world import load_scenario

NOISELESS_SENSOR = SensorConfig(
    sigma_pos_base_m=0.0, sigma_pos_range_coeff=0.0, sigma_yaw_rad=0.0,
    drop_prob=0.0, false_pos_rate_per_frame=0.0,
)
NOISELESS_CHANNEL = ChannelModel(latency_base_s=0.0, latency_jitter_s=0.0, drop_prob=0.0)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--scenario", required=True, help="bundled scenario name or JSON path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threshold", type=float, default=0.4)
    p.add_argument("--llm", default="mock", help="'mock' or 'http:<endpoint>'")
    p.add_argument("--renewal-rate", type=float, default=0.5)
    p.add_argument("--level", default="Middle", choices=["Mini", "Middle", "High"])
    p.add_argument("--out", default="out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sentinel")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one episode end to end")
    _add_common(run_p)

    eval_p = sub.add_parser("eval", help="perception metrics or sweep tables")
    eval_p.add_argument("--mode", choices=["perception", "sweeps"], required=True)
    eval_p.add_argument("--scenario", default=None)
    eval_p.add_argument("--seed", type=int, default=None)
    eval_p.add_argument("--noiseless", action="store_true")
    eval_p.add_argument("--out", default="out")

    serve_p = sub.add_parser("serve", help="host a live session API")
    _add_common(serve_p)
    serve_p.add_argument("--port", type=int, default=8732)
    serve_p.add_argument("--pace", type=float, default=1.0,
                         help="simulation speed multiple of real time")

    val_p = sub.add_parser("validate", help="check a scenario document")
    val_p.add_argument("--scenario", required=True)
    return parser


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        scenario=args.scenario,
        seed=args.seed,
        threshold=args.threshold,
        llm=args.llm,
        out_dir=args.out,
        renewal_rate=args.renewal_rate,
        level=args.level,
    )


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    result = run_episode(cfg)
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, f"{result.scenario_id}-s{result.seed}.log.ndjson")
    write_episode_log(result, cfg, log_path)
    print(f"episode {result.scenario_id}: "
          f"{'collision' if result.collision else 'clean'}, "
          f"{len(result.alerts)} alert(s), log at {log_path}")
    return result.exit_code


def perception_report(scenario_name: str, seed: int | None, noiseless: bool,
                      vpq_stride: int = 10) -> MetricReport:
    cfg = RunConfig(scenario=scenario_name, seed=seed)
    scenario = load_config_scenario(cfg)
    trace = simulate_perception(
        scenario, seed,
        channel_model=NOISELESS_CHANNEL if noiseless else None,
        sensor_overrides=NOISELESS_SENSOR if noiseless else None,
    )
    states = {tr.tick: tr.gt_actors for tr in trace.ticks}
    preds, gts = [], []
    miou_vals = []
    vpq_pred_frames, vpq_gt_frames = [], []
    seen: set[int] = set()
    for tr in trace.ticks:
        product: PerceptionProduct | None = tr.product
        if product is None or product.tick in seen:
            continue
        seen.add(product.tick)
        actors = states.get(product.tick)
        if actors is None:
            continue
        tick_gts = [gt_record(a) for a in actors]
        preds.extend(product.detections)
        gts.extend(tick_gts)
        spec = product.fused_grid.spec
        gt_grid = ground_truth_grid([a.footprint for a in actors], spec, product.tick)
        miou_vals.append(bev_miou(product.fused_grid, gt_grid))
        if product.tick % vpq_stride == 0:
            # instance masks exist only inside the raster; off-grid objects
            # are peripheral and not part of the BEV instance metric
            pred_masks = {
                i: occupancy_mask(d.footprint, spec)
                for i, d in enumerate(product.detections)
            }
            gt_masks = {
                i: occupancy_mask(a.footprint, spec)
                for i, a in enumerate(actors)
            }
            vpq_pred_frames.append({k: m for k, m in pred_masks.items() if m.any()})
            vpq_gt_frames.append({k: m for k, m in gt_masks.items() if m.any()})

    match = match_detections(preds, gts)
    return MetricReport(
        detection_map=detection_map(preds, gts),
        per_class=full_per_class(tp_metrics(match, preds, gts)),
        bev_miou=sum(miou_vals) / len(miou_vals) if miou_vals else 1.0,
        motion_vpq=motion_vpq(vpq_pred_frames, vpq_gt_frames),
    )


def cmd_eval(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.mode == "perception":
        if not args.scenario:
            raise ConfigError("perception mode needs --scenario")
        report = perception_report(args.scenario, args.seed, args.noiseless)
        json_path = os.path.join(args.out, "perception_report.json")
        txt_path = os.path.join(args.out, "perception_report.txt")
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(report.to_json(), f, indent=2, sort_keys=True)
        with open(txt_path, "w", encoding="utf-8") as f:
            f.write(report.to_text() + "\n")
        print(report.to_text())
        print(f"written: {json_path}, {txt_path}")
        return 0

    traces = build_suite_traces(seed=args.seed)
    renewal = run_renewal_sweep(traces=traces)
    intensity = run_intensity_sweep(traces=traces)
    for name, tables in (("renewal_sweep", renewal), ("intensity_sweep", intensity)):
        with open(os.path.join(args.out, f"{name}.json"), "w", encoding="utf-8") as f:
            json.dump(tables, f, indent=2, sort_keys=True)
        with open(os.path.join(args.out, f"{name}.txt"), "w", encoding="utf-8") as f:
            f.write(sweep_table_text(name.replace("_", " "), tables) + "\n")
    print(sweep_table_text("renewal sweep", renewal))
    print()
    print(sweep_table_text("intensity sweep", intensity))
    for label, tables in (("renewal", renewal), ("intensity", intensity)):
        means = {k: round(mean_good_pct(t), 2) for k, t in tables.items()}
        print(f"mean Good% by {label} setting: {means}")
    return 0


def cmd_serve(args) -> int:
    from .server import serve_session

    cfg = _config_from_args(args)
    serve_session(cfg, port=args.port, pace=args.pace)
    return 0


def cmd_validate(args) -> int:
    path = args.scenario
    try:
        if os.path.exists(path):
            with open(path, encoding="utf-8") as f:
                load_scenario(f.read())
        else:
            from .world import bundled_scenario

            bundled_scenario(path)
    except (SchemaError, ValidationError, FileNotFoundError) as e:
        print(f"invalid: {e}", file=sys.stderr)
        return 1
    print("ok")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "eval": cmd_eval,
        "serve": cmd_serve,
        "validate": cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, IoError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SentinelError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
