"""Command-line entry point.

Subcommands: ``simulate`` (episodes -> trace + metrics CSV), ``train``
(stage checkpoints + JSONL log), ``heatmap`` (critic safety PGM), and
``frontier-debug`` (scored candidate tables per exploration cycle).  Every
command is deterministic under --seed and writes a manifest describing its
inputs and artifact hashes.  Exit codes: 0 ok, 1 episode-level failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

log = logging.getLogger("navstack")

EXIT_OK = 0
EXIT_EPISODE_FAILURE = 1
EXIT_USAGE = 2


class UsageError(RuntimeError):
    pass


def _load_scenario_arg(value: str, seed: int | None):
    from .scenarios import BUILTIN_NAMES, load_scenario, make_scenario

    if value in BUILTIN_NAMES:
        return make_scenario(value, seed if seed is not None else 0)
    path = Path(value)
    if not path.exists():
        raise UsageError(f"scenario {value!r} is neither a built-in name nor a file")
    spec = load_scenario(path)
    if seed is not None:
        spec = replace(spec, seed=seed)
    return spec


def _load_policy_arg(value: str):
    from .policy import load_bundle
    from .scripted import scripted_bundle

    if value == "scripted":
        return scripted_bundle()
    path = Path(value)
    if not path.exists():
        raise UsageError(f"bundle file {value!r} does not exist")
    return load_bundle(path)


def _write_manifest(out_dir: Path, args: argparse.Namespace, files: list[Path]) -> None:
    from .fileio import json_text, sha256_file

    doc = {
        "schema": 1,
        "command": vars(args)["command"],
        "arguments": {
            k: (str(v) if isinstance(v, Path) else v)
            for k, v in sorted(vars(args).items())
            if k not in ("func",)
        },
        "artifacts": {f.name: sha256_file(f) for f in sorted(files)},
    }
    (out_dir / "manifest.json").write_text(json_text(doc) + "\n")


def _ensure_out(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args: argparse.Namespace) -> int:
    from .fileio import write_csv
    from .rewards import METRICS_CSV_HEADER, metrics_csv_row
    from .stack import StackConfig, episode_seed, run_episode_job

    spec = _load_scenario_arg(args.scenario, args.seed)
    policy = _load_policy_arg(args.bundle)
    cfg = StackConfig(mode=args.mode, gamma=args.gamma, timeout=args.timeout)
    out = _ensure_out(args.out)

    jobs = []
    seeds = []
    files = []
    for ei in range(args.episodes):
        sd = episode_seed(args.seed if args.seed is not None else spec.seed, 0, ei)
        trace_path = out / f"trace-{ei:04d}.jsonl"
        jobs.append((replace(spec, seed=sd), policy, cfg, None, trace_path))
        seeds.append(sd)
        files.append(trace_path)
    if args.jobs > 1 and len(jobs) > 1:
        import concurrent.futures

        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_episode_job, jobs))
    else:
        results = [run_episode_job(j) for j in jobs]

    rows = []
    failures = 0
    for sd, result in zip(seeds, results):
        rows.append(metrics_csv_row(spec.name, sd, result.metrics))
        if result.outcome != "success":
            failures += 1
        log.info("seed %d: %s in %.1fs", sd, result.outcome, result.sim_time)
    csv_path = out / "metrics.csv"
    write_csv(csv_path, METRICS_CSV_HEADER, rows)
    files.append(csv_path)
    _write_manifest(out, args, files)
    print(f"{args.episodes} episode(s), {args.episodes - failures} succeeded -> {csv_path}")
    return EXIT_OK if failures == 0 else EXIT_EPISODE_FAILURE


# ---------------------------------------------------------------------------
# train


def _train_config(args: argparse.Namespace):
    from .training import TrainConfig

    overrides = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {args.config!r} does not exist")
        overrides = json.loads(path.read_text())
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        return TrainConfig(**overrides)
    except TypeError as exc:
        raise UsageError(f"bad training config: {exc}") from exc


def cmd_train(args: argparse.Namespace) -> int:
    from .fileio import write_jsonl
    from .policy import (
        ObservationConfig,
        PolicyBundle,
        load_expert,
        save_bundle,
        save_expert,
    )
    from .scenarios import training_scenarios
    from .training import cotrain_fusion, train_expert

    cfg = _train_config(args)
    obs_cfg = ObservationConfig()
    out = _ensure_out(args.out)
    log_rows: list[dict] = []

    def on_gen(row: dict) -> None:
        log_rows.append(row)
        log.info("gen %d best %.3f mean %.3f", row["generation"], row["best_return"], row["mean_return"])

    files: list[Path] = []
    if args.stage in ("expert-gs", "expert-oa"):
        profile = "go-straight" if args.stage == "expert-gs" else "obstacle-avoidance"
        kind = "static" if args.stage == "expert-gs" else "dynamic"
        tasks = training_scenarios(kind, args.tasks, cfg.seed)
        params = train_expert(profile, tasks, cfg, obs_cfg, on_generation=on_gen)
        ckpt = out / f"{args.stage}.json"
        save_expert(params, profile, obs_cfg, ckpt)
        files.append(ckpt)
    else:  # fusion
        if not args.expert_gs or not args.expert_oa:
            raise UsageError("fusion stage requires --expert-gs and --expert-oa checkpoints")
        for p in (args.expert_gs, args.expert_oa):
            if not Path(p).exists():
                raise UsageError(f"expert checkpoint {p!r} does not exist")
        gs, _, obs_cfg = load_expert(args.expert_gs)
        oa, _, obs_b = load_expert(args.expert_oa)
        if obs_b != obs_cfg:
            raise UsageError("expert checkpoints disagree on the observation layout")
        mix = training_scenarios("families", args.tasks, cfg.seed)
        bank, gating, critic = cotrain_fusion(gs, oa, mix, cfg, obs_cfg, on_generation=on_gen)
        ckpt = out / "fusion-bundle.json"
        save_bundle(PolicyBundle(obs_cfg, bank, gating, critic), ckpt)
        files.append(ckpt)

    log_path = out / "train_log.jsonl"
    write_jsonl(log_path, log_rows)
    files.append(log_path)
    _write_manifest(out, args, files)
    print(f"stage {args.stage} done -> {files[0]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# heatmap


def cmd_heatmap(args: argparse.Namespace) -> int:
    from . import world as sim
    from .policy import build_observation, safety_heatmap

    bundle = _load_policy_arg(args.bundle)
    if not hasattr(bundle, "critic"):
        raise UsageError("heatmap needs a trained bundle with a critic")
    spec = _load_scenario_arg(args.scenario, args.seed)
    try:
        x, y, th = (float(v) for v in args.pose.split(","))
    except ValueError as exc:
        raise UsageError("--pose must be x,y,theta") from exc
    spec = replace(spec, robot_start=(x, y, th))
    world = sim.spawn(spec)
    obs_cfg = bundle.obs_config
    scan = sim.raycast(world, obs_cfg.beams, obs_cfg.max_range)
    obs = build_observation([scan], world.robot.pose, spec.goal, world.robot.velocity, obs_cfg.history)
    region = tuple(float(v) for v in args.region.split(","))
    if len(region) != 4:
        raise UsageError("--region must be x0,y0,x1,y1")
    values = safety_heatmap(bundle.critic, obs, region, args.stride)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    data = np.round(values * 255.0).astype(np.uint8)
    with open(out_path, "wb") as f:
        f.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        f.write(data.tobytes())
    print(f"heatmap {data.shape[1]}x{data.shape[0]} -> {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# frontier-debug


def cmd_frontier_debug(args: argparse.Namespace) -> int:
    from .exploration import CANDIDATE_CSV_HEADER
    from .fileio import write_csv
    from .stack import StackConfig, run_episode

    spec = _load_scenario_arg(args.scenario, args.seed)
    policy = _load_policy_arg(args.bundle)
    cfg = StackConfig(
        mode="upper-with-scripted-lower",
        gamma=args.gamma,
        timeout=args.steps / 30.0,
    )
    out = _ensure_out(args.out)
    result = run_episode(spec, policy, cfg, collect_candidates=True)
    rows = []
    for tick, table in result.scored_tables:
        for row in table:
            rows.append((tick, *row))
    csv_path = out / "candidates.csv"
    write_csv(csv_path, ("tick", *CANDIDATE_CSV_HEADER), rows)
    _write_manifest(out, args, [csv_path])
    print(f"{len(rows)} candidate rows over {len(result.scored_tables)} exploration cycles -> {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="navstack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim_p = sub.add_parser("simulate", help="run episodes and write traces + metrics")
    sim_p.add_argument("--scenario", required=True, help="built-in name or scenario JSON path")
    sim_p.add_argument("--bundle", default="scripted", help="bundle JSON path or 'scripted'")
    sim_p.add_argument("--seed", type=int, default=None)
    sim_p.add_argument("--episodes", type=int, default=1)
    sim_p.add_argument("--mode", default="full", choices=("full", "lower-only", "upper-with-scripted-lower"))
    sim_p.add_argument("--gamma", type=float, default=1.0)
    sim_p.add_argument("--timeout", type=float, default=90.0)
    sim_p.add_argument("--jobs", type=int, default=1, help="parallel episode workers")
    sim_p.add_argument("--out", required=True)
    sim_p.set_defaults(func=cmd_simulate)

    train_p = sub.add_parser("train", help="train experts or the fusion stage")
    train_p.add_argument("stage", choices=("expert-gs", "expert-oa", "fusion"))
    train_p.add_argument("--config", default=None, help="JSON with TrainConfig overrides")
    train_p.add_argument("--seed", type=int, default=None)
    train_p.add_argument("--tasks", type=int, default=8, help="scenario count in the training set")
    train_p.add_argument("--expert-gs", default=None)
    train_p.add_argument("--expert-oa", default=None)
    train_p.add_argument("--out", required=True)
    train_p.set_defaults(func=cmd_train)

    heat_p = sub.add_parser("heatmap", help="critic safety heatmap around a pose")
    heat_p.add_argument("--bundle", required=True)
    heat_p.add_argument("--scenario", required=True)
    heat_p.add_argument("--pose", required=True, help="x,y,theta placing the robot")
    heat_p.add_argument("--region", default="-3,-3,3,3", help="robot-frame rectangle x0,y0,x1,y1")
    heat_p.add_argument("--stride", type=float, default=0.25)
    heat_p.add_argument("--seed", type=int, default=None)
    heat_p.add_argument("--out", required=True, help="output PGM path")
    heat_p.set_defaults(func=cmd_heatmap)

    dbg_p = sub.add_parser("frontier-debug", help="dump scored frontier candidates per cycle")
    dbg_p.add_argument("--scenario", required=True)
    dbg_p.add_argument("--bundle", default="scripted")
    dbg_p.add_argument("--steps", type=int, default=300, help="control ticks to run")
    dbg_p.add_argument("--gamma", type=float, default=1.0)
    dbg_p.add_argument("--seed", type=int, default=None)
    dbg_p.add_argument("--out", required=True)
    dbg_p.set_defaults(func=cmd_frontier_debug)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("NAVSTACK_LOG", "WARNING").upper())
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # training gates, episode failures
        from .training import TrainingError

        if isinstance(exc, TrainingError):
            print(f"training failed: {exc}", file=sys.stderr)
            return EXIT_EPISODE_FAILURE
        raise


if __name__ == "__main__":
    sys.exit(main())
