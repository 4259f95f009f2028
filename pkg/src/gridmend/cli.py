"""Command-line entry point: ``gridmend <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 configuration or validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .env import ConfigError, DecPomdpEnv, load_env_config
from .grid import NetworkError, damageable_lines, load_network, validate_network
from .marl.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .marl.evaluate import evaluate_day
from .marl.train import METRIC_FIELDS, TrainingError, config_dict, train
from .milp.restoration import MpsInjection, StepInputs, build_problem, check_radiality, solve, write_lp
from .scenario import ProfileError, sample_outage

log = logging.getLogger("gridmend")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
VALIDATION_ERRORS = (ConfigError, NetworkError, ProfileError, CheckpointError)


def _setup_logging() -> None:
    level = os.environ.get("GRIDMEND_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _write_csv(path: Path, rows: list[dict], fields=None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(fields or (rows[0].keys() if rows else []))
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


# -- net / scenario ----------------------------------------------------------


def cmd_net_validate(args) -> int:
    net = load_network(args.path)
    validate_network(net, str(args.path))
    print(f"{args.path}: ok ({len(net.buses)} buses, {len(net.lines)} lines, "
          f"{len(net.generators)} generators, {len(net.loads)} loads, {len(net.stations)} stations)")
    return EXIT_OK


def cmd_scenario_sample(args) -> int:
    if args.config:
        cfg = load_env_config(args.config, "all")
        net, fragility = cfg.net, cfg.fragility
        rt, rs = cfg.repair_time, cfg.repair_resources
    elif args.net:
        net = load_network(args.net)
        fragility = {ln: args.prob for ln in damageable_lines(net)}
        rt, rs = (1, 4), (2, 3)
    else:
        raise ConfigError("scenario sample needs --config or --net")
    rng = np.random.default_rng(args.seed)
    draws = [sample_outage(net, fragility, rng, rt, rs).to_dict() for _ in range(args.count)]
    for d in draws:
        d["seed"] = args.seed
    text = json.dumps(draws[0] if args.count == 1 else draws, indent=1)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


# -- train / eval ------------------------------------------------------------


def _manifest(run, seeds, argv) -> dict:
    return {
        "package": "gridmend", "version": __version__,
        "python": platform.python_version(), "numpy": np.__version__,
        "config_digest": run.digest(), "config_file_sha256": run.source_hash,
        "config": run.to_dict(), "seeds": list(seeds), "argv": list(argv),
    }


def _train_one(run, seed: int, out_dir: Path) -> dict:
    env_cfg = run.env_config(run.train_split)
    tc = run.train_config(seed, dump_dir=out_dir)
    t0 = time.perf_counter()
    result = train(run.algorithm, lambda: DecPomdpEnv(env_cfg, seed=seed), tc)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "metrics.csv", result.metrics, METRIC_FIELDS)
    save_checkpoint(out_dir / "checkpoint.npz", result.policies,
                    {"seed": seed, "train": config_dict(tc), "episodes": run.episodes})
    rewards = [m["reward"] for m in result.metrics]
    return {"seed": seed, "dir": str(out_dir), "episodes": len(rewards),
            "final_mean_reward": float(np.mean(rewards[-50:])) if rewards else None,
            "seconds": time.perf_counter() - t0}


def cmd_train(args) -> int:
    from .config import load_run_config

    run = load_run_config(args.config, episodes=args.episodes, algorithm=args.algo, out=args.out,
                          seeds=None if args.seed is None else [args.seed])
    run.env_config(run.train_split)  # fail fast on bad references
    base = Path(run.out)
    dirs = {s: base / f"{run.algorithm}_seed{s}" for s in run.seeds}
    if args.workers > 1 and len(run.seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_train_one, run, s, dirs[s]) for s in run.seeds]
            summaries = [f.result() for f in futures]
    else:
        summaries = [_train_one(run, s, dirs[s]) for s in run.seeds]
    manifest = _manifest(run, run.seeds, sys.argv[1:] if args.argv is None else args.argv)
    manifest["runs"] = summaries
    base.mkdir(parents=True, exist_ok=True)
    (base / f"manifest_{run.algorithm}.json").write_text(json.dumps(manifest, indent=1))
    for s in summaries:
        print(f"seed {s['seed']}: {s['episodes']} episodes -> {s['dir']}")
    return EXIT_OK


def _eval_days(checkpoint, run, split, days, seed):
    policies, _ = load_checkpoint(checkpoint)
    env = DecPomdpEnv(run.env_config(split), seed=seed)
    policies.check_env(env)
    return [evaluate_day(policies, env, d, seed) for d in days]


def cmd_eval(args) -> int:
    from .config import load_run_config

    run = load_run_config(args.config, out=args.out)
    policies, meta = load_checkpoint(args.checkpoint)
    split = args.split or run.eval_split
    env_cfg = run.env_config(split)
    env = DecPomdpEnv(env_cfg, seed=args.seed)
    try:
        policies.check_env(env)
    except ValueError as exc:
        raise CheckpointError(f"incompatible checkpoint: {exc}") from None
    n = env_cfg.profiles.n_days
    want = args.days if args.days is not None else (run.eval_days or n)
    days = [d % n for d in range(want)]
    if args.workers > 1 and len(days) > 1:
        k = args.workers
        chunks = [days[i::k] for i in range(k)]
        with ProcessPoolExecutor(max_workers=k) as pool:
            parts = list(pool.map(_eval_days, [args.checkpoint] * k, [run] * k, [split] * k, chunks,
                                  [args.seed] * k))
        # undo the round-robin split so rows follow the requested day order
        results = [parts[i % k][i // k] for i in range(len(days))]
    else:
        results = [evaluate_day(policies, env, d, args.seed) for d in days]
    out = Path(args.out) if args.out else Path(run.out) / "eval"
    rows = [r.row() for r in results]
    for i, row in enumerate(rows):
        row["episode"] = i
    _write_csv(out / "eval.csv", rows, ["episode", "day", "lambda_sum", "mean_select_ms", "max_select_ms",
                                        "mean_step_ms"])
    if args.trace:
        trace_rows = []
        for i, r in enumerate(results):
            for rec in r.trace:
                trace_rows.append({"episode": i, "day": r.day, **rec})
        _write_csv(out / "trace.csv", trace_rows)
    manifest = _manifest(run, [args.seed], sys.argv[1:] if args.argv is None else args.argv)
    manifest.update({"checkpoint": str(args.checkpoint), "checkpoint_meta": meta, "split": split, "days": days})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    mean = float(np.mean([r.lambda_sum for r in results])) if results else 0.0
    print(f"{len(results)} days, mean lambda-sum {mean:.4f} -> {out / 'eval.csv'}")
    return EXIT_OK


# -- opf ---------------------------------------------------------------------


def _read_inputs(net, path) -> StepInputs:
    nominal = StepInputs.nominal(net)
    if path is None:
        return nominal
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"inputs file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        mps = tuple(MpsInjection(**m) for m in raw.get("mps", []))
        return StepInputs(
            hour=int(raw.get("hour", 0)),
            load_p={**nominal.load_p, **raw.get("load_p", {})},
            load_q={**nominal.load_q, **raw.get("load_q", {})},
            pv_avail={**nominal.pv_avail, **raw.get("pv", {})},
            out_lines=frozenset(int(x) for x in raw.get("out_lines", [])),
            mps=mps,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_opf(args) -> int:
    net = load_network(args.net)
    inputs = _read_inputs(net, args.inputs)
    problem = build_problem(net, inputs)
    if args.dump_lp:
        write_lp(problem, args.dump_lp)
    sol = solve(problem, node_limit=args.node_limit, time_limit=args.time_limit)
    report = check_radiality(sol, net) if sol.status != "infeasible" else None
    out = {
        "status": sol.status,
        "objective": round(sol.objective, 6),
        "restored_kw": {k: round(v, 6) for k, v in sol.restored_p.items()},
        "y": {str(k): v for k, v in sol.y.items()},
        "e": {str(k): v for k, v in sol.e.items()},
        "radial": None if report is None else report.ok,
        "islands": None if report is None else report.islands,
        "nodes": sol.nodes,
    }
    print(json.dumps(out, indent=1))
    return EXIT_OK if sol.status != "infeasible" else EXIT_RUNTIME


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridmend", description="Mobile-fleet distribution restoration toolkit")
    ap.add_argument("--version", action="version", version=f"gridmend {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    net = sub.add_parser("net", help="network file utilities")
    net_sub = net.add_subparsers(dest="net_command", required=True)
    nv = net_sub.add_parser("validate", help="check a network JSON file")
    nv.add_argument("path", type=Path)
    nv.set_defaults(func=cmd_net_validate)

    sc = sub.add_parser("scenario", help="outage scenarios")
    sc_sub = sc.add_subparsers(dest="scenario_command", required=True)
    ss = sc_sub.add_parser("sample", help="draw outage scenarios")
    ss.add_argument("--config", type=Path, help="scenario JSON with fragility settings")
    ss.add_argument("--net", type=Path, help="network JSON (uniform probability --prob)")
    ss.add_argument("--prob", type=float, default=0.5)
    ss.add_argument("--seed", type=int, default=0)
    ss.add_argument("--count", type=int, default=1)
    ss.add_argument("--out", type=Path)
    ss.set_defaults(func=cmd_scenario_sample)

    tr = sub.add_parser("train", help="train policies from a TOML run config")
    tr.add_argument("--config", type=Path, required=True)
    tr.add_argument("--episodes", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--algo", choices=("h2mappo", "ippo", "mappo"))
    tr.add_argument("--out", type=Path)
    tr.add_argument("--workers", type=int, default=1)
    tr.set_defaults(func=cmd_train, argv=None)

    ev = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--config", type=Path, required=True)
    ev.add_argument("--days", type=int)
    ev.add_argument("--split", choices=("train", "test", "all"))
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--trace", action="store_true")
    ev.add_argument("--out", type=Path)
    ev.add_argument("--workers", type=int, default=1)
    ev.set_defaults(func=cmd_eval, argv=None)

    op = sub.add_parser("opf", help="solve one restoration step")
    op.add_argument("--net", type=Path, required=True)
    op.add_argument("--inputs", type=Path)
    op.add_argument("--dump-lp", type=Path)
    op.add_argument("--node-limit", type=int, default=20_000)
    op.add_argument("--time-limit", type=float, default=None)
    op.set_defaults(func=cmd_opf)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "argv", "unset") is None:
        args.argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - last-resort exit code mapping
        log.debug("unhandled", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
