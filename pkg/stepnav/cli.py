"""Command-line front-end for stepnav.

Six subcommands:
  gen-envs       training / unseen / custom environment suite → *.env files
  collect-demos  RRT-LMPC expert episodes → demo dataset
  train          SAC (from scratch or bootstrapped) → checkpoints + learning curves
  eval           policies × suite × trials → metrics table (+ optional traces)
  plot           traces / curves → SVG (+ CSV of smoothed curves)
  inspect        validate any artifact against its Frictionless schema → report

Exit codes: 0 = success, 2 = usage error / bad config or option value / missing input,
3 = infeasible or malformed input (parse, generation, planning, invalid artifact),
4 = internal error.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from loguru import logger

from .exceptions import ConfigError, GenerationError, ParseError, PlanningError, StepnavError

DEFAULT_OUT = "stepnav_output"
BASELINES = ("lmpc-direct", "rrt-lmpc")


class _InvalidArtifact(Exception):
    """An inspected artifact failed validation."""


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="FILE", help="Run configuration (section.key = value lines)")
    p.add_argument("--seed", type=int, metavar="N", help="Override run.seed")
    p.add_argument("--workers", type=int, default=1, metavar="N", help="Parallel episode workers")
    loud = p.add_mutually_exclusive_group()
    loud.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    loud.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    return p


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stepnav", description="stepnav: subgoal navigation over a LIP-MPC biped")
    sub = p.add_subparsers(dest="cmd", required=True)
    common = [_common()]

    p_gen = sub.add_parser("gen-envs", parents=common, help="Generate an environment suite")
    p_gen.add_argument("--suite", choices=("training", "unseen"), default="training",
                       help="training: 10 per obstacle count in {0,1,2,6,8}; unseen: 8 obstacles, goal (10,10)")
    p_gen.add_argument("--count", type=int, metavar="N",
                       help="Environments per obstacle count (training), in total (unseen or --obstacles)")
    p_gen.add_argument("--obstacles", type=int, metavar="K", help="Custom suite: every environment gets K obstacles")
    p_gen.add_argument("--traps", type=int, metavar="N", help="Append N long-wall layouts")
    p_gen.add_argument("--out", default=f"{DEFAULT_OUT}/envs", metavar="DIR", help="Output directory")

    p_demo = sub.add_parser("collect-demos", parents=common, help="Collect RRT-LMPC demonstrations")
    p_demo.add_argument("--envs", required=True, metavar="DIR", help="Directory of .env files")
    p_demo.add_argument("--n", type=int, default=10_000, metavar="N", help="Number of transitions")
    p_demo.add_argument("--include-failures", action="store_true", help="Keep transitions of failed episodes")
    p_demo.add_argument("--out", default=f"{DEFAULT_OUT}/demos.txt", metavar="FILE", help="Output dataset")

    p_train = sub.add_parser("train", parents=common, help="Train the SAC subgoal policy")
    p_train.add_argument("--envs", required=True, metavar="DIR", help="Directory of training .env files")
    p_train.add_argument("--demo", metavar="FILE", help="Demo dataset (omit to train from scratch)")
    p_train.add_argument("--episodes", type=int, metavar="N", help="Override train.episodes")
    p_train.add_argument("--out", default=f"{DEFAULT_OUT}/train", metavar="DIR", help="Output directory")

    p_eval = sub.add_parser("eval", parents=common, help="Evaluate policies on a suite")
    p_eval.add_argument("--suite", required=True, metavar="DIR", help="Directory of .env files")
    p_eval.add_argument("--checkpoint", metavar="FILE", help="SAC checkpoint to evaluate")
    p_eval.add_argument("--baseline", action="append", choices=BASELINES, default=[],
                        help="Baseline method (repeatable)")
    p_eval.add_argument("--reference", metavar="METHOD", help="Time-ratio reference (default: first method)")
    p_eval.add_argument("--trials", type=int, default=4, metavar="N", help="Trials per environment")
    p_eval.add_argument("--save-traces", action="store_true", help="Write one trace file per episode")
    p_eval.add_argument("--out", default=f"{DEFAULT_OUT}/eval", metavar="DIR", help="Output directory")

    p_plot = sub.add_parser("plot", parents=common, help="Render traces and learning curves")
    p_plot.add_argument("--traces", nargs="+", default=[], metavar="FILE", help="Trace files")
    p_plot.add_argument("--curves", metavar="FILE", help="Learning-curve file")
    p_plot.add_argument("--suite", metavar="DIR", help="Environments for drawing obstacles")
    p_plot.add_argument("--window", type=int, default=50, metavar="N", help="Smoothing window")
    p_plot.add_argument("--out", default=f"{DEFAULT_OUT}/plots", metavar="DIR", help="Output directory")

    p_insp = sub.add_parser("inspect", parents=common, help="Validate artifacts and write reports")
    p_insp.add_argument("infiles", nargs="+", metavar="FILE", help="Artifact files")
    p_insp.add_argument("--out", metavar="DIR", help="Report directory (default: next to each artifact)")

    return p


def _configure_logging(args) -> None:
    logger.remove()
    level = "DEBUG" if args.verbose else "WARNING" if args.quiet else "INFO"
    logger.add(sys.stderr, level=level, format="{time:HH:mm:ss} | {level: <7} | {message}")


def _load_run_config(args):
    from .config import load_config

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


_POSITIVE = ("workers", "count", "n", "episodes", "trials", "window")
_NON_NEGATIVE = ("obstacles", "traps")


def _check_arguments(args) -> None:
    """Reject out-of-range numeric options before any work starts."""
    for name in _POSITIVE:
        value = getattr(args, name, None)
        if value is not None and value < 1:
            raise ConfigError(f"--{name} must be ≥ 1, got {value}")
    for name in _NON_NEGATIVE:
        value = getattr(args, name, None)
        if value is not None and value < 0:
            raise ConfigError(f"--{name} must be ≥ 0, got {value}")


def _require(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} {p} does not exist")
    return p


# --- Commands ---

def _cmd_gen_envs(args, cfg) -> None:
    from .world import generate_environment, generate_trap_environment, save_environment, training_suite, unseen_suite
    from .config import provenance

    if args.obstacles is not None:
        count = args.count or 10
        envs = [generate_environment(cfg.seed * 1000 + i, args.obstacles, "random", env_id=i) for i in range(count)]
        suite = f"custom-{args.obstacles}"
    elif args.suite == "unseen":
        envs = unseen_suite(cfg.seed, args.count or cfg.world.unseen_count)
        suite = "unseen"
    else:
        envs = training_suite(cfg.seed, args.count or cfg.world.per_count)
        suite = "training"
    traps = cfg.world.traps if args.traps is None else args.traps
    for i in range(traps):
        envs.append(generate_trap_environment(cfg.seed * 1000 + 900 + i, env_id=len(envs)))

    out = Path(args.out)
    meta = {"suite": suite, **provenance(cfg)}
    for env in envs:
        save_environment(env, out / f"env_{env.id:03d}.env", meta)
    print(f"[OK] {out} ({len(envs)} environments)")


def _cmd_collect_demos(args, cfg) -> None:
    from .config import provenance
    from .expert import collect_demonstrations, save_demos
    from .world import load_suite

    envs = load_suite(_require(args.envs, "environment directory"))
    dataset = collect_demonstrations(
        envs, args.n, cfg.seed, cfg.expert,
        episode_cfg=cfg.episode, params=cfg.lip, mpc_cfg=cfg.mpc, reward_params=cfg.reward,
        include_failures=args.include_failures, workers=args.workers,
    )
    path = save_demos(dataset, args.out, provenance(cfg))
    print(f"[OK] {path} ({len(dataset)} transitions)")


def _cmd_train(args, cfg) -> None:
    from .config import provenance
    from .train import train
    from .world import load_suite

    envs = load_suite(_require(args.envs, "environment directory"))
    demos = None
    if args.demo:
        from .expert import load_demos
        demos = load_demos(_require(args.demo, "demo dataset"))
    train_cfg = cfg.train if args.episodes is None else replace(cfg.train, episodes=args.episodes)
    result = train(
        envs, cfg.sac, train_cfg, cfg.seed, args.out, demos,
        episode_cfg=cfg.episode, params=cfg.lip, mpc_cfg=cfg.mpc, reward_params=cfg.reward,
        provenance={**provenance(cfg), "demos": "yes" if demos is not None and train_cfg.use_demos else "no"},
    )
    print(f"[OK] {result.curves_path}")
    for path in result.checkpoints:
        print(f"[OK] {path}")


def _cmd_eval(args, cfg) -> None:
    from .config import provenance
    from .sim import PolicySpec, evaluate, save_metrics, save_trace, time_ratio
    from .world import load_suite

    specs = []
    if args.checkpoint:
        specs.append(PolicySpec("sac", checkpoint=str(_require(args.checkpoint, "checkpoint")), sac=cfg.sac))
    specs += [PolicySpec(name, expert=cfg.expert) for name in args.baseline]
    if not specs:
        raise ConfigError("nothing to evaluate: pass --checkpoint and/or --baseline")
    names = [s.name for s in specs]
    reference = args.reference or names[0]
    if reference not in names:
        raise ConfigError(f"reference method {reference!r} is not among the evaluated methods {names}")

    suite = load_suite(_require(args.suite, "suite directory"))
    out = Path(args.out)
    meta = provenance(cfg)
    results = {}
    for spec in specs:
        metrics, traces = evaluate(
            spec, suite, args.trials, cfg.seed,
            episode_cfg=cfg.episode, params=cfg.lip, mpc_cfg=cfg.mpc, reward_params=cfg.reward,
            workers=args.workers,
        )
        results[spec.name] = metrics
        if args.save_traces:
            for t in traces:
                save_trace(t, out / "traces" / spec.name / f"trial{t.trial}_env{t.env_id:03d}.trace", meta)

    rows = [(m, time_ratio(m, results[reference])) for m in results.values()]
    path = save_metrics(rows, out / "metrics.txt", {**meta, "reference": reference, "trials": str(args.trials)})
    for m, ratio in rows:
        print(f"{m.method:<12} success {m.success_mean:6.2f} ± {m.success_std:5.2f} %   "
              f"reward {m.reward_mean:8.2f} ± {m.reward_std:6.2f}   time ratio {ratio:.3f}")
    print(f"[OK] {path}")


def _cmd_plot(args, cfg) -> None:
    from .plot import plot_curves, plot_trace
    from .sim import load_trace
    from .train import load_curves
    from .world import load_suite

    if not args.traces and not args.curves:
        raise ConfigError("nothing to plot: pass --traces and/or --curves")
    envs = {e.id: e for e in load_suite(_require(args.suite, "suite directory"))} if args.suite else {}
    out = Path(args.out)
    for name in args.traces:
        trace = load_trace(_require(name, "trace"))
        path = plot_trace(trace, out / f"{Path(name).stem}.svg", envs.get(trace.env_id))
        print(f"[OK] {path}")
    if args.curves:
        src = _require(args.curves, "curve file")
        stem = src.stem
        path = plot_curves(load_curves(src), out / f"{stem}.svg", out / f"{stem}_smoothed.csv", args.window)
        print(f"[OK] {path}")
        print(f"[OK] {out / f'{stem}_smoothed.csv'}")


def _cmd_inspect(args, cfg) -> None:
    from .validate import validate_artifact

    failed = []
    for name in args.infiles:
        report, valid = validate_artifact(_require(name, "artifact"), outdir=args.out)
        print(f"[{'OK' if valid else 'FAIL'}] Report: {report}")
        if not valid:
            failed.append(name)
    if failed:
        raise _InvalidArtifact(f"{len(failed)} artifact(s) failed validation")


_COMMANDS = {
    "gen-envs": _cmd_gen_envs,
    "collect-demos": _cmd_collect_demos,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "plot": _cmd_plot,
    "inspect": _cmd_inspect,
}


def main(argv=None) -> None:
    p = build_parser()
    args = p.parse_args(argv)
    _configure_logging(args)

    try:
        _check_arguments(args)
        cfg = _load_run_config(args)
        _COMMANDS[args.cmd](args, cfg)
    except (ConfigError, FileNotFoundError) as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        sys.exit(2)
    except (ParseError, GenerationError, PlanningError, _InvalidArtifact) as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        sys.exit(3)
    except StepnavError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        sys.exit(4)
    except ValueError as e:
        logger.opt(exception=e).debug("internal fault")
        print(f"[ERROR] internal: {e}", file=sys.stderr)
        sys.exit(4)


if __name__ == "__main__":
    main()
