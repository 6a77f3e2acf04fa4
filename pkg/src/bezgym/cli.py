"""Command-line entry point: train, eval, replay, gradcheck and selftest."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from bezgym.errors import BezGymError


def _cmd_train(args) -> int:
    from bezgym.config import load_toml
    from bezgym.orchestration.curriculum import run_curriculum
    from bezgym.orchestration.schedule import load_config_dict

    raw = load_toml(text=Path(args.config).read_text())
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = load_config_dict(raw)
    out = Path(args.out)
    res = run_curriculum(cfg, out, resume=args.resume, max_iterations=args.max_iterations, verbose=not args.quiet)
    for s in res.stage_metrics:
        print(f"stage {s['name']}: {s['iterations']} iterations ({s['reason']}), "
              f"final mean return {s['final_mean_return']}")
    print(f"checkpoint: {out / ('final.ckpt' if res.finished else 'iter%06d.ckpt' % res.checkpoint.iteration)}")
    return 0


def _cmd_eval(args) -> int:
    from bezgym.evaluation import evaluate_checkpoint, format_report

    ckpt = Path(args.checkpoint)
    report = evaluate_checkpoint(ckpt, args.task, n=args.episodes, seed=args.seed, out_dir=args.trajectories,
                                 deterministic=not args.stochastic)
    print(format_report(report, compare_paper=args.compare_paper))
    log = Path(args.log) if args.log else ckpt.parent / "eval.jsonl"
    with log.open("a") as fh:
        fh.write(report.to_json() + "\n")
    print(f"report appended to {log}")
    return 0


def _cmd_replay(args) -> int:
    from bezgym.envs import Trajectory

    traj = Trajectory.read_jsonl(args.trajectory)
    text = traj.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_gradcheck(args) -> int:
    from bezgym.gradcheck import run_gradcheck

    results = run_gradcheck(args.trials, args.seed)
    worst = max(r.max_rel_error for r in results)
    for i, r in enumerate(results):
        print(f"trial {i:3d} {r.kind:<18} params {r.n_params:5d} max rel error {r.max_rel_error:.2e}")
    ok = worst < args.tolerance
    print(f"{'PASS' if ok else 'FAIL'}: worst relative error {worst:.2e} (limit {args.tolerance:g})")
    return 0 if ok else 1


def _cmd_selftest(args) -> int:
    from bezgym.selftest import run_selftest

    checks = run_selftest(args.imu_samples)
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bezgym", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run a curriculum from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None, help="override the config seed")
    t.add_argument("--out", default="runs/latest", help="directory for checkpoints and logs")
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.add_argument("--max-iterations", type=int, default=None, help="stop after this many iterations in total")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--task", choices=("kick", "walk", "jump"), default=None)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--compare-paper", action="store_true", help="add the published reference columns")
    e.add_argument("--stochastic", action="store_true", help="sample actions instead of using the mean")
    e.add_argument("--trajectories", default=None, help="directory for per-episode trajectory logs")
    e.add_argument("--log", default=None, help="report log (default: eval.jsonl next to the checkpoint)")
    e.set_defaults(func=_cmd_eval)

    r = sub.add_parser("replay", help="convert a trajectory log for plotting")
    r.add_argument("--trajectory", required=True)
    r.add_argument("--format", choices=("csv",), default="csv")
    r.add_argument("--out", default=None, help="output file (default: stdout)")
    r.set_defaults(func=_cmd_replay)

    g = sub.add_parser("gradcheck", help="finite-difference check of the network gradients")
    g.add_argument("--trials", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tolerance", type=float, default=1e-4)
    g.set_defaults(func=_cmd_gradcheck)

    s = sub.add_parser("selftest", help="physics, advantage and sensor-noise oracles")
    s.add_argument("--imu-samples", type=int, default=1_000_000)
    s.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BezGymError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
