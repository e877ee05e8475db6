"""Command-line entry point: ``efgcl-lab {train,compare,ablate,value-probe,distill}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from .harness.config import ConfigError, parse_config
from .harness.experiments import measure_value_acceleration, preset, run_ablation, run_comparison
from .harness.metrics import RunMetrics
from .harness.plot import write_learning_curve_svg
from .harness.training import evaluate, run_episodes, run_training

log = logging.getLogger("efgcl_lab")

MULTI_SEED = ("compare", "ablate", "value-probe")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


def _load_config(args):
    if args.config:
        try:
            cfg = parse_config(Path(args.config).read_text())
        except ConfigError as exc:
            raise SystemExit(f"config error: {exc}")
        if args.task and args.task != cfg.task:
            cfg = replace(cfg, task=args.task)
    else:
        cfg = preset(args.task or "jump", args.variant)
    if args.efgcl is not None:
        cfg = replace(cfg, efgcl=args.efgcl == "on")
    if getattr(args, "seeds", None):
        cfg = replace(cfg, seeds=tuple(int(v) for v in args.seeds.split(",")))
    elif args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    elif args.verb in MULTI_SEED and len(cfg.seeds) < 2:
        cfg = replace(cfg, seeds=DEFAULT_SEEDS)
    if args.iterations is not None:
        cfg = replace(cfg, iterations=args.iterations)
    return cfg


def _out(args, cfg) -> Path:
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_trace(path: Path, agent, cfg, seed: int) -> None:
    from .envs.core import trace_row, write_trace
    from .harness.training import agent_actor

    env_cfg = cfg.env_config()
    res = run_episodes(env_cfg, agent_actor(agent), 1, np.random.default_rng(seed), deterministic=True,
                       record_states=True)
    rows = [trace_row(s, 0, 0.0) for s in res.states]
    write_trace(path, rows)


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out(args, cfg)
    seed = cfg.seeds[0]

    def progress(it, row, cur):
        if it % 10 == 0:
            log.info("iter %d reward %.2f success %.2f alpha %.2f", it, row.reward_mean, row.success_rate, row.alpha)

    res = run_training(cfg, seed, out_dir=out, wall_clock=args.wall_clock, progress=progress)
    if args.trace:
        _write_trace(out / "trace.csv", res.agent, cfg, seed)
    if args.plot:
        write_learning_curve_svg(out / "learning_curve.svg", {"run": res.metrics})
    print((out / "summary.txt").read_text(), end="")
    return 0


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    out = _out(args, cfg)
    try:
        cmp = run_comparison(cfg, out_dir=out)
    except ValueError as exc:
        raise SystemExit(f"compare: {exc}")
    lines = cmp.summary_lines() + [f"speedup criterion met: {cmp.speedup_ok()}"]
    (out / "comparison.txt").write_text("\n".join(lines) + "\n")
    if args.plot:
        curves = {f"efgcl s{s}": r.metrics for s, r in zip(cmp.efgcl.seeds, cmp.efgcl.runs)}
        curves.update({f"baseline s{s}": r.metrics for s, r in zip(cmp.baseline.seeds, cmp.baseline.runs)})
        write_learning_curve_svg(out / "comparison.svg", curves)
    print("\n".join(lines))
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    if cfg.task != "flip":
        raise SystemExit("ablate is defined for flip tasks (use --task flip)")
    out = _out(args, cfg)
    cells = run_ablation(cfg, out_dir=out)
    lines = [f"{c.label:>16}: {'learned' if c.success else 'failed'} (iterations {c.iterations})" for c in cells]
    (out / "ablation.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_value_probe(args) -> int:
    cfg = _load_config(args)
    out = _out(args, cfg)
    try:
        cmp = run_comparison(cfg, out_dir=out)
    except ValueError as exc:
        raise SystemExit(f"compare: {exc}")
    vp = measure_value_acceleration(cmp, cfg)
    lines = vp.lines()
    (out / "value_probe.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_distill(args) -> int:
    from .distill import CurriculumIncompleteError, DistillConfig, train_student
    from .harness.checkpoint import load_checkpoint, save_student
    from .harness.training import agent_actor

    if not args.teacher:
        raise SystemExit("distill needs --teacher PATH (a final.npz written by train)")
    teacher, env_cfg, header = load_checkpoint(args.teacher)
    if header["kind"] != "teacher":
        raise SystemExit("--teacher must point at a teacher checkpoint")
    meta = header.get("meta", {})
    cur = SimpleNamespace(complete=bool(meta.get("curriculum_complete", False)), alpha=float(meta.get("alpha", 1.0)))
    out = Path(args.out or "runs/distill")
    out.mkdir(parents=True, exist_ok=True)
    dcfg = DistillConfig(seed=args.seed or 0)
    if args.transitions:
        dcfg = replace(dcfg, n_transitions=args.transitions)
    try:
        student, report = train_student(teacher, env_cfg, cur, dcfg)
    except CurriculumIncompleteError as exc:
        raise SystemExit(f"refused: {exc}")
    save_student(out / "student.npz", student, env_cfg, meta={"teacher": str(args.teacher)})
    rng = np.random.default_rng(dcfg.seed + 1)
    t_rate = evaluate(agent_actor(teacher), env_cfg, 100, rng)
    s_rate = evaluate(student.actor(), env_cfg, 100, rng)
    lines = [f"train action MSE: {report.train_mse:.5g}", f"held-out action MSE: {report.heldout_mse:.5g}",
             f"teacher success: {t_rate:.2f}", f"student success: {s_rate:.2f}"]
    (out / "distill.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="efgcl-lab", description="External-force guided curriculum RL at desk scale")
    sub = p.add_subparsers(dest="verb", required=True)
    for name, fn, help_ in [("train", cmd_train, "train one policy"),
                            ("compare", cmd_compare, "EFGCL vs. baseline over seeds"),
                            ("ablate", cmd_ablate, "assist magnitude/window grid on a flip task"),
                            ("value-probe", cmd_value_probe, "value-net convergence on a successful probe"),
                            ("distill", cmd_distill, "distil a finished teacher into a proprioceptive student")]:
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="experiment config file (key = value lines)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--task", choices=["jump", "flip"])
        sp.add_argument("--variant", choices=["backflip", "lateral"], default="backflip")
        sp.add_argument("--efgcl", choices=["on", "off"])
        sp.add_argument("--iterations", type=int, help="override the iteration budget")
        sp.add_argument("--plot", action="store_true", help="also write an SVG learning curve")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in MULTI_SEED:
            sp.add_argument("--seeds", help="comma-separated seed list (default 0,1,2,3,4)")
        if name == "train":
            sp.add_argument("--trace", action="store_true", help="write trace.csv for one evaluation episode")
            sp.add_argument("--wall-clock", action="store_true",
                            help="fill wall_ms in metrics.csv (makes the file run-dependent)")
        if name == "distill":
            sp.add_argument("--teacher", help="teacher checkpoint (final.npz)")
            sp.add_argument("--transitions", type=int, help="number of teacher transitions")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
