"""Command-line entry point: ``hybridpark <subcommand> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 bad arguments.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import AppConfig, ConfigError, dump_config, load_config

log = logging.getLogger("hybridpark")

KIND_CHOICES = ("parallel", "perpendicular", "mixed")
DIFFICULTY_CHOICES = ("normal", "complex", "real")
METHOD_CHOICES = ("hybrid_rl", "pure_sac", "hybrid_astar")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _BadArgs(f"{self.prog}: error: {message}")


class _BadArgs(Exception):
    pass


def _common(p: argparse.ArgumentParser, out_required: bool = True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=Path, help="flat 'section.field: value' file")
    p.add_argument("--out", type=Path, required=out_required)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hybridpark", description="Hybrid RS/RL parking planner toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("build-map", help="point clouds + trajectory -> global occupancy grid")
    _common(p)
    p.add_argument("--frames", type=Path, help="directory of per-frame 'x y z' text files")
    p.add_argument("--trajectory", type=Path, help="'t tx ty tz qx qy qz qw' per line")
    p.add_argument("--name", default="global_map")

    p = sub.add_parser("gen-suite", help="generate a scenario suite and manifest")
    _common(p)
    p.add_argument("--kind", choices=KIND_CHOICES, default="mixed")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--difficulty", choices=DIFFICULTY_CHOICES, default="normal")

    p = sub.add_parser("train", help="train a SAC policy")
    _common(p)
    p.add_argument("--mode", choices=("hybrid", "pure_sac"), required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--difficulty", choices=DIFFICULTY_CHOICES, default="normal")
    p.add_argument("--eval-suite", type=Path, help="manifest used for periodic evaluation")

    p = sub.add_parser("eval", help="evaluate one method on a suite")
    _common(p)
    p.add_argument("--method", choices=METHOD_CHOICES, required=True)
    p.add_argument("--suite", type=Path, required=True, help="suite manifest")
    p.add_argument("--checkpoint", type=Path)

    p = sub.add_parser("bench", help="evaluate all methods and write the metric tables")
    _common(p)
    p.add_argument("--suite", type=Path, required=True, help="suite manifest")
    p.add_argument("--hybrid-checkpoint", type=Path)
    p.add_argument("--sac-checkpoint", type=Path)
    p.add_argument("--methods", default="hybrid_rl,pure_sac,hybrid_astar")

    p = sub.add_parser("render", help="draw a scenario (and optionally an episode) to PNG")
    _common(p)
    p.add_argument("--scenario", type=Path, required=True)
    p.add_argument("--episode-log", type=Path)
    p.add_argument("--scale", type=int, default=4)
    return parser


def _load_cfg(args) -> AppConfig:
    cfg = load_config(args.config) if args.config else AppConfig()
    return cfg.with_seed(args.seed)


def _kinds(kind: str, n: int, parallel_fraction: float):
    from .simulator import ParkingKind
    if kind == "parallel":
        return [(ParkingKind.PARALLEL, n)]
    if kind == "perpendicular":
        return [(ParkingKind.PERPENDICULAR, n)]
    n_par = int(round(n * parallel_fraction))
    return [(ParkingKind.PARALLEL, n_par), (ParkingKind.PERPENDICULAR, n - n_par)]


def _env_factory(cfg: AppConfig):
    from .simulator import ParkingEnv
    return lambda: ParkingEnv(cfg.vehicle, cfg.env, cfg.collision)


def cmd_build_map(args, cfg: AppConfig) -> int:
    from .grid import save_grid
    from .ogm import build_global_grid, load_recording
    from .toy import bundled_recording

    if (args.frames is None) != (args.trajectory is None):
        raise _BadArgs("--frames and --trajectory must be given together")
    frames_dir, traj_path = ((args.frames, args.trajectory) if args.frames
                             else bundled_recording())
    frames, traj = load_recording(frames_dir, traj_path)
    grid = build_global_grid(frames, traj, cfg.ogm)
    args.out.mkdir(parents=True, exist_ok=True)
    path = save_grid(grid, args.out / f"{args.name}.pgm")
    print(f"wrote {path} ({grid.width}x{grid.height} cells)")
    return 0


def cmd_gen_suite(args, cfg: AppConfig) -> int:
    from .scenarios import generate_suite
    from .simulator import Difficulty

    if args.n < 1:
        raise _BadArgs("--n must be positive")
    kinds = _kinds(args.kind, args.n, cfg.train.parallel_fraction)
    manifest = generate_suite(args.out, kinds, Difficulty(args.difficulty), args.seed,
                              cfg.vehicle, cfg.generator)
    print(f"wrote {manifest}")
    return 0


def cmd_train(args, cfg: AppConfig) -> int:
    from .scenarios import load_suite, scenario_pool
    from .simulator import Difficulty
    from .trainer import PlannerMode, TrainConfig, train

    if args.steps < 0:
        raise _BadArgs("--steps must be non-negative")
    t = cfg.train
    pool = scenario_pool(_kinds("mixed", t.train_scenarios, t.parallel_fraction),
                         Difficulty(args.difficulty), args.seed, cfg.vehicle, cfg.generator)
    eval_set = load_suite(args.eval_suite)[:t.eval_episodes] if args.eval_suite else []
    tcfg = TrainConfig(cfg.sac, cfg.mask, t.eval_interval, t.eval_episodes, t.checkpoint_interval)
    mode = PlannerMode.HYBRID if args.mode == "hybrid" else PlannerMode.PURE_SAC
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "config.txt").write_text(dump_config(cfg))
    result = train(_env_factory(cfg), pool, mode, tcfg, args.steps, eval_set, args.out,
                   log=log.info)
    print(f"trained {args.steps} steps ({result.episodes} episodes, {result.n_updates} updates); "
          f"wrote {args.out / 'checkpoint.npz'}")
    return 0


def _run_methods(args, cfg: AppConfig, methods, checkpoints) -> list:
    from .bench import Method, run_suite

    if not args.suite.is_file():
        raise FileNotFoundError(f"suite manifest {args.suite} not found")
    args.out.mkdir(parents=True, exist_ok=True)
    results = args.out / "results.csv"
    rows = []
    for name in methods:
        method = Method(name)
        ckpt = checkpoints.get(name)
        if method is not Method.HYBRID_ASTAR and ckpt is None:
            raise _BadArgs(f"method {name} needs a checkpoint")
        rows.append(run_suite(method, args.suite, _env_factory(cfg), ckpt, cfg.astar, cfg.mask,
                              args.out, results, args.seed))
    return rows


def cmd_eval(args, cfg: AppConfig) -> int:
    from .bench import markdown_table
    rows = _run_methods(args, cfg, [args.method], {args.method: args.checkpoint})
    print(markdown_table(rows), end="")
    return 0


def cmd_bench(args, cfg: AppConfig) -> int:
    from .bench import markdown_table

    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHOD_CHOICES]
    if bad or not methods:
        raise _BadArgs(f"unknown methods {bad}; choose from {', '.join(METHOD_CHOICES)}")
    results = args.out / "results.csv"
    if results.exists():
        results.unlink()  # a bench run owns its results file
    rows = _run_methods(args, cfg, methods, {"hybrid_rl": args.hybrid_checkpoint,
                                             "pure_sac": args.sac_checkpoint})
    table = markdown_table(rows)
    (args.out / "results.md").write_text(table)
    print(table, end="")
    return 0


def cmd_render(args, cfg: AppConfig) -> int:
    from .episode_log import read_episode_log
    from .geometry import Pose2D
    from .scenarios import load_scenario
    from .simulator import ParkingEnv

    sc = load_scenario(args.scenario)
    env = ParkingEnv(cfg.vehicle, cfg.env, cfg.collision)
    env.reset(sc)
    if args.episode_log:
        rec = read_episode_log(args.episode_log)
        env.trajectory = [Pose2D(s.x, s.y, s.theta) for s in rec.steps]
        if env.trajectory:
            from .simulator import VehicleState
            env.state = VehicleState(env.trajectory[-1])
    out = args.out
    if out.suffix.lower() != ".png":
        out.mkdir(parents=True, exist_ok=True)
        out = out / (args.scenario.stem + ".png")
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    env.render_frame(out, scale=args.scale)
    print(f"wrote {out}")
    return 0


COMMANDS = {
    "build-map": cmd_build_map,
    "gen-suite": cmd_gen_suite,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "render": cmd_render,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _BadArgs as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        cfg = _load_cfg(args)
        return COMMANDS[args.command](args, cfg)
    except (_BadArgs, ConfigError) as exc:
        print(f"hybridpark {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"hybridpark {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
