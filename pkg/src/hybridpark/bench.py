"""Suite evaluation for the three planners and the metric tables."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .action_mask import MaskConfig
from .collision import CollisionChecker
from .episode_log import EpisodeRecord, StepLog, read_episode_log, write_episode_log
from .hybrid_astar import HybridAStar, HybridAStarConfig, PlannedPath
from .hybrid_planner import rollout
from .sac import BeamEncoder, SacAgent, load_checkpoint
from .scenarios import load_suite
from .simulator import Action, Outcome, ParkingEnv, Scenario
from .trainer import PlannerMode, episode_rng, make_encoder, make_planner, stochastic_policy

RESULTS_COLUMNS = ("method", "scenario_class", "episodes", "psr", "angs", "pl", "aot")


class Method(Enum):
    HYBRID_RL = "hybrid_rl"
    PURE_SAC = "pure_sac"
    HYBRID_ASTAR = "hybrid_astar"


@dataclass(frozen=True)
class MetricsRow:
    method: str
    scenario_class: str
    episodes: int
    psr: float  # percent
    angs: float  # mean gear shifts over all episodes
    pl: float  # mean path length over successes (nan if none)
    aot: float  # mean simulated seconds over successes (nan if none)

    def __post_init__(self):
        if self.episodes <= 0:
            raise ValueError("a metrics row needs at least one episode")
        if not 0.0 <= self.psr <= 100.0:
            raise ValueError("psr must lie in [0, 100]")

    def csv_fields(self) -> list[str]:
        return [self.method, self.scenario_class, str(self.episodes), _fmt(self.psr),
                _fmt(self.angs), _fmt(self.pl), _fmt(self.aot)]


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6f}"


def metrics_from_records(method: str, scenario_class: str,
                         records: Sequence[EpisodeRecord]) -> MetricsRow:
    n = len(records)
    if n == 0:
        raise ValueError("no episodes to summarise")
    wins = [r for r in records if r.success]
    pl = sum(r.path_length for r in wins) / len(wins) if wins else math.nan
    aot = sum(r.sim_time for r in wins) / len(wins) if wins else math.nan
    return MetricsRow(method, scenario_class, n, 100.0 * len(wins) / n,
                      sum(r.gear_shifts for r in records) / n, pl, aot)


def metrics_from_logs(method: str, scenario_class: str, log_dir) -> MetricsRow:
    files = sorted(Path(log_dir).glob("*.log"))
    return metrics_from_records(method, scenario_class, [read_episode_log(f) for f in files])


# -- episode runners ---------------------------------------------------------

def execute_segments(env: ParkingEnv, segments: Sequence[tuple[float, int, float]],
                     source: str = "ASTAR") -> EpisodeRecord:
    """Drive ``(steer, gear, length)`` pieces open-loop at up to max_speed."""
    rec = EpisodeRecord()
    step_len = env.vehicle.max_speed * env.cfg.dt
    queue = [list(s) for s in segments if s[2] > 0]
    while not env.done and queue:
        steer, gear, remaining = queue[0]
        travel = min(step_len, remaining)
        action = Action(gear * travel / env.cfg.dt, steer)
        result = env.step(action)
        queue[0][2] = remaining - travel
        if queue[0][2] <= 1e-10:
            queue.pop(0)
        p = env.state.pose
        rec.steps.append(StepLog(env.sim_time, p.x, p.y, p.theta, action.velocity,
                                 action.steering, result.reward, result.outcome.value, source))
    # an exhausted plan that did not end the episode keeps the vehicle parked until timeout
    while not env.done:
        result = env.step(Action(0.0, 0.0))
        p = env.state.pose
        rec.steps.append(StepLog(env.sim_time, p.x, p.y, p.theta, 0.0, 0.0, result.reward,
                                 result.outcome.value, source))
    rec.outcome = env.outcome.value
    rec.gear_shifts = env.gear_shifts
    rec.path_length = env.path_length
    rec.sim_time = env.sim_time
    return rec


def astar_episode(env: ParkingEnv, scenario: Scenario, cfg: HybridAStarConfig) -> EpisodeRecord:
    env.reset(scenario)
    checker: CollisionChecker = env.planner_checker
    path: PlannedPath | None = HybridAStar(checker, cfg).plan(scenario.start, scenario.target)
    if path is None:
        rec = EpisodeRecord(outcome="no_path")
        return rec
    return execute_segments(env, path.segments)


def learned_episode(env: ParkingEnv, scenario: Scenario, agent: SacAgent,
                    encoder: BeamEncoder, mode: PlannerMode,
                    mask_cfg: MaskConfig | None = None,
                    rng: np.random.Generator | None = None) -> EpisodeRecord:
    env.reset(scenario)
    planner = make_planner(env, stochastic_policy(agent, encoder, rng), mode, mask_cfg)
    return rollout(env, planner)


def _scenario_class(scenarios: Sequence[Scenario]) -> str:
    return "+".join(sorted({sc.difficulty.value for sc in scenarios}))


def run_suite(method: Method, manifest, env_factory=ParkingEnv, checkpoint=None,
              astar_cfg: HybridAStarConfig | None = None, mask_cfg: MaskConfig | None = None,
              out_dir=None, results_csv=None, seed: int = 0) -> MetricsRow:
    """Evaluate one method on every scenario of a suite.

    Episode logs go to ``out_dir/logs/<method>/``; the row is appended to
    ``results_csv`` when given.
    """
    manifest = Path(manifest)
    scenarios = load_suite(manifest)
    names = [ln.strip() for ln in manifest.read_text().splitlines() if ln.strip()]
    records = evaluate_scenarios(method, scenarios, env_factory, checkpoint, astar_cfg, mask_cfg,
                                 seed)
    for name, rec in zip(names, records):
        rec.scenario = name
    row = metrics_from_records(method.value, _scenario_class(scenarios), records)
    if out_dir is not None:
        log_dir = Path(out_dir) / "logs" / method.value
        log_dir.mkdir(parents=True, exist_ok=True)
        for name, rec in zip(names, records):
            write_episode_log(rec, log_dir / (Path(name).stem + ".log"))
    if results_csv is not None:
        append_results(results_csv, [row])
    return row


def evaluate_scenarios(method: Method, scenarios: Sequence[Scenario], env_factory=ParkingEnv,
                       checkpoint=None, astar_cfg: HybridAStarConfig | None = None,
                       mask_cfg: MaskConfig | None = None, seed: int = 0,
                       agent: SacAgent | None = None) -> list[EpisodeRecord]:
    env = env_factory()
    if method is Method.HYBRID_ASTAR:
        cfg = astar_cfg or HybridAStarConfig(seed=seed)
        return [astar_episode(env, sc, cfg) for sc in scenarios]
    if agent is None:
        if checkpoint is None:
            raise ValueError(f"method {method.value} needs a checkpoint")
        agent = load_checkpoint(checkpoint).agent
    encoder = make_encoder(env)
    if agent.obs_dim != encoder.dim:
        raise ValueError(f"checkpoint expects {agent.obs_dim} inputs, env gives {encoder.dim}")
    mode = PlannerMode.HYBRID if method is Method.HYBRID_RL else PlannerMode.PURE_SAC
    return [learned_episode(env, sc, agent, encoder, mode, mask_cfg, episode_rng(seed, i))
            for i, sc in enumerate(scenarios)]


# -- results files -----------------------------------------------------------

def append_results(path, rows: Sequence[MetricsRow]) -> Path:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if new:
        w.writerow(RESULTS_COLUMNS)
    for r in rows:
        w.writerow(r.csv_fields())
    with open(path, "a", newline="") as fh:
        fh.write(buf.getvalue())
    return path


def read_results(path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULTS_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [MetricsRow(r["method"], r["scenario_class"], int(r["episodes"]),
                           float(r["psr"]), float(r["angs"]), float(r["pl"]), float(r["aot"]))
                for r in reader]


def markdown_table(rows: Sequence[MetricsRow]) -> str:
    lines = ["| Method | Scenarios | Episodes | PSR (%) | ANGS | PL (m) | AOT (s) |",
             "|---|---|---|---|---|---|---|"]
    for r in rows:
        pl = "-" if math.isnan(r.pl) else f"{r.pl:.2f}"
        aot = "-" if math.isnan(r.aot) else f"{r.aot:.1f}"
        lines.append(f"| {r.method} | {r.scenario_class} | {r.episodes} | {r.psr:.2f} | "
                     f"{r.angs:.2f} | {pl} | {aot} |")
    return "\n".join(lines) + "\n"
