"""SAC training loop, with or without the Reeds-Shepp shortcut, plus policy evaluation."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .action_mask import MaskConfig
from .hybrid_planner import HybridPlanner, PlannerConfig, rollout
from .sac import (BeamEncoder, ReplayBuffer, SacAgent, SacConfig, Transition, load_checkpoint,
                  save_checkpoint)
from .simulator import Action, Observation, Outcome, ParkingEnv, Scenario


class PlannerMode(Enum):
    PURE_SAC = "pure_sac"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class TrainConfig:
    sac: SacConfig = field(default_factory=SacConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    eval_interval: int = 10_000
    eval_episodes: int = 10
    checkpoint_interval: int = 0  # 0: only at the end


@dataclass
class CurveRow:
    step: int
    episode_return: float
    eval_psr: float | None


@dataclass
class TrainResult:
    agent: SacAgent
    encoder: BeamEncoder
    curve: list[CurveRow]
    n_updates: int
    episodes: int


def make_encoder(env: ParkingEnv) -> BeamEncoder:
    return BeamEncoder(env.cfg.n_beams, env.cfg.max_range, env.vehicle)


def normalise_action(action: Action, env: ParkingEnv) -> np.ndarray:
    v = env.vehicle
    return np.array([action.velocity / v.max_speed, action.steering / v.max_steer])


def stochastic_policy(agent: SacAgent, encoder: BeamEncoder,
                      rng: np.random.Generator | None = None) -> Callable[[Observation], Action]:
    """Sampled actions; pass ``rng`` to keep the agent's own stream untouched."""
    def act(obs: Observation) -> Action:
        a, _, _ = agent.sample(encoder(obs)[None, :], rng)
        return Action(float(a[0, 0]), float(a[0, 1]))
    return act


def greedy_policy(agent: SacAgent, encoder: BeamEncoder) -> Callable[[Observation], Action]:
    def act(obs: Observation) -> Action:
        a = agent.deterministic(encoder(obs)[None, :])
        return Action(float(a[0, 0]), float(a[0, 1]))
    return act


def make_planner(env: ParkingEnv, policy, mode: PlannerMode,
                 mask_cfg: MaskConfig | None = None) -> HybridPlanner:
    cfg = PlannerConfig(use_rs=mode is PlannerMode.HYBRID,
                        safety_margin=env.collision_cfg.safety_margin,
                        sample_step=env.collision_cfg.sample_step, dt=env.cfg.dt)
    mask_cfg = mask_cfg or MaskConfig(dt=env.cfg.dt, safety_margin=cfg.safety_margin,
                                      sample_step=cfg.sample_step)
    return HybridPlanner(env.vehicle, policy, cfg, mask_cfg)


def episode_rng(seed: int, index: int) -> np.random.Generator:
    """Evaluation noise for one episode, independent of suite order and length."""
    return np.random.default_rng([int(seed), int(index), 0xE7A1])


def evaluate(env: ParkingEnv, agent: SacAgent, encoder: BeamEncoder, mode: PlannerMode,
             scenarios: Sequence[Scenario], mask_cfg: MaskConfig | None = None,
             seed: int = 0) -> float:
    """PSR (percent) of the sampled policy over ``scenarios``.

    The policy is sampled rather than run at its mean: a deterministic policy
    whose action the mask clips to standstill repeats it forever.
    """
    wins = 0
    for i, sc in enumerate(scenarios):
        env.reset(sc)
        policy = stochastic_policy(agent, encoder, episode_rng(seed, i))
        rec = rollout(env, make_planner(env, policy, mode, mask_cfg))
        wins += rec.success
    return 100.0 * wins / max(1, len(scenarios))


def write_curve(rows: list[CurveRow], path) -> Path:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "episode_return", "eval_psr"])
    for r in rows:
        w.writerow([r.step, repr(float(r.episode_return)),
                    "" if r.eval_psr is None else repr(float(r.eval_psr))])
    path.write_text(buf.getvalue())
    return path


def read_curve(path) -> list[CurveRow]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [CurveRow(int(r["step"]), float(r["episode_return"]),
                     float(r["eval_psr"]) if r["eval_psr"] else None) for r in rows]


def train(env_factory: Callable[[], ParkingEnv], scenarios: Sequence[Scenario],
          mode: PlannerMode, cfg: TrainConfig, budget_steps: int,
          eval_scenarios: Sequence[Scenario] = (), out_dir=None,
          log: Callable[[str], None] | None = None) -> TrainResult:
    """Run ``budget_steps`` environment steps of SAC training.

    RL steps store the unmasked policy action (the mask acts as part of the
    environment); RS steps store the tracking action. Timeouts are not
    treated as terminal. Gradient updates start once ``warmup_steps`` steps
    are collected; before that actions are uniform random.
    """
    if not scenarios:
        raise ValueError("need at least one training scenario")
    if budget_steps < 0:
        raise ValueError("budget_steps must be non-negative")
    env = env_factory()
    eval_env = env_factory()
    encoder = make_encoder(env)
    sc = cfg.sac
    vehicle = env.vehicle
    agent = SacAgent(encoder.dim, sc, (vehicle.max_speed, vehicle.max_steer))
    buffer = ReplayBuffer(sc.buffer_capacity, encoder.dim)
    rng = np.random.default_rng([sc.seed, 0xE1])  # scenario choice and warmup actions

    total = 0

    def policy(obs: Observation) -> Action:
        if total < sc.warmup_steps:
            return Action(float(rng.uniform(-vehicle.max_speed, vehicle.max_speed)),
                          float(rng.uniform(-vehicle.max_steer, vehicle.max_steer)))
        a, _, _ = agent.sample(encoder(obs)[None, :])
        return Action(float(a[0, 0]), float(a[0, 1]))

    planner = make_planner(env, policy, mode, cfg.mask)
    curve: list[CurveRow] = []
    last_eval: float | None = None
    next_eval = cfg.eval_interval if cfg.eval_interval > 0 else math.inf
    next_ckpt = cfg.checkpoint_interval if cfg.checkpoint_interval > 0 else math.inf
    episodes = 0
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    while total < budget_steps:
        scenario = scenarios[int(rng.integers(len(scenarios)))]
        obs = env.reset(scenario)
        planner.reset(env.planner_checker, scenario.target)
        ep_return = 0.0
        finished = False
        while total < budget_steps:
            decision = planner.act(env.state, obs)
            result = env.step(decision.action)
            total += 1
            ep_return += result.reward
            terminal = result.outcome in (Outcome.SUCCESS, Outcome.COLLISION)
            # RL steps store the raw policy action so the critic sees the mask as dynamics
            stored = decision.action if decision.raw_action is None else decision.raw_action
            buffer.add(Transition(encoder(obs), normalise_action(stored, env),
                                  result.reward, encoder(result.observation), terminal))
            obs = result.observation
            if total >= sc.warmup_steps and len(buffer) >= sc.batch_size:
                for _ in range(sc.updates_per_step):
                    agent.update(buffer.sample(sc.batch_size, agent.rng))
            if total >= next_eval:
                next_eval += cfg.eval_interval
                if eval_scenarios:
                    last_eval = evaluate(eval_env, agent, encoder, mode, eval_scenarios, cfg.mask,
                                         sc.seed)
                    if log:
                        log(f"[{mode.value}] step {total}: eval PSR {last_eval:.1f}%")
            if total >= next_ckpt and out is not None:
                next_ckpt += cfg.checkpoint_interval
                save_checkpoint(out / "checkpoint.npz", agent, {"train": rng}, buffer,
                                {"mode": mode.value, "step": total})
            if result.done:
                finished = True
                break
        if finished:
            episodes += 1
            curve.append(CurveRow(total, ep_return, last_eval))

    if out is not None:
        save_checkpoint(out / "checkpoint.npz", agent, {"train": rng}, None,
                        {"mode": mode.value, "step": total})
        write_curve(curve, out / "learning_curve.csv")
    return TrainResult(agent, encoder, curve, agent.n_updates, episodes)


def load_policy(path) -> tuple[SacAgent, dict]:
    ck = load_checkpoint(path)
    return ck.agent, ck.meta
