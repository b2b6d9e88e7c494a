"""Per-episode records and their text log format.

One line per step: ``t x y theta v delta reward outcome source`` followed by
``# key: value`` footer lines.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

FOOTER_KEYS = ("success", "gear_shifts", "path_length", "sim_time", "outcome", "scenario")


@dataclass
class StepLog:
    t: float
    x: float
    y: float
    theta: float
    v: float
    delta: float
    reward: float
    outcome: str
    source: str = "-"


@dataclass
class EpisodeRecord:
    steps: list[StepLog] = field(default_factory=list)
    outcome: str = "running"
    gear_shifts: int = 0
    path_length: float = 0.0
    sim_time: float = 0.0
    scenario: str = ""

    @property
    def success(self) -> bool:
        return self.outcome == "success"

    @property
    def total_reward(self) -> float:
        return sum(s.reward for s in self.steps)

    def sources(self) -> list[str]:
        return [s.source for s in self.steps]


def write_episode_log(rec: EpisodeRecord, path) -> Path:
    path = Path(path)
    lines = [f"{s.t!r} {s.x!r} {s.y!r} {s.theta!r} {s.v!r} {s.delta!r} {s.reward!r} "
             f"{s.outcome} {s.source}" for s in rec.steps]
    lines += [
        f"# success: {int(rec.success)}",
        f"# gear_shifts: {rec.gear_shifts}",
        f"# path_length: {rec.path_length!r}",
        f"# sim_time: {rec.sim_time!r}",
        f"# outcome: {rec.outcome}",
        f"# scenario: {rec.scenario}",
    ]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_episode_log(path) -> EpisodeRecord:
    path = Path(path)
    rec = EpisodeRecord()
    footer = {}
    for n, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            footer[key.strip()] = value.strip()
            continue
        parts = line.split()
        if len(parts) not in (8, 9):
            raise ValueError(f"{path}:{n}: expected 8 or 9 fields, got {len(parts)}")
        nums = [float(v) for v in parts[:7]]
        rec.steps.append(StepLog(*nums, parts[7], parts[8] if len(parts) == 9 else "-"))
    missing = [k for k in FOOTER_KEYS[:5] if k not in footer]
    if missing:
        raise ValueError(f"{path}: missing footer keys {missing}")
    rec.outcome = footer["outcome"]
    rec.gear_shifts = int(footer["gear_shifts"])
    rec.path_length = float(footer["path_length"])
    rec.sim_time = float(footer["sim_time"])
    rec.scenario = footer.get("scenario", "")
    if int(footer["success"]) != int(rec.success):
        raise ValueError(f"{path}: success flag disagrees with outcome")
    return rec
