"""Experiment orchestration: training / baseline runs, evaluation, metrics.

RNG stream map per run (children of SeedSequence(scenario.seed)):
slot 0 = training environment, slot 1 = agent (which sub-spawns its own
init/exploration/smoothing/sampling streams), slot 2 = baseline policy,
slot 3 = evaluation environment, slot 4 = evaluation policy.

CSV outputs carry no timestamps so a rerun with the same config and
seed is byte-identical; wall-clock timing lives in run_meta.json.

steps.csv schema:    episode,step,reward,total_power,max_abs_ratio_residual,converged
episodes.csv schema: episode,mean_reward
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import agent as agent_mod
from . import nn
from .config import ScenarioConfig, jam_weights, scenario_hash, scenario_to_dict
from .env import RisJamEnv

__all__ = [
    "DivergenceError",
    "MetricsLog",
    "EvalResult",
    "run_training",
    "run_baseline",
    "evaluate",
    "jam_weights",
    "format_value",
    "write_csv",
]

TWO_PI = 2.0 * math.pi


class DivergenceError(RuntimeError):
    """Training produced a non-finite reward or loss (CLI exit code 2)."""


def format_value(v) -> str:
    """Deterministic CSV cell formatting (shortest round-trip floats)."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])


@dataclass
class MetricsLog:
    """Per-step and per-episode training traces."""

    steps: list = field(default_factory=list)       # dict rows
    episodes: list = field(default_factory=list)
    wall_clock: float = 0.0                          # seconds, not serialized to CSV

    def log_step(self, episode, step, reward, total_power, residuals, converged):
        self.steps.append({
            "episode": episode, "step": step, "reward": reward,
            "total_power": total_power,
            "max_abs_ratio_residual": float(np.max(np.abs(residuals), initial=0.0)),
            "converged": bool(converged),
        })

    def close_episode(self, episode):
        rewards = [s["reward"] for s in self.steps if s["episode"] == episode]
        self.episodes.append({"episode": episode,
                              "mean_reward": float(np.mean(rewards))})

    def episode_mean(self, episode) -> float:
        for e in self.episodes:
            if e["episode"] == episode:
                return e["mean_reward"]
        raise KeyError(episode)

    def mean_reward(self, last_episodes: int | None = None) -> float:
        eps = self.episodes[-last_episodes:] if last_episodes else self.episodes
        return float(np.mean([e["mean_reward"] for e in eps]))

    def write_csvs(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "steps.csv"),
                  ["episode", "step", "reward", "total_power",
                   "max_abs_ratio_residual", "converged"],
                  [[s["episode"], s["step"], s["reward"], s["total_power"],
                    s["max_abs_ratio_residual"], s["converged"]] for s in self.steps])
        write_csv(os.path.join(out_dir, "episodes.csv"),
                  ["episode", "mean_reward"],
                  [[e["episode"], e["mean_reward"]] for e in self.episodes])


def _streams(scenario: ScenarioConfig):
    ss = np.random.SeedSequence(scenario.seed)
    return ss.spawn(5)


def run_training(scenario: ScenarioConfig, out_dir=None):
    """Full training run of a learning scenario; returns (log, agent).

    Writes steps.csv / episodes.csv / run_meta.json and per-episode
    checkpoints (checkpoint_latest overwritten each episode, plus a
    final checkpoint_final) when out_dir is given.
    """
    if scenario.kind not in ("psd-td3", "psd-ddpg"):
        raise ValueError("run_training needs a psd-td3 or psd-ddpg scenario")
    env_ss, agent_ss, _, _, _ = _streams(scenario)
    cfg = scenario.td3
    if scenario.kind == "psd-ddpg" and cfg.variant != "ddpg":
        cfg = replace(cfg, variant="ddpg")
    env = RisJamEnv(scenario, np.random.default_rng(env_ss))
    td3_agent = agent_mod.Td3Agent(env.state_dim, env.action_dim, cfg, agent_ss)

    log = MetricsLog()
    t0 = time.perf_counter()
    for ep in range(cfg.episodes):
        state = env.reset()
        for t in range(cfg.steps_per_episode):
            action = td3_agent.act(state, explore=True)
            out = env.step(action)
            if not math.isfinite(out.reward):
                raise DivergenceError(f"non-finite reward at episode {ep} step {t}")
            td3_agent.observe(state, action, out.reward, out.next_state)
            try:
                td3_agent.train_step()
            except nn.NonFiniteGradientError as exc:
                raise DivergenceError(f"update diverged at episode {ep} step {t}: {exc}")
            log.log_step(ep, t, out.reward, out.info.total_power,
                         out.info.ratio_residuals, out.info.converged)
            state = out.next_state
        log.close_episode(ep)
        if out_dir is not None:
            agent_mod.save_checkpoint(td3_agent.params,
                                      os.path.join(out_dir, "checkpoint_latest"),
                                      episode=ep, step=cfg.steps_per_episode)
    log.wall_clock = time.perf_counter() - t0

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        agent_mod.save_checkpoint(td3_agent.params,
                                  os.path.join(out_dir, "checkpoint_final"),
                                  episode=cfg.episodes - 1,
                                  step=cfg.steps_per_episode)
        log.write_csvs(out_dir)
        meta = {"scenario": scenario_to_dict(scenario),
                "scenario_hash": scenario_hash(scenario),
                "wall_clock_s": log.wall_clock}
        with open(os.path.join(out_dir, "run_meta.json"), "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=1, sort_keys=True, default=str)
    return log, td3_agent


def run_baseline(scenario: ScenarioConfig, out_dir=None) -> MetricsLog:
    """random-ris draws fresh uniform phases per step; no-ris runs bare."""
    if scenario.kind not in ("random-ris", "no-ris"):
        raise ValueError("run_baseline needs a random-ris or no-ris scenario")
    env_ss, _, policy_ss, _, _ = _streams(scenario)
    env = RisJamEnv(scenario, np.random.default_rng(env_ss))
    policy_rng = np.random.default_rng(policy_ss)
    cfg = scenario.td3

    log = MetricsLog()
    t0 = time.perf_counter()
    for ep in range(cfg.episodes):
        env.reset()
        for t in range(cfg.steps_per_episode):
            if scenario.kind == "random-ris" and env.action_dim > 0:
                action = policy_rng.uniform(0.0, TWO_PI, size=env.action_dim)
            else:
                action = np.zeros(env.action_dim)
            out = env.step(action)
            log.log_step(ep, t, out.reward, out.info.total_power,
                         out.info.ratio_residuals, out.info.converged)
        log.close_episode(ep)
    log.wall_clock = time.perf_counter() - t0
    if out_dir is not None:
        log.write_csvs(out_dir)
    return log


@dataclass(frozen=True)
class EvalResult:
    mean_rate: float
    std_rate: float
    mean_rate_q1: float
    mean_rate_q2: float
    rewards: tuple
    n_steps: int


def evaluate(scenario: ScenarioConfig, params: agent_mod.AgentParams | None = None,
             steps: int | None = None) -> EvalResult:
    """One exploration-free test episode (scenario.eval_steps long)."""
    _, _, _, eval_env_ss, eval_policy_ss = _streams(scenario)
    env = RisJamEnv(scenario, np.random.default_rng(eval_env_ss))
    policy_rng = np.random.default_rng(eval_policy_ss)
    n_steps = steps if steps is not None else scenario.eval_steps
    cfg = scenario.td3
    if scenario.kind in ("psd-td3", "psd-ddpg") and params is None:
        raise ValueError("evaluating a learning scenario needs trained parameters")

    state = env.reset()
    rewards, q1_trace, q2_trace = [], [], []
    for _ in range(n_steps):
        if scenario.kind in ("psd-td3", "psd-ddpg"):
            action = agent_mod.select_action(params, state, cfg, policy_rng,
                                             explore=False)
        elif scenario.kind == "random-ris" and env.action_dim > 0:
            action = policy_rng.uniform(0.0, TWO_PI, size=env.action_dim)
        else:
            action = np.zeros(env.action_dim)
        out = env.step(action)
        rewards.append(out.reward)
        q1_trace.append(float(out.info.summary.per_user_rate_q1.sum()))
        q2_trace.append(float(out.info.summary.per_user_rate_q2.sum()))
        state = out.next_state
    return EvalResult(mean_rate=float(np.mean(rewards)),
                      std_rate=float(np.std(rewards)),
                      mean_rate_q1=float(np.mean(q1_trace)),
                      mean_rate_q2=float(np.mean(q2_trace)),
                      rewards=tuple(rewards), n_steps=n_steps)
