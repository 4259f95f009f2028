"""Greedy rollouts of trained policies over profile days."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..env import DecPomdpEnv
from .policies import PolicySet
from .train import episode_seed

EVAL_FIELDS = ("day", "lambda_sum", "mean_select_ms", "max_select_ms", "mean_step_ms")


@dataclass
class DayResult:
    day: int
    lambda_sum: float
    select_ms: list[float]
    step_ms: list[float]
    xi_totals: dict[str, float]
    trace: list[dict]

    def row(self) -> dict:
        r = {"day": self.day, "lambda_sum": self.lambda_sum,
             "mean_select_ms": float(np.mean(self.select_ms)) if self.select_ms else 0.0,
             "max_select_ms": float(np.max(self.select_ms)) if self.select_ms else 0.0,
             "mean_step_ms": float(np.mean(self.step_ms)) if self.step_ms else 0.0}
        r.update({f"xi_{k}": v for k, v in self.xi_totals.items()})
        return r


def evaluate_day(policies: PolicySet, env: DecPomdpEnv, day: int, seed: int = 0) -> DayResult:
    policies.check_env(env)
    obs = env.reset(seed=episode_seed(seed, 1_000_000 + day), day=day)
    total = 0.0
    select_ms, step_ms = [], []
    xi = np.zeros(env.n_agents)
    while not env.done:
        t0 = time.perf_counter()
        decisions = policies.act(env, obs, None, deterministic=True)
        t1 = time.perf_counter()
        res = env.step([d.action for d in decisions])
        t2 = time.perf_counter()
        select_ms.append((t1 - t0) * 1e3)
        step_ms.append((t2 - t1) * 1e3)
        total += res.reward
        xi += res.xi
        obs = res.obs
    totals = {a.id: float(x) for a, x in zip(env.agents, xi)}
    return DayResult(day, total, select_ms, step_ms, totals, list(env.trace))


def evaluate(policies: PolicySet, env_factory: Callable[[], DecPomdpEnv], days=None,
             seed: int = 0) -> list[DayResult]:
    """Run one greedy episode per day index (all days of the env's split by default)."""
    env = env_factory()
    if days is None:
        days = range(env.cfg.profiles.n_days)
    return [evaluate_day(policies, env, int(d), seed) for d in days]
