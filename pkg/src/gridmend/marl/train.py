"""On-policy training loops for H2MAPPO and the flat IPPO/MAPPO baselines."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..env import TRANSPORT, DecPomdpEnv
from .nn import HIDDEN
from .policies import ALGOS, Decision, H2Agent, LearningRates, PolicySet
from .ppo import clipped_surrogate, gae

log = logging.getLogger(__name__)

METRIC_FIELDS = ("episode", "reward", "hl_loss", "ll_d_loss", "ll_c_loss", "critic_loss", "wall_time", "steps")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 300
    batch: int = 24
    gamma: float = 0.99
    clip: float = 0.2
    gae_lambda: float | None = None
    lr: LearningRates = field(default_factory=LearningRates)
    hidden: tuple[int, ...] = HIDDEN
    seed: int = 0
    dump_dir: str | None = None


def episode_seed(seed: int, episode: int) -> int:
    """Environment seed for an episode; identical across algorithms for the same run seed."""
    return int(np.random.SeedSequence([seed, episode]).generate_state(1)[0])


@dataclass
class _Step:
    obs: list[np.ndarray]
    decisions: list[Decision]
    reward: float
    xi: np.ndarray
    done: bool


@dataclass
class TrainResult:
    policies: PolicySet
    metrics: list[dict]


def _rngs(seed: int):
    init = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    act = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    return init, act


def train(algo: str, env_factory: Callable[[], DecPomdpEnv], config: TrainConfig,
          policies: PolicySet | None = None, progress: Callable[[dict], None] | None = None) -> TrainResult:
    if algo not in ALGOS:
        raise ValueError(f"unknown algorithm {algo!r}")
    env = env_factory()
    init_rng, act_rng = _rngs(config.seed)
    if policies is None:
        policies = PolicySet.create(algo, env.kinds, env.obs_dim, init_rng, config.lr, config.hidden)
    policies.check_env(env)
    metrics: list[dict] = []
    buffer: list[_Step] = []
    losses: dict[str, list[float]] = {}
    for ep in range(config.episodes):
        t0 = time.perf_counter()
        obs = env.reset(seed=episode_seed(config.seed, ep))
        total = 0.0
        steps = 0
        while not env.done:
            decisions = policies.act(env, obs, act_rng)
            res = env.step([d.action for d in decisions])
            buffer.append(_Step(obs, decisions, res.reward, res.xi, res.done))
            total += res.reward
            steps += 1
            obs = res.obs
            if len(buffer) >= config.batch:
                for name, value in _update(policies, buffer, obs, config).items():
                    losses.setdefault(name, []).append(value)
                buffer = []
        row = {"episode": ep, "reward": total, "steps": steps, "wall_time": time.perf_counter() - t0}
        for name in ("hl", "ll_d", "ll_c", "critic"):
            vals = losses.pop(name, [])
            row[f"{name}_loss"] = float(np.mean(vals)) if vals else None
        metrics.append(row)
        if progress:
            progress(row)
    return TrainResult(policies, metrics)


def train_h2mappo(env_factory, config: TrainConfig, **kw) -> TrainResult:
    return train("h2mappo", env_factory, config, **kw)


def train_baseline(kind: str, env_factory, config: TrainConfig, **kw) -> TrainResult:
    if kind not in ("ippo", "mappo"):
        raise ValueError(f"baseline must be ippo or mappo, not {kind!r}")
    return train(kind, env_factory, config, **kw)


# -- updates -----------------------------------------------------------------


def _critic_inputs(policies: PolicySet, i: int, steps: list[_Step], next_obs=None):
    obs = np.array([s.obs[i] for s in steps])
    if policies.algo == "h2mappo":
        x = np.array([s.decisions[i].x if s.decisions[i].acted else TRANSPORT for s in steps])
        xi = np.array([s.xi[i] if s.decisions[i].acted and s.decisions[i].x != TRANSPORT else 0.0
                       for s in steps])
        return H2Agent.critic_input(obs, x, xi)
    if policies.algo == "mappo":
        return np.array([np.concatenate(s.obs) for s in steps])
    return obs


def _bootstrap(policies: PolicySet, i: int, steps: list[_Step], next_obs) -> float:
    if steps[-1].done:
        return 0.0
    critic = policies.agents[i].heads["critic"]
    if policies.algo == "h2mappo":
        x = H2Agent.critic_input(next_obs[i][None], [TRANSPORT], [0.0])
    elif policies.algo == "mappo":
        x = np.concatenate(next_obs)[None]
    else:
        x = next_obs[i][None]
    return float(critic.value(x)[0])


def _check(name: str, value: float, config: TrainConfig, context: dict) -> None:
    if np.isfinite(value):
        return
    msg = f"non-finite {name} loss"
    if config.dump_dir:
        path = Path(config.dump_dir)
        path.mkdir(parents=True, exist_ok=True)
        dump = path / "nan_dump.json"
        dump.write_text(json.dumps({k: np.asarray(v).tolist() for k, v in context.items()}, indent=1))
        msg += f"; diagnostics written to {dump}"
    raise TrainingError(msg)


def _update(policies: PolicySet, steps: list[_Step], next_obs, config: TrainConfig) -> dict[str, float]:
    """One pass over the batch: each head is stepped once on the transitions where it acted."""
    rewards = np.array([s.reward for s in steps])
    dones = np.array([s.done for s in steps])
    out: dict[str, list[float]] = {}
    for i, agent in enumerate(policies.agents):
        critic = agent.heads["critic"]
        cin = _critic_inputs(policies, i, steps)
        values = critic.value(cin)
        adv, ret = gae(rewards, values, config.gamma, config.gae_lambda,
                       _bootstrap(policies, i, steps, next_obs), dones)
        decs = [s.decisions[i] for s in steps]
        obs = np.array([s.obs[i] for s in steps])
        if policies.algo == "h2mappo":
            parts = _h2_heads(decs)
        else:
            parts = {"hl": [j for j, d in enumerate(decs) if d.acted]}
        for name, idx in parts.items():
            if not idx:
                continue
            idx = np.asarray(idx)
            head_key = "actor" if policies.algo != "h2mappo" else name
            head = agent.heads[head_key]
            old = np.array([decs[j].logp[head_key] for j in idx])
            if policies.algo == "h2mappo" and name == "hl":
                logp, cache = head.log_prob(obs[idx], [decs[j].x for j in idx])
            elif policies.algo == "h2mappo" and name == "ll_d":
                logp, cache = head.log_prob(obs[idx], [decs[j].ll for j in idx],
                                            np.array([decs[j].route_mask for j in idx]))
            elif policies.algo == "h2mappo" and agent.kind == "rc":
                logp, cache = head.log_prob(obs[idx], [decs[j].ll for j in idx],
                                            np.array([decs[j].repair_mask for j in idx]))
            else:
                logp, cache = head.log_prob(obs[idx], np.array([decs[j].ll for j in idx]))
            loss, dlogp = clipped_surrogate(logp, old, adv[idx], config.clip)
            _check(name, loss, config, {"logp": logp, "old": old, "adv": adv[idx]})
            agent.opts[head_key].step(head.backprop_logp(cache, dlogp))
            out.setdefault(name if policies.algo == "h2mappo" else "hl", []).append(loss)
        closs, grads = critic.mse_grad(cin, ret)
        _check("critic", closs, config, {"values": values, "returns": ret})
        agent.opts["critic"].step(grads)
        out.setdefault("critic", []).append(closs)
    return {k: float(np.mean(v)) for k, v in out.items()}


def _h2_heads(decs: list[Decision]) -> dict[str, list[int]]:
    parts = {"hl": [], "ll_d": [], "ll_c": []}
    for j, d in enumerate(decs):
        if not d.acted:
            continue
        parts["hl"].append(j)
        parts["ll_d" if d.x == TRANSPORT else "ll_c"].append(j)
    return parts


def config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["hidden"] = list(config.hidden)
    return d
