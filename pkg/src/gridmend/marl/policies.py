"""Per-agent policy bundles and action selection.

``h2mappo`` agents carry a two-way mode actor (travel / power), a route
actor over the move list, a power-side actor (Gaussian magnitude for
mobile sources, repair bit for crews) and a critic over
``(obs, mode, contribution)``. ``ippo``/``mappo`` agents use one 2-D
Gaussian actor whose first coordinate is cut into route segments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import POWER, TRANSPORT, AgentAction, DecPomdpEnv
from ..transport import ROUTE_ARITY
from .nn import HIDDEN, Adam, CategoricalHead, GaussianHead, ValueHead

ALGOS = ("h2mappo", "ippo", "mappo")
MAGNITUDE_RANGE = {"meg": (0.0, 1.0), "mess": (-1.0, 1.0)}


@dataclass(frozen=True)
class LearningRates:
    hl: float = 1e-4
    ll_d: float = 1e-4
    ll_c: float = 1e-4
    critic: float = 1e-3


class H2Agent:
    def __init__(self, kind: str, obs_dim: int, rng: np.random.Generator, lr: LearningRates, hidden=HIDDEN):
        self.kind = kind
        self.obs_dim = obs_dim
        self.heads: dict = {
            "hl": CategoricalHead(obs_dim, 2, rng, hidden),
            "ll_d": CategoricalHead(obs_dim, ROUTE_ARITY, rng, hidden),
        }
        if kind == "rc":
            self.heads["ll_c"] = CategoricalHead(obs_dim, 2, rng, hidden)
        else:
            lo, hi = MAGNITUDE_RANGE[kind]
            self.heads["ll_c"] = GaussianHead(obs_dim, 1, rng, lo, hi, hidden)
        self.heads["critic"] = ValueHead(obs_dim + 2, rng, hidden)
        self.opts = {name: Adam(h.net.params, lr=getattr(lr, name)) for name, h in self.heads.items()}

    @staticmethod
    def critic_input(obs, x, xi) -> np.ndarray:
        obs = np.atleast_2d(obs)
        return np.hstack([obs, np.reshape(x, (-1, 1)).astype(float), np.reshape(xi, (-1, 1))])


class FlatAgent:
    def __init__(self, kind: str, obs_dim: int, critic_dim: int, rng: np.random.Generator, lr: LearningRates,
                 hidden=HIDDEN):
        self.kind = kind
        self.obs_dim = obs_dim
        self.heads = {
            "actor": GaussianHead(obs_dim, 2, rng, -1.0, 1.0, hidden),
            "critic": ValueHead(critic_dim, rng, hidden),
        }
        self.opts = {"actor": Adam(self.heads["actor"].net.params, lr=lr.hl),
                     "critic": Adam(self.heads["critic"].net.params, lr=lr.critic)}


def decode_flat(kind: str, a: np.ndarray) -> AgentAction:
    """Map a clipped 2-D action in [-1, 1]^2 to an environment action."""
    seg = min(int((a[0] + 1.0) / 2.0 * ROUTE_ARITY), ROUTE_ARITY - 1)
    if seg != 0:
        return AgentAction(TRANSPORT, seg)
    if kind == "rc":
        return AgentAction(POWER, 0, 0.0, int(a[1] > 0.0))
    mag = (a[1] + 1.0) / 2.0 if kind == "meg" else float(a[1])
    return AgentAction(POWER, 0, float(mag))


@dataclass
class Decision:
    """What one agent did at one step, with behaviour log-probs for the update."""

    acted: bool
    action: AgentAction
    x: int = TRANSPORT
    ll: object = None
    logp: dict = field(default_factory=dict)
    route_mask: np.ndarray | None = None
    repair_mask: np.ndarray | None = None


@dataclass
class PolicySet:
    algo: str
    kinds: tuple[str, ...]
    obs_dim: int
    agents: list
    hidden: tuple[int, ...] = HIDDEN

    @classmethod
    def create(cls, algo: str, kinds, obs_dim: int, rng: np.random.Generator,
               lr: LearningRates = LearningRates(), hidden=HIDDEN) -> "PolicySet":
        if algo not in ALGOS:
            raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGOS}")
        kinds = tuple(kinds)
        if algo == "h2mappo":
            agents = [H2Agent(k, obs_dim, rng, lr, hidden) for k in kinds]
        else:
            critic_dim = obs_dim * len(kinds) if algo == "mappo" else obs_dim
            agents = [FlatAgent(k, obs_dim, critic_dim, rng, lr, hidden) for k in kinds]
        return cls(algo, kinds, obs_dim, agents, tuple(hidden))

    def check_env(self, env: DecPomdpEnv) -> None:
        if tuple(env.kinds) != self.kinds or env.obs_dim != self.obs_dim:
            raise ValueError(
                f"policy/environment mismatch: policy has agents {self.kinds} with obs width {self.obs_dim}, "
                f"environment has {tuple(env.kinds)} with obs width {env.obs_dim}")

    def act(self, env: DecPomdpEnv, obs: list[np.ndarray], rng: np.random.Generator | None,
            deterministic: bool = False) -> list[Decision]:
        out = []
        for i, agent in enumerate(self.agents):
            if env.in_transit(i):
                out.append(Decision(False, AgentAction(TRANSPORT, 0)))
                continue
            o = obs[i][None]
            if self.algo == "h2mappo":
                out.append(self._act_h2(env, i, agent, o, rng, deterministic))
            else:
                head = agent.heads["actor"]
                if deterministic:
                    a = np.clip(head.mode(o), -1.0, 1.0)
                    out.append(Decision(True, decode_flat(agent.kind, a)))
                else:
                    raw, lp, a = head.sample(rng, o)
                    out.append(Decision(True, decode_flat(agent.kind, a), ll=raw, logp={"actor": lp}))
        return out

    def _act_h2(self, env, i, agent: H2Agent, o, rng, deterministic) -> Decision:
        h = agent.heads
        rmask = env.route_mask(i)
        pmask = np.array([True, env.repair_site(i) is not None])
        logp = {}
        if deterministic:
            x = h["hl"].mode(o)
        else:
            x, logp["hl"] = h["hl"].sample(rng, o)
        if x == TRANSPORT:
            if deterministic:
                k = h["ll_d"].mode(o, rmask)
            else:
                k, logp["ll_d"] = h["ll_d"].sample(rng, o, rmask)
            return Decision(True, AgentAction(TRANSPORT, k), x, k, logp, rmask, pmask)
        if agent.kind == "rc":
            if deterministic:
                b = h["ll_c"].mode(o, pmask)
            else:
                b, logp["ll_c"] = h["ll_c"].sample(rng, o, pmask)
            return Decision(True, AgentAction(POWER, 0, 0.0, b), x, b, logp, rmask, pmask)
        if deterministic:
            raw = h["ll_c"].mode(o)
            mag = float(np.clip(raw[0], h["ll_c"].low[0], h["ll_c"].high[0]))
        else:
            raw, logp["ll_c"], clipped = h["ll_c"].sample(rng, o)
            mag = float(clipped[0])
        return Decision(True, AgentAction(POWER, 0, mag), x, raw, logp, rmask, pmask)
