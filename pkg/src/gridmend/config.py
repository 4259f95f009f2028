"""TOML run configuration."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .env import ConfigError, EnvConfig, load_env_config
from .marl.nn import HIDDEN
from .marl.policies import ALGOS, LearningRates
from .marl.train import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    scenario: Path
    net: Path | None = None
    transport: Path | None = None
    profiles: Path | None = None
    algorithm: str = "h2mappo"
    seeds: tuple[int, ...] = (0,)
    episodes: int = 300
    out: Path = Path("runs")
    train_split: str = "train"
    eval_split: str = "test"
    eval_days: int | None = None
    batch: int = 24
    gamma: float = 0.99
    clip: float = 0.2
    gae_lambda: float | None = None
    lr: LearningRates = field(default_factory=LearningRates)
    hidden: tuple[int, ...] = HIDDEN
    source_hash: str = ""

    def __post_init__(self):
        if self.algorithm not in ALGOS:
            raise ConfigError(f"algorithm must be one of {ALGOS}, got {self.algorithm!r}")
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if self.episodes < 0:
            raise ConfigError("episodes must be >= 0")
        for label in ("scenario", "net", "transport", "profiles"):
            p = getattr(self, label)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{label} path does not exist: {p}")

    def train_config(self, seed: int, dump_dir=None) -> TrainConfig:
        return TrainConfig(episodes=self.episodes, batch=self.batch, gamma=self.gamma, clip=self.clip,
                           gae_lambda=self.gae_lambda, lr=self.lr, hidden=self.hidden, seed=seed,
                           dump_dir=None if dump_dir is None else str(dump_dir))

    def env_config(self, split: str) -> EnvConfig:
        overrides = {}
        if self.net is not None:
            overrides["network"] = str(self.net.resolve())
        if self.transport is not None:
            overrides["transport"] = str(self.transport.resolve())
        if self.profiles is not None:
            overrides["profiles"] = {"directory": str(self.profiles.resolve())}
        return load_env_config(self.scenario, split, overrides)

    def to_dict(self) -> dict:
        return {
            "paths": {k: None if getattr(self, k) is None else str(getattr(self, k))
                      for k in ("scenario", "net", "transport", "profiles")},
            "algorithm": self.algorithm, "seeds": list(self.seeds), "episodes": self.episodes,
            "out": str(self.out), "train_split": self.train_split, "eval_split": self.eval_split,
            "eval_days": self.eval_days, "batch": self.batch, "gamma": self.gamma, "clip": self.clip,
            "gae_lambda": self.gae_lambda, "lr": vars(self.lr), "hidden": list(self.hidden),
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


_KNOWN = {
    "paths": {"scenario", "net", "transport", "profiles"},
    "run": {"algorithm", "seeds", "episodes", "out", "train_split"},
    "eval": {"split", "days"},
    "hyper": {"batch", "gamma", "clip", "gae_lambda", "lr_hl", "lr_ll_d", "lr_ll_c", "lr_critic", "hidden"},
}


def load_run_config(path, **overrides) -> RunConfig:
    """Parse a run config; relative input paths resolve against the file's directory,
    the output directory against the working directory.

    Keyword overrides (``episodes``, ``seeds``, ``algorithm``, ``out``) win over the file.
    """
    path = Path(path)
    try:
        text = path.read_bytes()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        raw = tomllib.loads(text.decode())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for section, body in raw.items():
        if section not in _KNOWN or not isinstance(body, dict):
            raise ConfigError(f"{path}: unknown section [{section}]")
        unknown = set(body) - _KNOWN[section]
        if unknown:
            raise ConfigError(f"{path}: unknown keys in [{section}]: {sorted(unknown)}")
    base = path.parent
    paths = raw.get("paths", {})
    run = raw.get("run", {})
    ev = raw.get("eval", {})
    hyper = raw.get("hyper", {})

    def p(key):
        v = paths.get(key)
        if v is None:
            return None
        q = Path(v)
        return q if q.is_absolute() else base / q

    if p("scenario") is None:
        raise ConfigError(f"{path}: [paths] scenario is required")
    defaults = LearningRates()
    lr = LearningRates(
        hl=float(hyper.get("lr_hl", defaults.hl)), ll_d=float(hyper.get("lr_ll_d", defaults.ll_d)),
        ll_c=float(hyper.get("lr_ll_c", defaults.ll_c)), critic=float(hyper.get("lr_critic", defaults.critic)))
    seeds = run.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    out = Path(run.get("out", "runs"))
    try:
        cfg = RunConfig(
            scenario=p("scenario"), net=p("net"), transport=p("transport"), profiles=p("profiles"),
            algorithm=str(run.get("algorithm", "h2mappo")),
            seeds=tuple(int(s) for s in seeds),
            episodes=int(run.get("episodes", 300)),
            out=out,
            train_split=str(run.get("train_split", "train")),
            eval_split=str(ev.get("split", "test")),
            eval_days=None if ev.get("days") is None else int(ev["days"]),
            batch=int(hyper.get("batch", 24)), gamma=float(hyper.get("gamma", 0.99)),
            clip=float(hyper.get("clip", 0.2)),
            gae_lambda=None if hyper.get("gae_lambda") is None else float(hyper["gae_lambda"]),
            lr=lr, hidden=tuple(int(h) for h in hyper.get("hidden", HIDDEN)),
            source_hash=hashlib.sha256(text).hexdigest(),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None
    changes = {k: v for k, v in overrides.items() if v is not None}
    if "seeds" in changes:
        changes["seeds"] = tuple(changes["seeds"])
    if "out" in changes:
        changes["out"] = Path(changes["out"])
    return replace(cfg, **changes) if changes else cfg
