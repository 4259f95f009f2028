"""Versioned ``.npz`` checkpoints of policy weights and optimiser state."""

from __future__ import annotations

import json
import zipfile
from pathlib import Path

import numpy as np

from .policies import LearningRates, PolicySet

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, policies: PolicySet, extra: dict | None = None) -> None:
    arrays = {}
    for i, agent in enumerate(policies.agents):
        for name, head in agent.heads.items():
            for k, p in enumerate(head.net.params):
                arrays[f"a{i}/{name}/p{k}"] = p
            opt = agent.opts[name]
            for k, (m, v) in enumerate(zip(opt.m, opt.v)):
                arrays[f"a{i}/{name}/m{k}"] = m
                arrays[f"a{i}/{name}/v{k}"] = v
            arrays[f"a{i}/{name}/t"] = np.array(opt.t)
            arrays[f"a{i}/{name}/lr"] = np.array(opt.lr)
    meta = {"version": FORMAT_VERSION, "algo": policies.algo, "kinds": list(policies.kinds),
            "obs_dim": policies.obs_dim, "hidden": list(policies.hidden), "extra": extra or {}}
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[PolicySet, dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("version") != FORMAT_VERSION:
                raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
            rng = np.random.default_rng(0)
            policies = PolicySet.create(meta["algo"], meta["kinds"], int(meta["obs_dim"]), rng,
                                        LearningRates(), tuple(meta["hidden"]))
            for i, agent in enumerate(policies.agents):
                for name, head in agent.heads.items():
                    opt = agent.opts[name]
                    for k, p in enumerate(head.net.params):
                        _assign(p, data[f"a{i}/{name}/p{k}"], path)
                        _assign(opt.m[k], data[f"a{i}/{name}/m{k}"], path)
                        _assign(opt.v[k], data[f"a{i}/{name}/v{k}"], path)
                    opt.t = int(data[f"a{i}/{name}/t"])
                    opt.lr = float(data[f"a{i}/{name}/lr"])
    except CheckpointError:
        raise
    except (zipfile.BadZipFile, KeyError, ValueError, OSError, EOFError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({type(exc).__name__}: {exc})") from None
    return policies, meta


def _assign(dst: np.ndarray, src: np.ndarray, path) -> None:
    if dst.shape != src.shape:
        raise CheckpointError(f"{path}: array shape {src.shape} does not match expected {dst.shape}")
    dst[...] = src
