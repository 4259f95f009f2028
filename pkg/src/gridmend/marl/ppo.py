"""Advantage estimation and the clipped surrogate objective."""

from __future__ import annotations

import numpy as np


def gae(rewards, values, gamma: float = 0.99, lam: float | None = None,
        last_value: float = 0.0, dones=None) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and discounted reward-to-go for a run of consecutive steps.

    ``delta_t = r_t + gamma V_{t+1} - V_t``; the value after a step flagged in
    ``dones`` is 0, and after the last step it is ``last_value`` (0 for a
    finished episode). With ``lam=None`` the advantage is the plain
    discounted sum of deltas; passing ``lam`` gives the usual lambda-weighted
    estimator.
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    if r.shape != v.shape:
        raise ValueError("rewards and values must align")
    done = np.zeros(r.size, dtype=bool) if dones is None else np.asarray(dones, dtype=bool)
    decay = gamma if lam is None else gamma * lam
    adv = np.zeros_like(r)
    ret = np.zeros_like(r)
    acc_a, acc_r = 0.0, last_value
    for t in reversed(range(r.size)):
        if done[t]:
            v_next, acc_a, acc_r = 0.0, 0.0, 0.0
        else:
            v_next = v[t + 1] if t + 1 < r.size else last_value
        delta = r[t] + gamma * v_next - v[t]
        acc_a = delta + decay * acc_a
        acc_r = r[t] + gamma * acc_r
        adv[t] = acc_a
        ret[t] = acc_r
    return adv, ret


def clipped_surrogate(logp_new, logp_old, adv, eps: float = 0.2) -> tuple[float, np.ndarray]:
    """Loss ``-mean(min(z A, clip(z, 1-eps, 1+eps) A))`` and its gradient in ``logp_new``."""
    logp_new = np.asarray(logp_new, dtype=float)
    adv = np.asarray(adv, dtype=float)
    n = logp_new.size
    if n == 0:
        return 0.0, np.zeros(0)
    ratio = np.exp(logp_new - np.asarray(logp_old, dtype=float))
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    surrogate = np.minimum(unclipped, clipped)
    # the gradient flows only where the unclipped arm is the minimum
    active = unclipped <= clipped
    dlogp = np.where(active, -unclipped / n, 0.0)
    return float(-surrogate.mean()), dlogp


def ppo_losses(batch: dict, eps: float = 0.2) -> dict[str, float]:
    """Loss values of every head for a batch of stored log-probabilities.

    ``batch`` maps head names (``hl``, ``ll_d``, ``ll_c``) to
    ``(logp_new, logp_old, adv)`` triples restricted to the steps where that
    head acted, plus ``critic`` -> ``(values, returns)``.
    """
    out = {}
    for head in ("hl", "ll_d", "ll_c"):
        if head in batch:
            out[head] = clipped_surrogate(*batch[head], eps=eps)[0]
    if "critic" in batch:
        v, ret = (np.asarray(a, dtype=float) for a in batch["critic"])
        out["critic"] = float(np.mean((v - ret) ** 2)) if v.size else 0.0
    return out
