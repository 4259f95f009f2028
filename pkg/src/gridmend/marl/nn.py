"""Small feed-forward networks with hand-written backprop, policy heads and Adam."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HIDDEN = (128, 64)
ACTOR_GAIN = 0.01
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class Mlp:
    """ReLU hidden layers, linear output. ``params`` alternates weights and biases."""

    sizes: tuple[int, ...]
    params: list[np.ndarray]

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, out_gain: float = 1.0) -> "Mlp":
        sizes = tuple(int(s) for s in sizes)
        params = []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / math.sqrt(fan_in)
            W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            if k == len(sizes) - 2:
                W *= out_gain
            params += [W, np.zeros(fan_out)]
        return cls(sizes, params)

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def forward(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.in_dim:
            raise ValueError(f"input width {x.shape[1]} != {self.in_dim}")
        acts = [x]
        h = x
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            h = h @ self.params[2 * k] + self.params[2 * k + 1]
            if k < n_layers - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def backward(self, acts, dout: np.ndarray) -> list[np.ndarray]:
        grads: list[np.ndarray] = [None] * len(self.params)
        g = dout
        n_layers = len(self.params) // 2
        for k in reversed(range(n_layers)):
            h_in = acts[k]
            grads[2 * k] = h_in.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k:
                g = (g @ self.params[2 * k].T) * (acts[k] > 0)
        return grads

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, [p.copy() for p in self.params])


# -- categorical -----------------------------------------------------------


def masked_softmax(logits: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    z = np.atleast_2d(np.asarray(logits, dtype=float))
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not mask.any(axis=1).all():
            raise ValueError("every row needs at least one unmasked entry")
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class CategoricalHead:
    def __init__(self, in_dim: int, n: int, rng: np.random.Generator, hidden=HIDDEN, gain=ACTOR_GAIN):
        self.n = n
        self.net = Mlp.init((in_dim, *hidden, n), rng, gain)

    def probs(self, obs, mask=None) -> np.ndarray:
        logits, _ = self.net.forward(obs)
        return masked_softmax(logits, mask)

    def sample(self, rng, obs, mask=None) -> tuple[int, float]:
        p = self.probs(obs, mask)[0]
        a = int(rng.choice(self.n, p=p))
        return a, float(np.log(p[a]))

    def mode(self, obs, mask=None) -> int:
        return int(np.argmax(self.probs(obs, mask)[0]))

    def log_prob(self, obs, actions, mask=None):
        logits, acts = self.net.forward(obs)
        p = masked_softmax(logits, mask)
        idx = np.asarray(actions, dtype=int)
        rows = np.arange(len(idx))
        with np.errstate(divide="ignore"):
            logp = np.log(p[rows, idx])
        return logp, (acts, p, idx)

    def backprop_logp(self, cache, dlogp: np.ndarray) -> list[np.ndarray]:
        """Gradient of ``sum(dlogp * logp)`` with respect to the parameters."""
        acts, p, idx = cache
        onehot = np.zeros_like(p)
        onehot[np.arange(len(idx)), idx] = 1.0
        dlogits = dlogp[:, None] * (onehot - p)
        return self.net.backward(acts, dlogits)


# -- gaussian --------------------------------------------------------------


class GaussianHead:
    """Diagonal Gaussian. Mean is tanh-squashed into ``[low, high]``; stddev is softplus."""

    def __init__(self, in_dim: int, dims: int, rng: np.random.Generator, low=-1.0, high=1.0,
                 hidden=HIDDEN, gain=ACTOR_GAIN):
        self.dims = dims
        self.low = np.broadcast_to(np.asarray(low, dtype=float), (dims,)).copy()
        self.high = np.broadcast_to(np.asarray(high, dtype=float), (dims,)).copy()
        self.net = Mlp.init((in_dim, *hidden, 2 * dims), rng, gain)

    def _split(self, out):
        m, s = out[:, : self.dims], out[:, self.dims:]
        half = 0.5 * (self.high - self.low)
        mu = self.low + half * (np.tanh(m) + 1.0)
        sigma = softplus(s)
        return m, s, mu, sigma

    def params(self, obs) -> tuple[np.ndarray, np.ndarray]:
        out, _ = self.net.forward(obs)
        _, _, mu, sigma = self._split(out)
        return mu, sigma

    def sample(self, rng, obs) -> tuple[np.ndarray, float, np.ndarray]:
        """Returns (raw draw, its log-density, draw clipped to the legal interval)."""
        mu, sigma = self.params(obs)
        raw = mu[0] + sigma[0] * rng.standard_normal(self.dims)
        logp = float(gaussian_logp(raw[None], mu, sigma)[0])
        return raw, logp, np.clip(raw, self.low, self.high)

    def mode(self, obs) -> np.ndarray:
        return self.params(obs)[0][0]

    def log_prob(self, obs, raw):
        out, acts = self.net.forward(obs)
        m, s, mu, sigma = self._split(out)
        raw = np.asarray(raw, dtype=float).reshape(len(mu), self.dims)
        return gaussian_logp(raw, mu, sigma), (acts, m, s, mu, sigma, raw)

    def backprop_logp(self, cache, dlogp: np.ndarray) -> list[np.ndarray]:
        acts, m, s, mu, sigma, raw = cache
        z = (raw - mu) / sigma
        dmu = z / sigma
        dsigma = (z * z - 1.0) / sigma
        half = 0.5 * (self.high - self.low)
        dm = dlogp[:, None] * dmu * half * (1.0 - np.tanh(m) ** 2)
        ds = dlogp[:, None] * dsigma * sigmoid(s)
        return self.net.backward(acts, np.hstack([dm, ds]))


def gaussian_logp(x, mu, sigma) -> np.ndarray:
    z = (x - mu) / sigma
    return np.sum(-0.5 * z * z - np.log(sigma) - LOG_SQRT_2PI, axis=1)


# -- value -----------------------------------------------------------------


class ValueHead:
    def __init__(self, in_dim: int, rng: np.random.Generator, hidden=HIDDEN):
        self.net = Mlp.init((in_dim, *hidden, 1), rng, 1.0)

    def value(self, x) -> np.ndarray:
        out, _ = self.net.forward(x)
        return out[:, 0]

    def mse_grad(self, x, targets) -> tuple[float, list[np.ndarray]]:
        out, acts = self.net.forward(x)
        diff = out[:, 0] - np.asarray(targets, dtype=float)
        loss = float(np.mean(diff ** 2))
        dout = (2.0 / len(diff)) * diff[:, None]
        return loss, self.net.backward(acts, dout)


# -- optimiser -------------------------------------------------------------


@dataclass
class Adam:
    params: list[np.ndarray]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p) for p in self.params]
            self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads: list[np.ndarray]) -> None:
        """In-place update of ``params``; a zero gradient leaves them untouched."""
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
