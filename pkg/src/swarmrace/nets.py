"""Actor/critic networks with hand-written reverse-mode gradients.

Both networks are two-hidden-layer perceptrons (tanh activations). The actor
squashes its output through a final tanh so the action mean stays inside
(-1, 1)^4 and exposes a state-independent learnable log standard deviation per
action channel. The critic is an unsquashed scalar head. No autodiff
framework: forward passes cache activations and ``backward`` replays the chain
rule explicitly, which keeps the whole training path in plain numpy.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError

LOG_SPREAD_MIN = -20.0
LOG_SPREAD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)


def orthogonal_init(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    """Orthogonal matrix scaled by gain, from QR of a Gaussian draw."""
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


class Mlp:
    """Two-hidden-layer perceptron. Weights are (in, out) matrices.

    ``activation`` may be "tanh" or "identity"; the latter exists so tests can
    compare gradients against closed-form linear-model answers.
    """

    def __init__(self, weights, biases, squash_output: bool, activation: str = "tanh"):
        if len(weights) != 3 or len(biases) != 3:
            raise ConfigError("Mlp expects exactly 3 weight/bias pairs")
        if activation not in ("tanh", "identity"):
            raise ConfigError(f"unknown activation {activation!r}")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.squash_output = squash_output
        self.activation = activation

    @classmethod
    def create(cls, rng, in_dim: int, hidden: int, out_dim: int, squash_output: bool,
               head_gain: float, activation: str = "tanh") -> "Mlp":
        gain = math.sqrt(2.0)
        weights = [
            orthogonal_init(rng, in_dim, hidden, gain),
            orthogonal_init(rng, hidden, hidden, gain),
            orthogonal_init(rng, hidden, out_dim, head_gain),
        ]
        biases = [np.zeros(hidden), np.zeros(hidden), np.zeros(out_dim)]
        return cls(weights, biases, squash_output, activation)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[2].shape[1]

    def _act(self, z):
        return np.tanh(z) if self.activation == "tanh" else z

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ConfigError(f"input shape {x.shape} does not match network input {self.in_dim}")
        return x

    def forward(self, x) -> np.ndarray:
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x):
        x = self._check_input(x)
        h1 = self._act(x @ self.weights[0] + self.biases[0])
        h2 = self._act(h1 @ self.weights[1] + self.biases[1])
        out = h2 @ self.weights[2] + self.biases[2]
        if self.squash_output:
            out = np.tanh(out)
        return out, (x, h1, h2, out)

    def backward(self, cache, dout):
        """Gradients of sum(dout * out) with respect to weights and biases."""
        x, h1, h2, out = cache
        dout = np.asarray(dout, dtype=float)
        if dout.shape != out.shape:
            raise ConfigError(f"upstream gradient shape {dout.shape} != output shape {out.shape}")
        dz3 = dout * (1.0 - out * out) if self.squash_output else dout
        dw3 = h2.T @ dz3
        db3 = dz3.sum(axis=0)
        dh2 = dz3 @ self.weights[2].T
        dz2 = dh2 * (1.0 - h2 * h2) if self.activation == "tanh" else dh2
        dw2 = h1.T @ dz2
        db2 = dz2.sum(axis=0)
        dh1 = dz2 @ self.weights[1].T
        dz1 = dh1 * (1.0 - h1 * h1) if self.activation == "tanh" else dh1
        dw1 = x.T @ dz1
        db1 = dz1.sum(axis=0)
        return [dw1, dw2, dw3], [db1, db2, db3]


class PolicyValueNet:
    """Shared policy for all drones: one actor, one critic, one log_spread."""

    def __init__(self, actor: Mlp, critic: Mlp, log_spread: np.ndarray):
        if not actor.squash_output:
            raise ConfigError("actor must squash its output")
        if critic.squash_output or critic.out_dim != 1:
            raise ConfigError("critic must be an unsquashed scalar head")
        if actor.in_dim != critic.in_dim:
            raise ConfigError("actor and critic must share the observation length")
        self.actor = actor
        self.critic = critic
        self.log_spread = np.asarray(log_spread, dtype=float)
        if self.log_spread.shape != (actor.out_dim,):
            raise ConfigError("log_spread length must match the action dimension")

    @classmethod
    def create(cls, rng, obs_len: int, hidden: int = 128, n_actions: int = 4) -> "PolicyValueNet":
        actor = Mlp.create(rng, obs_len, hidden, n_actions, squash_output=True, head_gain=0.01)
        critic = Mlp.create(rng, obs_len, hidden, 1, squash_output=False, head_gain=1.0)
        return cls(actor, critic, np.zeros(n_actions))

    @property
    def obs_len(self) -> int:
        return self.actor.in_dim

    @property
    def n_actions(self) -> int:
        return self.actor.out_dim

    def actor_forward(self, obs):
        mean = self.actor.forward(obs)
        return mean, self.log_spread

    def critic_forward(self, obs):
        return self.critic.forward(obs)[:, 0]

    def to_arrays(self) -> dict:
        out = {}
        for prefix, net in (("actor", self.actor), ("critic", self.critic)):
            for k in range(3):
                out[f"{prefix}.w{k}"] = net.weights[k]
                out[f"{prefix}.b{k}"] = net.biases[k]
        out["log_spread"] = self.log_spread
        return out

    @classmethod
    def from_arrays(cls, arrays: dict) -> "PolicyValueNet":
        try:
            actor = Mlp(
                [arrays["actor.w0"], arrays["actor.w1"], arrays["actor.w2"]],
                [arrays["actor.b0"], arrays["actor.b1"], arrays["actor.b2"]],
                squash_output=True,
            )
            critic = Mlp(
                [arrays["critic.w0"], arrays["critic.w1"], arrays["critic.w2"]],
                [arrays["critic.b0"], arrays["critic.b1"], arrays["critic.b2"]],
                squash_output=False,
            )
            return cls(actor, critic, arrays["log_spread"])
        except KeyError as exc:
            raise ConfigError(f"parameter set missing array {exc.args[0]!r}") from None

    def clamp_log_spread(self):
        np.clip(self.log_spread, LOG_SPREAD_MIN, LOG_SPREAD_MAX, out=self.log_spread)


def sample_action(mean, log_spread, rng: np.random.Generator):
    """Draw unclipped Gaussian actions and their log densities.

    The environment clips actions to [-1, 1]; the density is evaluated on the
    unclipped sample so the PPO ratio stays consistent.
    """
    mean = np.asarray(mean, dtype=float)
    spread = np.exp(np.asarray(log_spread, dtype=float))
    noise = rng.standard_normal(mean.shape)
    action = mean + spread * noise
    return action, log_prob(mean, log_spread, action)


def log_prob(mean, log_spread, action):
    """Diagonal-Gaussian log density, summed over action channels."""
    mean = np.asarray(mean, dtype=float)
    log_spread = np.asarray(log_spread, dtype=float)
    action = np.asarray(action, dtype=float)
    z = (action - mean) * np.exp(-log_spread)
    return -0.5 * np.sum(z * z + 2.0 * log_spread + LOG_2PI, axis=-1)


def entropy(log_spread):
    """Entropy of the diagonal Gaussian (independent of the mean)."""
    log_spread = np.asarray(log_spread, dtype=float)
    return float(np.sum(log_spread + 0.5 * (LOG_2PI + 1.0)))


class AdamOptimizer:
    """Adam with bias correction, operating in place on a named array dict."""

    def __init__(self, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr <= 0.0:
            raise ConfigError("learning rate must be > 0")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.skipped = 0
        self._m: dict = {}
        self._v: dict = {}

    def update(self, arrays: dict, grads: dict) -> bool:
        """Apply one step. Returns False (and counts it) on non-finite grads."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                self.skipped += 1
                return False
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for name, g in grads.items():
            if name not in self._m:
                self._m[name] = np.zeros_like(arrays[name])
                self._v[name] = np.zeros_like(arrays[name])
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            arrays[name] -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
        return True


def global_grad_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g)))
    return math.sqrt(total)


def clip_grads_(grads: dict, max_norm: float) -> float:
    """Scale gradients in place to the given global norm; returns the pre-clip norm."""
    norm = global_grad_norm(grads)
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
