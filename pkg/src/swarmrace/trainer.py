"""Independent PPO with shared parameters, invalid-experience masking, and
value normalization.

Rollouts are collected from a batch of environments with a frozen policy
snapshot; updates run K epochs of clipped-surrogate PPO on the valid
transitions only. The critic predicts normalized values: its targets are
returns passed through a running mean/std that is refreshed once per update,
and its predictions are denormalized before computing advantages.

Transitions flagged invalid (mask 0) are dropped before minibatching, and the
environment guarantees done=1 on every masked transition, so masked rewards
can never reach a valid gradient through the advantage recursion either.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .env import EnvBatch, EnvConfig, RaceEnv
from .errors import ConfigError, TrainingDiverged
from .nets import AdamOptimizer, PolicyValueNet, clip_grads_, entropy, log_prob, sample_action
from .rewards import RewardParams
from .track import TrackSpec

SIGMA_FLOOR = 1e-6


@dataclass
class ValueNormStats:
    """Running mean/std of returns, merged batch-by-batch."""

    mean: float = 0.0
    var: float = 1.0
    count: float = 0.0

    @property
    def std(self) -> float:
        return max(math.sqrt(self.var), SIGMA_FLOOR)

    def update(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return
        batch_mean = float(values.mean())
        batch_var = float(values.var())
        batch_count = float(values.size)
        delta = batch_mean - self.mean
        total = self.count + batch_count
        m_self = self.var * self.count
        m_batch = batch_var * batch_count
        self.mean += delta * batch_count / total
        self.var = (m_self + m_batch + delta * delta * self.count * batch_count / total) / total
        self.count = total

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def denormalize(self, x):
        return np.asarray(x, dtype=float) * self.std + self.mean


def compute_gae(rewards, values, dones, bootstrap_value, gamma: float, lam: float):
    """Backward GAE recursion over leading time axis; done bits cut both the
    bootstrap and the recursion at episode boundaries."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    bootstrap_value = np.asarray(bootstrap_value, dtype=float)
    if values.shape != rewards.shape or dones.shape != rewards.shape:
        raise ConfigError("rewards, values and dones must have identical shapes")
    if bootstrap_value.shape != rewards.shape[1:]:
        raise ConfigError("bootstrap value shape must match one timestep")
    advantages = np.zeros_like(rewards)
    gae = np.zeros_like(bootstrap_value)
    next_value = bootstrap_value
    for t in reversed(range(rewards.shape[0])):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        gae = delta + gamma * lam * live * gae
        advantages[t] = gae
        next_value = values[t]
    return advantages, advantages + values


@dataclass
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 10
    minibatches: int = 16
    learning_rate: float = 3e-4
    n_envs: int = 8
    rollout_steps: int = 512
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_steps: int = 1_000_000
    hidden: int = 128
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must be in [0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError("gae_lambda must be in [0, 1]")
        if self.clip_eps <= 0.0:
            raise ConfigError("clip_eps must be > 0")
        if self.epochs < 1 or self.minibatches < 1:
            raise ConfigError("epochs and minibatches must be >= 1")
        if self.n_envs < 1 or self.rollout_steps < 1:
            raise ConfigError("n_envs and rollout_steps must be >= 1")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0")


@dataclass
class RolloutBuffer:
    """Time-major transition storage: leading axes (steps, envs, drones)."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    masks: np.ndarray
    dones: np.ndarray
    bootstrap_values: np.ndarray

    @property
    def n_transitions(self) -> int:
        return int(np.prod(self.rewards.shape))


@dataclass
class EpisodeStats:
    """Completed-episode aggregates gathered while collecting."""

    returns: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    waypoints: list = field(default_factory=list)
    collision_steps: int = 0
    diverged: int = 0


class RolloutCollector:
    """Steps a batch of envs with the current policy and fills buffers."""

    def __init__(self, batch: EnvBatch, rng: np.random.Generator):
        self.batch = batch
        self.rng = rng
        self.obs = None
        n = batch.envs[0].cfg.n_drones
        self._ep_return = np.zeros(len(batch))
        self._ep_len = np.zeros(len(batch), dtype=int)
        self._ep_wp = np.zeros(len(batch), dtype=int)
        self._n_drones = n

    def reset(self, seed: int):
        self.obs = self.batch.reset_all(seed)
        self._ep_return[:] = 0.0
        self._ep_len[:] = 0
        self._ep_wp[:] = 0

    def collect(self, net: PolicyValueNet, steps: int) -> tuple[RolloutBuffer, EpisodeStats]:
        n_envs = len(self.batch)
        n_drones = self._n_drones
        obs_len = net.obs_len
        shape = (steps, n_envs, n_drones)
        buf = RolloutBuffer(
            obs=np.zeros(shape + (obs_len,)),
            actions=np.zeros(shape + (net.n_actions,)),
            log_probs=np.zeros(shape),
            rewards=np.zeros(shape),
            values=np.zeros(shape),
            masks=np.zeros(shape),
            dones=np.ones(shape),
            bootstrap_values=np.zeros((n_envs, n_drones)),
        )
        stats = EpisodeStats()

        for t in range(steps):
            flat_obs = self.obs.reshape(n_envs * n_drones, obs_len)
            mean, log_spread = net.actor_forward(flat_obs)
            actions, log_probs = sample_action(mean, log_spread, self.rng)
            values = net.critic_forward(flat_obs)

            buf.obs[t] = self.obs
            buf.actions[t] = actions.reshape(n_envs, n_drones, -1)
            buf.log_probs[t] = log_probs.reshape(n_envs, n_drones)
            buf.values[t] = values.reshape(n_envs, n_drones)

            outcomes = self.batch.step_all(buf.actions[t])
            next_obs = self.obs.copy()
            for k, outcome in enumerate(outcomes):
                if outcome is None:
                    stats.diverged += 1
                    buf.masks[t, k] = 0.0
                    buf.dones[t, k] = 1.0
                    next_obs[k] = self.batch.envs[k]._observations()
                    self._ep_return[k] = 0.0
                    self._ep_len[k] = 0
                    self._ep_wp[k] = 0
                    continue
                buf.rewards[t, k] = outcome.rewards
                buf.masks[t, k] = outcome.masks
                buf.dones[t, k] = outcome.terminated
                self._ep_return[k] += outcome.rewards.mean()
                self._ep_len[k] += 1
                self._ep_wp[k] += sum(e.waypoint_passed for e in outcome.events)
                stats.collision_steps += sum(
                    len(e.collision_partners) for e in outcome.events
                ) // 2
                if outcome.episode_over:
                    stats.returns.append(self._ep_return[k])
                    stats.lengths.append(int(self._ep_len[k]))
                    stats.waypoints.append(self._ep_wp[k] / n_drones)
                    self._ep_return[k] = 0.0
                    self._ep_len[k] = 0
                    self._ep_wp[k] = 0
                    next_obs[k] = self.batch.envs[k].reset()
                else:
                    next_obs[k] = outcome.obs
            self.obs = next_obs

        flat_obs = self.obs.reshape(n_envs * n_drones, obs_len)
        buf.bootstrap_values[:] = net.critic_forward(flat_obs).reshape(n_envs, n_drones)
        return buf, stats


def minibatch_grads(net: PolicyValueNet, obs, actions, old_log_probs, adv,
                    targets, cfg: TrainConfig):
    """Loss and analytic gradients for one minibatch.

    Returns (total_loss, actor_loss, critic_loss, clip_fraction, grads) where
    grads is keyed like PolicyValueNet.to_arrays(). The clipped branch of the
    surrogate contributes no gradient; the unclipped branch flows through the
    Gaussian log density into the actor and the spread.
    """
    m = float(len(obs))
    mean, cache = net.actor.forward_cached(obs)
    new_log_probs = log_prob(mean, net.log_spread, actions)
    ratio = np.exp(new_log_probs - old_log_probs)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv
    actor_loss = -np.minimum(surr1, surr2).mean()
    ent = entropy(net.log_spread)

    v_pred, v_cache = net.critic.forward_cached(obs)
    v_err = v_pred[:, 0] - targets
    critic_loss = cfg.value_coef * np.mean(v_err * v_err)
    total_loss = actor_loss + critic_loss - cfg.entropy_coef * ent

    use_unclipped = surr1 <= surr2
    d_log_prob = np.where(use_unclipped, -ratio * adv, 0.0) / m
    spread = np.exp(net.log_spread)
    z = (actions - mean) / spread
    d_mean = d_log_prob[:, None] * z / spread
    d_log_spread = (d_log_prob[:, None] * (z * z - 1.0)).sum(axis=0)
    d_log_spread -= cfg.entropy_coef  # dH/d(log_spread_k) = 1

    actor_dw, actor_db = net.actor.backward(cache, d_mean)
    d_v = (cfg.value_coef * 2.0 * v_err / m)[:, None]
    critic_dw, critic_db = net.critic.backward(v_cache, d_v)

    grads = {"log_spread": d_log_spread}
    for k in range(3):
        grads[f"actor.w{k}"] = actor_dw[k]
        grads[f"actor.b{k}"] = actor_db[k]
        grads[f"critic.w{k}"] = critic_dw[k]
        grads[f"critic.b{k}"] = critic_db[k]
    clip_fraction = float(np.mean(~use_unclipped))
    return total_loss, float(actor_loss), float(critic_loss), clip_fraction, grads


def ppo_update(net: PolicyValueNet, opt: AdamOptimizer, buf: RolloutBuffer,
               cfg: TrainConfig, stats: ValueNormStats, rng: np.random.Generator,
               dump_path=None) -> dict:
    """One full PPO update over the buffer. Returns scalar metrics."""
    masked_dones = buf.dones[buf.masks == 0.0]
    if masked_dones.size and not np.all(masked_dones == 1.0):
        raise ConfigError("buffer violates the mask contract: mask=0 requires done=1")

    values = stats.denormalize(buf.values)
    bootstrap = stats.denormalize(buf.bootstrap_values)
    # Masked slots carry no reward by construction; zeroing here makes that a
    # hard guarantee, so masked entries cannot reach any gradient.
    advantages, returns = compute_gae(
        buf.rewards * buf.masks, values, buf.dones, bootstrap, cfg.gamma, cfg.gae_lambda
    )

    flat = lambda a: a.reshape(-1, *a.shape[3:])
    obs = flat(buf.obs)
    actions = flat(buf.actions)
    old_log_probs = buf.log_probs.ravel()
    adv = advantages.ravel()
    ret = returns.ravel()
    valid = np.flatnonzero(buf.masks.ravel() == 1.0)

    metrics = {
        "n_valid": int(valid.size),
        "skipped_update": 0,
        "actor_loss": 0.0,
        "critic_loss": 0.0,
        "entropy": entropy(net.log_spread),
        "grad_norm": 0.0,
        "clip_fraction": 0.0,
    }
    if valid.size == 0:
        metrics["skipped_update"] = 1
        return metrics

    stats.update(ret[valid])
    targets = stats.normalize(ret)
    adv_mean = adv[valid].mean()
    adv_std = adv[valid].std()
    adv = (adv - adv_mean) / (adv_std + 1e-8)

    arrays = net.to_arrays()
    n_batches = 0
    for _ in range(cfg.epochs):
        order = valid.copy()
        rng.shuffle(order)
        for mb in np.array_split(order, min(cfg.minibatches, order.size)):
            if mb.size == 0:
                continue
            total_loss, actor_loss, critic_loss, clip_frac, grads = minibatch_grads(
                net, obs[mb], actions[mb], old_log_probs[mb], adv[mb], targets[mb], cfg
            )
            if not np.isfinite(total_loss):
                if dump_path is not None:
                    np.savez(dump_path, obs=obs[mb], actions=actions[mb],
                             old_log_probs=old_log_probs[mb], advantages=adv[mb],
                             targets=targets[mb])
                raise TrainingDiverged(
                    f"non-finite loss (actor {actor_loss}, critic {critic_loss})"
                )
            metrics["grad_norm"] += clip_grads_(grads, cfg.max_grad_norm)
            opt.update(arrays, grads)
            net.clamp_log_spread()

            metrics["actor_loss"] += actor_loss
            metrics["critic_loss"] += critic_loss
            metrics["clip_fraction"] += clip_frac
            n_batches += 1

    for key in ("actor_loss", "critic_loss", "grad_norm", "clip_fraction"):
        metrics[key] /= max(n_batches, 1)
    metrics["entropy"] = entropy(net.log_spread)
    return metrics


METRIC_COLUMNS = [
    "update", "step_per_drone", "step_per_env", "episodes", "mean_return",
    "mean_length", "mean_waypoints", "collision_steps", "actor_loss",
    "critic_loss", "entropy", "grad_norm", "clip_fraction", "value_std",
    "n_valid", "skipped_update", "diverged_envs",
]


@dataclass
class TrainResult:
    net: PolicyValueNet
    stats: ValueNormStats
    metrics: list
    checkpoint_path: Path
    metrics_path: Path


def train(track: TrackSpec, env_cfg: EnvConfig, train_cfg: TrainConfig, seed: int,
          out_dir, reward_params: RewardParams | None = None,
          log=print) -> TrainResult:
    """Run the full collect/update loop and write checkpoints plus metrics."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    final_path = out_dir / "checkpoint_final.bin"

    root = np.random.SeedSequence(seed)
    init_seq, sample_seq = root.spawn(2)
    net = PolicyValueNet.create(
        np.random.Generator(np.random.Philox(init_seq)), env_cfg.obs_length,
        hidden=train_cfg.hidden,
    )
    opt = AdamOptimizer(lr=train_cfg.learning_rate)
    stats = ValueNormStats()
    envs = [RaceEnv(track, env_cfg, reward_params=reward_params, env_id=k)
            for k in range(train_cfg.n_envs)]
    collector = RolloutCollector(
        EnvBatch(envs), np.random.Generator(np.random.Philox(sample_seq))
    )
    collector.reset(seed)

    def write_checkpoint(path, step):
        save_checkpoint(path, net, env_cfg.n_drones, env_cfg.lookahead,
                        value_mean=stats.mean, value_std=stats.std,
                        value_count=stats.count, global_step=step)

    steps_per_rollout = train_cfg.rollout_steps * train_cfg.n_envs * env_cfg.n_drones
    write_checkpoint(final_path, 0)

    rows = []
    update = 0
    step = 0
    started = time.monotonic()
    with metrics_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        while step < train_cfg.total_steps:
            buf, ep = collector.collect(net, train_cfg.rollout_steps)
            step += steps_per_rollout
            update += 1
            m = ppo_update(net, opt, buf, train_cfg, stats,
                           collector.rng, dump_path=out_dir / "diverged_minibatch.npz")
            row = {
                "update": update,
                "step_per_drone": step,
                "step_per_env": step // env_cfg.n_drones,
                "episodes": len(ep.returns),
                "mean_return": float(np.mean(ep.returns)) if ep.returns else math.nan,
                "mean_length": float(np.mean(ep.lengths)) if ep.lengths else math.nan,
                "mean_waypoints": float(np.mean(ep.waypoints)) if ep.waypoints else math.nan,
                "collision_steps": ep.collision_steps,
                "actor_loss": m["actor_loss"],
                "critic_loss": m["critic_loss"],
                "entropy": m["entropy"],
                "grad_norm": m["grad_norm"],
                "clip_fraction": m["clip_fraction"],
                "value_std": stats.std,
                "n_valid": m["n_valid"],
                "skipped_update": m["skipped_update"],
                "diverged_envs": ep.diverged,
            }
            writer.writerow(row)
            fh.flush()
            rows.append(row)
            if train_cfg.checkpoint_every and update % train_cfg.checkpoint_every == 0:
                write_checkpoint(out_dir / f"checkpoint_{update:06d}.bin", step)
            if log is not None and (update % 10 == 0 or step >= train_cfg.total_steps):
                log(f"update {update}: steps {step}, "
                    f"waypoints/ep {row['mean_waypoints']:.2f}, "
                    f"return {row['mean_return']:.2f}, "
                    f"elapsed {time.monotonic() - started:.0f}s")
            write_checkpoint(final_path, step)

    return TrainResult(net=net, stats=stats, metrics=rows,
                       checkpoint_path=final_path, metrics_path=metrics_path)
