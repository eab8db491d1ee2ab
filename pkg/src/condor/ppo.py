"""Proximal Policy Optimization: parallel rollout collection, GAE, clipped
surrogate with value and entropy terms, Adam, and the training loop.

Envs follow a small vector protocol: reset_vec() -> (core, z) and
step_vec(a) -> ((core, z), reward, done, info), plus obs_dim/cond_dim and an
owned `rng` used for action sampling, so a rollout is a pure function of the
per-env seeds no matter how collection is fanned out across workers.
"""

import csv
import math
import multiprocessing
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import net
from .net import PolicySpec


class TrainingDiverged(RuntimeError):
    """Loss or simulation state became non-finite."""


@dataclass(frozen=True)
class PpoConfig:
    n_envs: int = 100
    horizon: int = 250
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    epochs: int = 10
    minibatch_size: int = 2048
    value_coef: float = 0.5
    entropy_coef: float = 0.005
    max_grad_norm: float = 1.0
    total_steps: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in (0, 1]")
        if not self.clip_eps > 0:
            raise ValueError("clip_eps must be > 0")


@dataclass(eq=False)
class TrajectoryBatch:
    """Flattened (env-major) rollout storage; advantage/return filled by compute_gae."""

    obs: np.ndarray
    z: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    bootstrap_values: np.ndarray  # (n_envs,)
    n_envs: int
    horizon: int
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    ep_returns: list = field(default_factory=list)
    ep_lens: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.n_envs * self.horizon


def _collect_slice(spec: PolicySpec, weights: dict, envs: list, cur_obs: list,
                   horizon: int, deterministic: bool):
    n = len(envs)
    d_obs, d_z = spec.obs_dim, spec.cond_dim
    obs = np.empty((n * horizon, d_obs))
    zs = np.empty((n * horizon, d_z))
    actions = np.empty((n * horizon, spec.act_dim))
    log_probs = np.empty(n * horizon)
    rewards = np.empty(n * horizon)
    values = np.empty(n * horizon)
    dones = np.zeros(n * horizon)
    bootstrap = np.empty(n)
    ep_returns, ep_lens = [], []
    log_std = net.clamped_log_std(weights)

    for e, env in enumerate(envs):
        cur = cur_obs[e]
        if cur is None:
            cur = env.reset_vec()
        ep_ret = getattr(env, "_ppo_ep_ret", 0.0)
        ep_len = getattr(env, "_ppo_ep_len", 0)
        for t in range(horizon):
            i = e * horizon + t
            core, z = cur
            dist = net.policy_forward(spec, weights, core, z)
            action = dist.mean if deterministic else dist.sample(env.rng)
            obs[i] = core
            zs[i] = z
            actions[i] = action
            log_probs[i] = dist.log_prob(action)
            values[i] = net.value_forward(spec, weights, core, z)
            cur, reward, done, _info = env.step_vec(action)
            rewards[i] = reward
            dones[i] = 1.0 if done else 0.0
            ep_ret += reward
            ep_len += 1
            if done:
                ep_returns.append(ep_ret)
                ep_lens.append(ep_len)
                ep_ret, ep_len = 0.0, 0
                cur = env.reset_vec()
        env._ppo_ep_ret = ep_ret
        env._ppo_ep_len = ep_len
        cur_obs[e] = cur
        bootstrap[e] = net.value_forward(spec, weights, cur[0], cur[1])
    batch = TrajectoryBatch(obs=obs, z=zs, actions=actions, log_probs=log_probs, rewards=rewards,
                            values=values, dones=dones, bootstrap_values=bootstrap,
                            n_envs=n, horizon=horizon, ep_returns=ep_returns, ep_lens=ep_lens)
    # log_std participates through log_prob above; keep a reference for clarity
    _ = log_std
    return batch, envs, cur_obs


def _worker(args):
    return _collect_slice(*args)


def collect_rollouts(spec: PolicySpec, weights: dict, envs: list, cur_obs: list, horizon: int,
                     deterministic: bool = False, workers: int | None = None):
    """Roll every env `horizon` steps under the frozen policy snapshot.

    With workers > 1 the env list is partitioned across processes; per-env
    results are identical to the single-context run because every env owns its
    RNG and all per-env computation is batch-size independent.
    """
    if workers is None:
        workers = int(os.environ.get("CONDOR_NUM_WORKERS", "1"))
    n = len(envs)
    if workers <= 1 or n == 1:
        return _collect_slice(spec, weights, envs, cur_obs, horizon, deterministic)

    workers = min(workers, n)
    bounds = np.linspace(0, n, workers + 1).astype(int)
    jobs = [(spec, weights, envs[a:b], cur_obs[a:b], horizon, deterministic)
            for a, b in zip(bounds[:-1], bounds[1:])]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(workers) as pool:
        parts = pool.map(_worker, jobs)

    batch = TrajectoryBatch(
        obs=np.concatenate([p[0].obs for p in parts]),
        z=np.concatenate([p[0].z for p in parts]),
        actions=np.concatenate([p[0].actions for p in parts]),
        log_probs=np.concatenate([p[0].log_probs for p in parts]),
        rewards=np.concatenate([p[0].rewards for p in parts]),
        values=np.concatenate([p[0].values for p in parts]),
        dones=np.concatenate([p[0].dones for p in parts]),
        bootstrap_values=np.concatenate([p[0].bootstrap_values for p in parts]),
        n_envs=n, horizon=horizon,
        ep_returns=[r for p in parts for r in p[0].ep_returns],
        ep_lens=[l for p in parts for l in p[0].ep_lens])
    new_envs = [e for p in parts for e in p[1]]
    new_cur = [c for p in parts for c in p[2]]
    return batch, new_envs, new_cur


def compute_gae(batch: TrajectoryBatch, gamma: float, lam: float) -> TrajectoryBatch:
    """Standard GAE(lambda); returns_t = advantage_t + value_t exactly."""
    n, h = batch.n_envs, batch.horizon
    rew = batch.rewards.reshape(n, h)
    val = batch.values.reshape(n, h)
    done = batch.dones.reshape(n, h)
    adv = np.zeros((n, h))
    last = np.zeros(n)
    next_val = batch.bootstrap_values.copy()
    for t in range(h - 1, -1, -1):
        not_done = 1.0 - done[:, t]
        delta = rew[:, t] + gamma * next_val * not_done - val[:, t]
        last = delta + gamma * lam * not_done * last
        adv[:, t] = last
        next_val = val[:, t]
    batch.advantages = adv.reshape(-1)
    batch.returns = batch.advantages + batch.values
    return batch


@dataclass(eq=False)
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(weights: dict, grads: dict, state: AdamState, lr: float,
              betas=(0.9, 0.999), eps: float = 1e-8) -> dict:
    state.step += 1
    b1, b2 = betas
    out = dict(weights)
    for k, g in grads.items():
        m = state.m.get(k)
        if m is None:
            m = np.zeros_like(weights[k])
            state.v[k] = np.zeros_like(weights[k])
        v = state.v[k]
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[k], state.v[k] = m, v
        m_hat = m / (1 - b1**state.step)
        v_hat = v / (1 - b2**state.step)
        out[k] = weights[k] - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


def clip_grad_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        grads = {k: g * scale for k, g in grads.items()}
    return grads, total


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    kl: float
    clip_frac: float


def clipped_objective(ratio: np.ndarray, adv: np.ndarray, clip_eps: float) -> np.ndarray:
    """Per-sample surrogate min(ratio*A, clip(ratio, 1-eps, 1+eps)*A)."""
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)


def ppo_update(spec: PolicySpec, weights: dict, batch: TrajectoryBatch, cfg: PpoConfig,
               opt: AdamState, rng: np.random.Generator) -> tuple[dict, UpdateStats]:
    """Clipped-surrogate update over shuffled minibatches; returns new weights."""
    n = len(batch)
    adv = batch.advantages
    adv_n = (adv - adv.mean()) / (adv.std() + 1e-8)

    agg = np.zeros(5)
    agg_w = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for s in range(0, n, cfg.minibatch_size):
            idx = perm[s:s + cfg.minibatch_size]
            mb = len(idx)
            o, z = batch.obs[idx], batch.z[idx]
            a = batch.actions[idx]
            lp_old = batch.log_probs[idx]
            adv_mb = adv_n[idx]
            ret_mb = batch.returns[idx]

            mean, cache = net.policy_forward_cached(spec, weights, o, z)
            log_std = net.clamped_log_std(weights)
            sigma2 = np.exp(2.0 * log_std)
            zscore = (a - mean) / np.exp(log_std)
            lp_new = (-0.5 * zscore**2 - log_std - 0.5 * np.log(2 * np.pi)).sum(axis=1)

            ratio = np.exp(lp_new - lp_old)
            t1 = ratio * adv_mb
            t2 = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv_mb
            policy_loss = -clipped_objective(ratio, adv_mb, cfg.clip_eps).mean()
            entropy = float(np.sum(log_std + 0.5 * np.log(2 * np.pi * np.e)))

            v, vcache = net.value_forward_cached(spec, weights, o, z)
            value_loss = float(np.mean((v - ret_mb) ** 2))

            loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
            if not np.isfinite(loss):
                raise TrainingDiverged("non-finite loss in ppo_update")

            # d(loss)/d(log pi_new): active only where the min picks the unclipped term
            active = (t1 <= t2).astype(np.float64)
            d_lp = -(adv_mb * ratio * active) / mb
            d_mean = d_lp[:, None] * (a - mean) / sigma2
            d_log_std = (d_lp[:, None] * (zscore**2 - 1.0)).sum(axis=0) - cfg.entropy_coef
            d_v = cfg.value_coef * 2.0 * (v - ret_mb) / mb

            grads = net.policy_backward(spec, weights, cache, d_mean, d_log_std)
            grads.update(net.value_backward(spec, weights, vcache, d_v))
            grads, _ = clip_grad_norm(grads, cfg.max_grad_norm)
            weights = adam_step(weights, grads, opt, cfg.lr)

            kl = float(np.mean(lp_old - lp_new))
            clip_frac = float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps))
            agg += mb * np.array([policy_loss, value_loss, entropy, kl, clip_frac])
            agg_w += mb
    stats = agg / max(agg_w, 1)
    return weights, UpdateStats(policy_loss=float(stats[0]), value_loss=float(stats[1]),
                                entropy=float(stats[2]), kl=float(stats[3]),
                                clip_frac=float(stats[4]))


def pool_gate_buffers(envs: list, pool: list | None) -> list | None:
    """Pool every env's newly observed passing states and broadcast the result.

    Runs between iterations (single context), so the no-shared-state contract
    of rollout collection is untouched. Env order makes it deterministic.
    """
    if not envs or not hasattr(envs[0], "take_new_passes"):
        return pool
    if pool is None:
        pool = [[] for _ in envs[0].get_gate_buffers()]
    cap = envs[0].cfg.gate_buffer_size
    for env in envs:
        for gate, state in env.take_new_passes():
            pool[gate].append(state)
    pool = [p[-cap:] for p in pool]
    for env in envs:
        env.set_gate_buffers(pool)
    return pool


METRICS_COLUMNS = ["iteration", "steps", "mean_return", "mean_ep_len", "policy_loss",
                   "value_loss", "kl", "clip_frac", "wall_time"]


@dataclass
class TrainResult:
    checkpoint_path: str
    metrics_path: str
    iterations: int
    steps: int
    last_stats: UpdateStats | None


def train(make_env, spec: PolicySpec, cfg: PpoConfig, out_dir: str, meta: dict | None = None,
          checkpoint_every: int = 50, log_wall_time: bool = True,
          workers: int | None = None) -> TrainResult:
    """Collect / GAE / update until total_steps; writes metrics CSV and checkpoints.

    make_env(seed) builds one env. With log_wall_time=False the wall_time
    column is written as 0.0 so seed-fixed runs produce bitwise-identical logs.
    """
    os.makedirs(out_dir, exist_ok=True)
    ss = np.random.SeedSequence(cfg.seed)
    init_seed, update_seed, *env_seeds = ss.spawn(2 + cfg.n_envs)
    weights = net.init_weights(spec, np.random.default_rng(init_seed))
    update_rng = np.random.default_rng(update_seed)
    envs = [make_env(int(s.generate_state(1)[0])) for s in env_seeds]
    cur_obs = [None] * cfg.n_envs
    opt = AdamState()

    metrics_path = os.path.join(out_dir, "metrics.csv")
    ckpt_path = os.path.join(out_dir, "checkpoint.ckpt")
    meta = dict(meta or {})
    iters = max(1, math.ceil(cfg.total_steps / (cfg.n_envs * cfg.horizon)))
    steps = 0
    stats = None
    pass_pool = None
    t0 = time.monotonic()

    with open(metrics_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_COLUMNS)
        for it in range(1, iters + 1):
            try:
                batch, envs, cur_obs = collect_rollouts(spec, weights, envs, cur_obs,
                                                        cfg.horizon, workers=workers)
                pass_pool = pool_gate_buffers(envs, pass_pool)
                batch = compute_gae(batch, cfg.gamma, cfg.gae_lambda)
                weights, stats = ppo_update(spec, weights, batch, cfg, opt, update_rng)
            except TrainingDiverged:
                net.save_checkpoint_file(ckpt_path, spec, weights,
                                         {**meta, "iteration": it, "diverged": True})
                raise
            steps += len(batch)
            mean_ret = float(np.mean(batch.ep_returns)) if batch.ep_returns else float("nan")
            mean_len = float(np.mean(batch.ep_lens)) if batch.ep_lens else float("nan")
            wall = time.monotonic() - t0 if log_wall_time else 0.0
            writer.writerow([it, steps, repr(mean_ret), repr(mean_len),
                             repr(stats.policy_loss), repr(stats.value_loss), repr(stats.kl),
                             repr(stats.clip_frac), repr(wall)])
            f.flush()
            if it % checkpoint_every == 0:
                net.save_checkpoint_file(ckpt_path, spec, weights, {**meta, "iteration": it})
    net.save_checkpoint_file(ckpt_path, spec, weights, {**meta, "iteration": iters})
    return TrainResult(checkpoint_path=ckpt_path, metrics_path=metrics_path,
                       iterations=iters, steps=steps, last_stats=stats)


def train_multi_seed(make_env_for_seed, spec: PolicySpec, cfg: PpoConfig, seeds: list,
                     out_dir: str, score_checkpoint, meta: dict | None = None,
                     **train_kw) -> tuple[str, list]:
    """Train one policy per seed, score each checkpoint (lower is better), keep the best."""
    results = []
    for seed in seeds:
        run_cfg = PpoConfig(**{**cfg.__dict__, "seed": int(seed)})
        run_dir = os.path.join(out_dir, f"seed{seed}")
        res = train(lambda s: make_env_for_seed(s), spec, run_cfg, run_dir, meta=meta, **train_kw)
        results.append((seed, res.checkpoint_path, score_checkpoint(res.checkpoint_path)))
    best = min(results, key=lambda r: r[2])
    return best[1], results
