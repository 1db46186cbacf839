"""Training orchestration: the noised deep Q-learning trainer, a vanilla DQN
baseline sharing the identical loop, a myopic greedy baseline, and frozen
policy evaluation.

One run owns everything: a single seeded generator drives weight init,
arrivals, exploration, mini-batch choice, and noise draws in a fixed order,
so a (seed, config) pair pins the whole trajectory.  With sigma = 0 the
noise machinery draws nothing from the generator, which makes the noised
trainer bit-identical to the baseline at the same seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import env as menv
from .env import EnvConfig, EnvState, execution_cost, local_cost, offload_cost
from .fgpm import FgpmConfig, NoiseStore
from .qnet import (DEFAULT_LAYERS, MlpParams, ReplayBuffer, epsilon_greedy,
                   forward, grad_and_step, init_params, sync_target)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``grad_clip`` is a stability valve (global L2 rescale) that stays off by
    default; runs that enable it are flagged in experiment metadata.
    ``persistent_noise_store`` keeps noise tables across episodes instead of
    clearing them at each episode start, for ablations.
    """

    episodes: int = 300
    warmup_episodes: int = 20
    horizon: int = 100
    batch: int = 64
    target_sync: int = 10
    epsilon: float = 0.02
    alpha: float = 0.002
    gamma: float = 0.98
    sigma: float = 0.0
    z: float = 1.0
    seed: int = 0
    replay_capacity: int = 2000
    grad_clip: float | None = None
    persistent_noise_store: bool = False
    exact_ou_variance: bool = False

    def __post_init__(self):
        if self.episodes < 1 or self.warmup_episodes < 0 or self.horizon < 1:
            raise ValueError("episodes >= 1, warmup_episodes >= 0, horizon >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if self.alpha <= 0 or self.batch < 1 or self.target_sync < 1:
            raise ValueError("alpha > 0, batch >= 1, target_sync >= 1")
        if self.sigma < 0 or self.z < 0:
            raise ValueError("sigma and z must be nonnegative")


@dataclass(frozen=True)
class EpisodeLog:
    episode: int
    return_undisc: float
    return_disc: float
    drops: int
    mean_loss: float
    wall_time: float


def train_dpdqo(env_cfg: EnvConfig,
                cfg: TrainConfig) -> tuple[MlpParams, list[EpisodeLog]]:
    """Train with correlated Gaussian noise injected into the TD targets and
    loss; at sigma = 0 this reduces exactly to the plain DQN trainer."""
    return _train(env_cfg, cfg, noised=True)


def train_dqn_baseline(env_cfg: EnvConfig,
                       cfg: TrainConfig) -> tuple[MlpParams, list[EpisodeLog]]:
    """Identical loop with every noise term zero and no noise bookkeeping."""
    return _train(env_cfg, cfg, noised=False)


def _train(env_cfg: EnvConfig, cfg: TrainConfig,
           noised: bool) -> tuple[MlpParams, list[EpisodeLog]]:
    rng = np.random.default_rng(cfg.seed)
    params = init_params(DEFAULT_LAYERS, rng)
    target = sync_target(params)
    buf = ReplayBuffer(cfg.replay_capacity)
    fcfg = FgpmConfig(sigma=cfg.sigma, alpha=cfg.alpha, z=cfg.z,
                      batch=cfg.batch,
                      exact_ou_variance=cfg.exact_ou_variance) if noised else None
    store = NoiseStore() if noised else None

    logs: list[EpisodeLog] = []
    for episode in range(1, cfg.episodes + 1):
        t0 = time.perf_counter()
        state = menv.reset(env_cfg)
        obs = menv.observe(state, env_cfg)
        if noised and not cfg.persistent_noise_store:
            store.reset()
        ret_u = ret_d = 0.0
        disc = 1.0
        losses: list[float] = []
        for _ in range(cfg.horizon):
            if state.free_channels == 0:
                action = 0      # no free uplink: local compute is forced
            else:
                action = epsilon_greedy(forward(params, obs), cfg.epsilon, rng)
            state, reward, _, _ = menv.step(env_cfg, state, action, rng)
            next_obs = menv.observe(state, env_cfg)
            buf.push(obs, action, reward, next_obs)
            obs = next_obs
            ret_u += reward
            ret_d += disc * reward
            disc *= cfg.gamma
            if episode > cfg.warmup_episodes:
                loss, params = _update(params, target, buf, store, fcfg,
                                       cfg, rng)
                losses.append(loss)
        if episode % cfg.target_sync == 0:
            target = sync_target(params)
        mean_loss = float(np.mean(losses)) if losses else 0.0
        logs.append(EpisodeLog(episode=episode, return_undisc=ret_u,
                               return_disc=ret_d, drops=state.dropped,
                               mean_loss=mean_loss,
                               wall_time=time.perf_counter() - t0))
    return params, logs


def _update(params: MlpParams, target: MlpParams, buf: ReplayBuffer,
            store: NoiseStore | None, fcfg: FgpmConfig | None,
            cfg: TrainConfig, rng: np.random.Generator) -> tuple[float, MlpParams]:
    """One mini-batch step: draw transitions, build (noised) bootstrap
    targets from the frozen network, descend the squared TD error."""
    idx = buf.sample_indices(cfg.batch, rng)
    states = buf.states[idx]
    actions = buf.actions[idx]
    rewards = buf.rewards[idx]
    next_states = buf.next_states[idx]

    q_next = forward(target, next_states)
    n = len(idx)
    if store is None:
        targets = rewards + cfg.gamma * q_next.max(axis=1)
        noise_taken = np.zeros(n)
    else:
        targets = np.empty(n)
        noise_taken = np.empty(n)
        for i in range(n):
            act = int(actions[i])
            rew = float(rewards[i])
            store.insert(act, rew, next_states[i])
            best = max(q_next[i, a] + store.sample(a, rew, next_states[i],
                                                   fcfg, rng)
                       for a in range(q_next.shape[1]))
            targets[i] = rewards[i] + cfg.gamma * best
            # noise on the taken action at the current state enters the loss
            noise_taken[i] = store.sample(act, rew, states[i], fcfg, rng)
    return grad_and_step(params, states, actions, targets, noise_taken,
                         cfg.alpha, cfg.grad_clip)


def greedy_policy(state: EnvState, cfg: EnvConfig) -> int:
    """Pick the action with the smaller immediate execution cost for the
    current head task.

    Local compute is forced when no channel is free; offload is forced when
    the head would overflow the local queue and a channel is available.
    Ties and empty queues resolve to local compute.
    """
    if state.free_channels == 0 or not state.trq:
        return 0
    head = state.trq[0]
    c_local = execution_cost(0, local_cost(state.lcq_cycles, head, cfg),
                             (0.0, 0.0), cfg.psi_weight)
    c_off = execution_cost(1, (0.0, 0.0), offload_cost(head, cfg),
                           cfg.psi_weight)
    if state.lcq_bytes + head.size > cfg.lcq_capacity:
        return 1
    return 1 if c_off < c_local else 0


def make_q_policy(params: MlpParams):
    """Frozen greedy-in-Q policy honoring the no-free-channel constraint."""
    def policy(state: EnvState, cfg: EnvConfig) -> int:
        if state.free_channels == 0:
            return 0
        q = forward(params, menv.observe(state, cfg))
        return 1 if q[1] > q[0] else 0
    return policy


def evaluate_policy(policy, env_cfg: EnvConfig, episodes: int, seed: int,
                    gamma: float = 0.98) -> tuple[float, float]:
    """Mean discounted return of a frozen policy over seeded episodes,
    with the standard error of the mean (0 for a single episode)."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = np.random.default_rng(seed)
    returns = []
    for _ in range(episodes):
        state = menv.reset(env_cfg)
        ret = 0.0
        disc = 1.0
        for _ in range(env_cfg.horizon):
            action = policy(state, env_cfg)
            state, reward, _, _ = menv.step(env_cfg, state, action, rng)
            ret += disc * reward
            disc *= gamma
        returns.append(ret)
    mean = float(np.mean(returns))
    if episodes == 1:
        return mean, 0.0
    return mean, float(np.std(returns, ddof=1) / np.sqrt(episodes))
