"""Learner-side batch assembled from trajectory segments."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..runtime.segment import TrajectorySegment
from .gae import RunningMeanStd, compute_gae, normalize_advantages


@dataclass(frozen=True)
class Hyperparams:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    epochs: int = 4
    minibatch_size: int = 512
    max_grad_norm: float = 0.5
    tau: float = 0.005
    sac_alpha: float = 0.2
    ddpg_noise: float = 0.1
    reward_scaling: bool = False
    critic_hidden: tuple[int, ...] = (256, 256)
    replay_batch_size: int = 256
    gradient_steps: int = 1

    def __post_init__(self):
        object.__setattr__(self, "critic_hidden", tuple(int(h) for h in self.critic_hidden))
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError("gamma and lam must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be > 0")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.epochs < 1 or self.minibatch_size < 1 or self.lr <= 0:
            raise ValueError("epochs, minibatch_size and lr must be positive")


@dataclass(frozen=True, eq=False)
class Batch:
    """Flattened (segment, step) rows; padding rows have ``mask == 0``."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    mask: np.ndarray
    versions: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    peer_obs: np.ndarray | None = None
    peer_mask: np.ndarray | None = None
    own: np.ndarray | None = None
    horizon: int = 1
    bootstrap: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def n_valid(self) -> int:
        return int(np.count_nonzero(self.mask))

    def take(self, idx) -> "Batch":
        pick = lambda a: None if a is None else a[idx]
        return replace(self, obs=self.obs[idx], actions=self.actions[idx], log_probs=self.log_probs[idx],
                       rewards=self.rewards[idx], values=self.values[idx], dones=self.dones[idx],
                       mask=self.mask[idx], advantages=pick(self.advantages), returns=pick(self.returns),
                       peer_obs=pick(self.peer_obs), peer_mask=pick(self.peer_mask), own=pick(self.own))

    @classmethod
    def from_segments(cls, segments: list[TrajectorySegment]) -> "Batch":
        if not segments:
            raise ValueError("cannot build a batch from zero segments")
        H = segments[0].horizon
        for s in segments:
            s.validate(H)
        stack = lambda name: np.concatenate([getattr(s, name) for s in segments])
        peer_obs = peer_mask = own = None
        if segments[0].peer_obs is not None:
            width = max(s.peer_obs.shape[1] for s in segments)
            d = segments[0].obs.shape[1]
            peer_obs = np.zeros((len(segments) * H, width, d))
            peer_mask = np.zeros((len(segments) * H, width))
            own = np.zeros(len(segments) * H, dtype=np.int64)
            for k, s in enumerate(segments):
                rows = slice(k * H, (k + 1) * H)
                n = s.peer_obs.shape[1]
                peer_obs[rows, :n] = s.peer_obs
                peer_mask[rows, :n] = s.peer_mask
                own[rows] = s.agent_id
        return cls(
            obs=stack("obs").astype(np.float64), actions=stack("actions").astype(np.float64),
            log_probs=stack("log_probs").astype(np.float64), rewards=stack("rewards").astype(np.float64),
            values=stack("values").astype(np.float64), dones=stack("dones").astype(np.float64),
            mask=stack("mask").astype(np.float64),
            versions=np.array([s.model_version for s in segments], dtype=np.int64),
            peer_obs=peer_obs, peer_mask=peer_mask, own=own, horizon=H,
            bootstrap=np.array([s.bootstrap_value for s in segments], dtype=np.float64),
        )

    def with_advantages(self, hyper: Hyperparams, reward_stats: RunningMeanStd | None = None) -> "Batch":
        """GAE per segment, then whitening across the whole batch."""
        H = self.horizon
        rewards = self.rewards * self.mask
        shape = (-1, H)
        if reward_stats is not None:
            # scale by the running spread of discounted returns, not raw rewards
            zeros = np.zeros(rewards.size).reshape(shape)
            _, to_go = compute_gae(rewards.reshape(shape), zeros, self.dones.reshape(shape),
                                   np.zeros(len(zeros)), hyper.gamma, 1.0)
            reward_stats.update(to_go.ravel()[self.mask > 0])
            rewards = rewards / reward_stats.std
        adv, ret = compute_gae(rewards.reshape(shape), (self.values * self.mask).reshape(shape),
                               self.dones.reshape(shape), self.bootstrap, hyper.gamma, hyper.lam)
        adv, ret = adv.ravel(), ret.ravel()
        return replace(self, advantages=normalize_advantages(adv, self.mask), returns=ret)
