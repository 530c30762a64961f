"""Actor-side rollout collection at horizon granularity."""
from __future__ import annotations

from collections import deque

import numpy as np

from ..algos.offpolicy import ddpg_action
from ..env import IntersectionEnv
from ..policy import distributions as dist
from ..policy.network import PolicyNetwork
from ..policy.params import ModelParameters
from .segment import TrajectorySegment


def neighbor_mask(positions: np.ndarray, radius: float | None) -> np.ndarray | None:
    if radius is None:
        return None
    gap = positions[:, None, :] - positions[None, :, :]
    return (np.hypot(gap[..., 0], gap[..., 1]) <= radius).astype(np.float64)


class Collector:
    """Steps one environment with a parameter snapshot and cuts segments.

    The environment persists across calls, so an episode may span several
    segments; it is reset automatically when it ends.
    """

    def __init__(self, env: IntersectionEnv, net: PolicyNetwork, algo: str = "ppo", horizon: int = 32,
                 env_id: int = 0, seed: int = 0, exploration_noise: float = 0.1):
        self.env = env
        self.net = net
        self.algo = algo
        self.horizon = horizon
        self.env_id = env_id
        self.rng = np.random.default_rng(seed)
        self.noise = exploration_noise
        self.obs: dict[int, np.ndarray] | None = None
        self.env_steps = 0
        self.episodes = 0
        self.recent_success: deque[int] = deque(maxlen=20)
        self.recent_return: deque[float] = deque(maxlen=20)
        self._episode_return = 0.0
        self.finished: list[tuple[float, float]] = []

    def pop_finished(self) -> list[tuple[float, float]]:
        """(arrived count, mean per-agent return) of episodes ended since the last call."""
        out, self.finished = self.finished, []
        return out

    def _policy(self, flat, ids):
        X = np.stack([self.obs[i] for i in ids])
        if self.net.ctce:
            pos = np.array([self.env.world.vehicles[i].position for i in ids])
            mask = neighbor_mask(pos, self.net.config.pool_radius)
            return X, self.net.forward_ctce(flat, X, mask), mask
        return X, self.net.forward(flat, X), None

    def _act(self, out):
        if self.algo == "ddpg":
            return ddpg_action(out.mean, self.noise, self.rng), np.zeros(len(out))
        a, logp, _ = dist.sample(out.mean, out.log_std, self.rng)
        return a, logp

    def collect(self, params: ModelParameters) -> list[TrajectorySegment]:
        env, H, n = self.env, self.horizon, self.env.n_agents
        if self.obs is None:
            self.obs = env.reset()
            self._episode_return = 0.0
        flat = params.as_float64()
        d = env.obs_dim
        obs = np.zeros((H, n, d))
        actions = np.zeros((H, n, 2))
        logps = np.zeros((H, n))
        rewards = np.zeros((H, n))
        values = np.zeros((H, n))
        dones = np.ones((H, n))
        mask = np.zeros((H, n))
        ctce = self.net.ctce
        peer_obs = np.zeros((H, n, d)) if ctce else None
        peer_mask = np.zeros((H, n, n)) if ctce else None

        for t in range(H):
            ids = sorted(self.obs)
            X, out, nmask = self._policy(flat, ids)
            a, logp = self._act(out)
            obs[t, ids] = X
            actions[t, ids] = a
            logps[t, ids] = logp
            values[t, ids] = out.value
            mask[t, ids] = 1.0
            if ctce:
                peer_obs[t, ids] = X
                for k, i in enumerate(ids):
                    peer_mask[t, i, ids] = 1.0 if nmask is None else nmask[k]
            next_obs, r, done, info = env.step({i: a[k] for k, i in enumerate(ids)})
            self.env_steps += 1
            for i in ids:
                rewards[t, i] = r[i].total
                dones[t, i] = float(done[i])
                self._episode_return += r[i].total
            if info["episode_over"]:
                self.episodes += 1
                self.recent_success.append(info["n_arrived"])
                self.recent_return.append(self._episode_return / n)
                self.finished.append((float(info["n_arrived"]), self._episode_return / n))
                self.obs = env.reset()
                self._episode_return = 0.0
            else:
                self.obs = next_obs

        # bootstrap agents still mid-episode at the horizon boundary
        boot = np.zeros(n)
        last_obs = np.zeros((n, d))
        live = [i for i in range(n) if mask[-1, i] > 0 and dones[-1, i] == 0 and i in self.obs]
        if live:
            ids = sorted(self.obs)
            X, out, _ = self._policy(flat, ids)
            for k, i in enumerate(ids):
                last_obs[i] = X[k]
                if i in live:
                    boot[i] = out.value[k]

        segments = []
        for i in range(n):
            if not mask[:, i].any():
                continue
            segments.append(TrajectorySegment(
                agent_id=i, env_id=self.env_id, obs=obs[:, i].copy(), actions=actions[:, i].copy(),
                log_probs=logps[:, i].copy(), rewards=rewards[:, i].copy(), values=values[:, i].copy(),
                dones=dones[:, i].copy(), mask=mask[:, i].copy(), bootstrap_value=float(boot[i]),
                last_obs=last_obs[i].copy(), model_version=params.version,
                peer_obs=peer_obs.copy() if ctce else None,
                peer_mask=peer_mask[:, i].copy() if ctce else None,
            ))
        return segments
