"""Horizon-length rollout slices shipped from actors to the learner."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_STEP_FIELDS = ("obs", "actions", "log_probs", "rewards", "values", "dones", "mask")


@dataclass(frozen=True, eq=False)
class TrajectorySegment:
    """One agent slot's transitions over one horizon.

    ``mask`` marks steps where the slot held an active vehicle; steps after an
    arrival and before the next episode are padding with ``done`` set. CTCE
    segments also carry the padded observations of every agent in the same
    joint step (``peer_obs``/``peer_mask``) and the slot's index among them.
    """

    agent_id: int
    env_id: int
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    mask: np.ndarray
    bootstrap_value: float
    last_obs: np.ndarray
    model_version: int
    peer_obs: np.ndarray | None = None
    peer_mask: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return len(self.rewards)

    def validate(self, horizon: int | None = None) -> None:
        h = self.horizon if horizon is None else horizon
        for name in _STEP_FIELDS:
            arr = getattr(self, name)
            if arr is None or len(arr) != h:
                raise ValueError(f"segment field {name!r} must have length {h}")
        if self.obs.ndim != 2 or self.actions.shape != (h, 2):
            raise ValueError("segment obs/actions have the wrong shape")
        if self.model_version < 0:
            raise ValueError("segment model_version must be non-negative")
        if (self.peer_obs is None) != (self.peer_mask is None):
            raise ValueError("peer_obs and peer_mask must be given together")
        if self.peer_obs is not None and self.peer_obs.shape[:1] != (h,):
            raise ValueError("peer_obs must have one row per step")
        if not np.all(np.isfinite(self.rewards)) or not np.all(np.isfinite(self.obs)):
            raise ValueError("segment contains non-finite values")

    def transitions(self):
        """Off-policy view: ``(obs, actions, rewards, next_obs, dones)`` over valid steps."""
        next_obs = np.concatenate([self.obs[1:], self.last_obs[None]], axis=0)
        keep = self.mask > 0
        return self.obs[keep], self.actions[keep], self.rewards[keep], next_obs[keep], self.dones[keep]
