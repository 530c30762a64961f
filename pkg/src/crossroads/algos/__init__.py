"""Learner update rules and advantage processing."""
from .batch import Batch, Hyperparams
from .gae import RunningMeanStd, compute_gae, normalize_advantages
from .offpolicy import (
    DDPG,
    SAC,
    ReplayBatch,
    TwinCritics,
    ddpg_action,
    ddpg_update,
    polyak,
    sac_update,
)
from .optim import Adam
from .ppo import PPO, clipped_surrogate, ppo_diagnostics, ppo_loss, ppo_update

LEARNERS = {"ppo": PPO, "sac": SAC, "ddpg": DDPG}


def make_learner(name: str, net, hyper: Hyperparams = Hyperparams(), seed: int = 0):
    try:
        cls = LEARNERS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(LEARNERS)}") from None
    return cls(net, hyper, seed)


__all__ = [
    "Adam", "Batch", "DDPG", "Hyperparams", "LEARNERS", "PPO", "ReplayBatch", "RunningMeanStd", "SAC",
    "TwinCritics", "clipped_surrogate", "compute_gae", "ddpg_action", "ddpg_update", "make_learner",
    "normalize_advantages", "polyak", "ppo_diagnostics", "ppo_loss", "ppo_update", "sac_update",
]
