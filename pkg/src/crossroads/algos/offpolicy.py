"""Off-policy comparison learners: twin-critic SAC and DDPG.

Both reuse the policy network's mean head as the actor; SAC also uses its
state-independent ``log_std``. Critics are plain MLPs on ``[obs ; action]``.
Only decentralised (CTDE) actors are supported.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..policy import distributions as dist
from ..policy.network import MLP, PolicyNetwork
from ..policy.params import ModelParameters
from .batch import Hyperparams
from .optim import Adam, clip_grad_norm


@dataclass
class ReplayBatch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)


def polyak(target: np.ndarray, online: np.ndarray, tau: float) -> np.ndarray:
    if tau == 1.0:
        return online.copy()
    return (1.0 - tau) * target + tau * online


def _q(critic: MLP, flat, obs, act):
    y, cache = critic.forward(flat, np.concatenate([obs, act], axis=1))
    return y[:, 0], cache


def _action_grad(critic: MLP, flat, cache, dq, act_dim: int):
    """Parameter gradient and d/d(action) for upstream ``dq`` on the Q output."""
    g, dx = critic.backward(flat, cache, dq[:, None])
    return g, dx[:, -act_dim:]


def _check(batch: ReplayBatch, net: PolicyNetwork):
    if len(batch) == 0:
        raise ValueError("off-policy update needs a non-empty replay batch")
    if net.ctce:
        raise ValueError("off-policy learners support ctde actors only")


class TwinCritics:
    """Online and target weights of one or two Q networks."""

    def __init__(self, obs_dim: int, action_dim: int, hidden, n: int, seed: int = 0):
        self.mlp = MLP((obs_dim + action_dim, *hidden, 1), prefix="q")
        rng = np.random.default_rng(seed)
        self.online = [self.mlp.init(rng) for _ in range(n)]
        self.target = [w.copy() for w in self.online]

    def soft_update(self, tau: float) -> None:
        self.target = [polyak(t, o, tau) for t, o in zip(self.target, self.online)]


def sac_critic_loss(critics: TwinCritics, flat, batch: ReplayBatch, target_y):
    q, cache = _q(critics.mlp, flat, batch.obs, batch.actions)
    err = q - target_y
    loss = float(np.mean(err**2))
    g, _ = critics.mlp.backward(flat, cache, (2.0 * err / len(err))[:, None])
    return loss, g


def sac_targets(net: PolicyNetwork, actor_flat, critics: TwinCritics, batch: ReplayBatch, hyper: Hyperparams,
                rng: np.random.Generator):
    out = net.forward(actor_flat, batch.next_obs)
    eps = rng.standard_normal(out.mean.shape)
    a2, logp2, *_ = dist.reparam_sample(out.mean, out.log_std, eps)
    q_next = np.minimum(*[_q(critics.mlp, w, batch.next_obs, a2)[0] for w in critics.target])
    return batch.rewards + hyper.gamma * (1.0 - batch.dones) * (q_next - hyper.sac_alpha * logp2)


def sac_actor_loss(net: PolicyNetwork, actor_flat, critics: TwinCritics, batch: ReplayBatch, hyper: Hyperparams,
                   eps: np.ndarray):
    out, cache = net.forward(actor_flat, batch.obs, return_cache=True)
    a, logp, dlp_dm, dlp_ds, da_dm, da_ds = dist.reparam_sample(out.mean, out.log_std, eps)
    qs = [_q(critics.mlp, w, batch.obs, a) for w in critics.online]
    use_first = qs[0][0] <= qs[1][0]
    q_min = np.where(use_first, qs[0][0], qs[1][0])
    n = len(q_min)
    loss = float(np.mean(hyper.sac_alpha * logp - q_min))
    # dQmin/da from whichever critic attains the minimum
    dqda = np.zeros_like(a)
    for k, (_, cache_q) in enumerate(qs):
        sel = use_first if k == 0 else ~use_first
        _, da = _action_grad(critics.mlp, critics.online[k], cache_q, sel.astype(float), a.shape[1])
        dqda += da
    d_mean = (hyper.sac_alpha * dlp_dm - dqda * da_dm) / n
    d_log_std = (hyper.sac_alpha * dlp_ds - dqda * da_ds).sum(0) / n
    grad = net.backward(actor_flat, cache, d_mean, d_log_std, np.zeros(n))
    return loss, grad


class SAC:
    name = "sac"
    on_policy = False

    def __init__(self, net: PolicyNetwork, hyper: Hyperparams = Hyperparams(), seed: int = 0):
        self.net = net
        self.hyper = hyper
        self.critics = TwinCritics(net.config.obs_dim, net.config.action_dim, hyper.critic_hidden, 2, seed + 1)
        self.actor_opt = Adam(hyper.lr)
        self.critic_opts = [Adam(hyper.lr), Adam(hyper.lr)]
        self.rng = np.random.default_rng(seed)

    def update(self, params: ModelParameters, batch: ReplayBatch):
        return sac_update(self, params, batch)


def sac_update(learner: SAC, params: ModelParameters, batch: ReplayBatch):
    """One or more soft actor-critic steps; returns bumped parameters and stats."""
    net, hyper, critics = learner.net, learner.hyper, learner.critics
    _check(batch, net)
    flat = params.as_float64()
    stats = {}
    for _ in range(hyper.gradient_steps):
        y = sac_targets(net, flat, critics, batch, hyper, learner.rng)
        losses = []
        for k in range(2):
            loss, g = sac_critic_loss(critics, critics.online[k], batch, y)
            g, _ = clip_grad_norm(g, hyper.max_grad_norm * 20 if hyper.max_grad_norm else None)
            critics.online[k] = learner.critic_opts[k].step(critics.online[k], g)
            losses.append(loss)
        eps = learner.rng.standard_normal((len(batch), net.config.action_dim))
        actor_loss, g = sac_actor_loss(net, flat, critics, batch, hyper, eps)
        g, _ = clip_grad_norm(g, hyper.max_grad_norm * 20 if hyper.max_grad_norm else None)
        flat = learner.actor_opt.step(flat, g)
        critics.soft_update(hyper.tau)
        stats = {"critic_loss": float(np.mean(losses)), "actor_loss": actor_loss}
    new = params.evolve(flat.astype(np.float32))
    stats["version"] = new.version
    return new, stats


def ddpg_action(mean, sigma: float, rng: np.random.Generator | None):
    """Deterministic ``tanh(mean)`` plus clipped Gaussian exploration noise."""
    a = np.tanh(mean)
    if sigma > 0 and rng is not None:
        a = a + sigma * rng.standard_normal(np.shape(a))
    return np.clip(a, -1.0, 1.0)


def ddpg_critic_loss(critics: TwinCritics, flat, batch: ReplayBatch, target_y):
    q, cache = _q(critics.mlp, flat, batch.obs, batch.actions)
    err = q - target_y
    g, _ = critics.mlp.backward(flat, cache, (2.0 * err / len(err))[:, None])
    return float(np.mean(err**2)), g


def ddpg_targets(net: PolicyNetwork, target_actor, critics: TwinCritics, batch: ReplayBatch, hyper: Hyperparams):
    a2 = np.tanh(net.forward(target_actor, batch.next_obs).mean)
    q_next = _q(critics.mlp, critics.target[0], batch.next_obs, a2)[0]
    return batch.rewards + hyper.gamma * (1.0 - batch.dones) * q_next


def ddpg_actor_loss(net: PolicyNetwork, actor_flat, critics: TwinCritics, batch: ReplayBatch):
    out, cache = net.forward(actor_flat, batch.obs, return_cache=True)
    a = np.tanh(out.mean)
    q, cache_q = _q(critics.mlp, critics.online[0], batch.obs, a)
    n = len(q)
    _, dqda = _action_grad(critics.mlp, critics.online[0], cache_q, np.ones(n), a.shape[1])
    d_mean = -dqda * (1.0 - a**2) / n
    grad = net.backward(actor_flat, cache, d_mean, np.zeros_like(out.log_std), np.zeros(n))
    return float(-q.mean()), grad


class DDPG:
    name = "ddpg"
    on_policy = False

    def __init__(self, net: PolicyNetwork, hyper: Hyperparams = Hyperparams(), seed: int = 0,
                 init_actor: ModelParameters | None = None):
        self.net = net
        self.hyper = hyper
        self.critics = TwinCritics(net.config.obs_dim, net.config.action_dim, hyper.critic_hidden, 1, seed + 1)
        self.target_actor = None if init_actor is None else init_actor.as_float64()
        self.actor_opt = Adam(hyper.lr)
        self.critic_opt = Adam(hyper.lr)

    def update(self, params: ModelParameters, batch: ReplayBatch):
        return ddpg_update(self, params, batch)


def ddpg_update(learner: DDPG, params: ModelParameters, batch: ReplayBatch):
    net, hyper, critics = learner.net, learner.hyper, learner.critics
    _check(batch, net)
    flat = params.as_float64()
    if learner.target_actor is None:
        learner.target_actor = flat.copy()
    stats = {}
    for _ in range(hyper.gradient_steps):
        y = ddpg_targets(net, learner.target_actor, critics, batch, hyper)
        critic_loss, g = ddpg_critic_loss(critics, critics.online[0], batch, y)
        critics.online[0] = learner.critic_opt.step(critics.online[0], g)
        actor_loss, g = ddpg_actor_loss(net, flat, critics, batch)
        flat = learner.actor_opt.step(flat, g)
        critics.soft_update(hyper.tau)
        learner.target_actor = polyak(learner.target_actor, flat, hyper.tau)
        stats = {"critic_loss": critic_loss, "actor_loss": actor_loss}
    new = params.evolve(flat.astype(np.float32))
    stats["version"] = new.version
    return new, stats
