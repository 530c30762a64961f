"""Clipped-surrogate PPO on the shared-trunk policy network."""
from __future__ import annotations

import numpy as np

from ..policy import distributions as dist
from ..policy.network import PolicyNetwork
from ..policy.params import ModelParameters
from .batch import Batch, Hyperparams
from .optim import Adam, clip_grad_norm


def _forward(net: PolicyNetwork, flat, batch: Batch):
    if net.ctce:
        return net.forward_pooled(flat, batch.peer_obs, batch.peer_mask, batch.own, return_cache=True)
    return net.forward(flat, batch.obs, return_cache=True)


def clipped_surrogate(ratio, advantages, clip_eps: float):
    """Per-sample ``min(r A, clip(r) A)``."""
    return np.minimum(ratio * advantages, np.clip(ratio, 1 - clip_eps, 1 + clip_eps) * advantages)


def ppo_loss(net: PolicyNetwork, flat, batch: Batch, hyper: Hyperparams, with_grad: bool = True):
    """Loss, statistics and (optionally) the parameter gradient for one minibatch."""
    out, cache = _forward(net, flat, batch)
    m = batch.mask
    n = max(m.sum(), 1.0)
    logp = dist.log_prob(out.mean, out.log_std, batch.actions)
    log_ratio = logp - batch.log_probs
    ratio = np.exp(log_ratio)
    adv = batch.advantages
    surr = clipped_surrogate(ratio, adv, hyper.clip_eps)
    policy_loss = -(surr * m).sum() / n
    value_err = out.value - batch.returns
    value_loss = (value_err**2 * m).sum() / n
    entropy = dist.gaussian_entropy(out.log_std)
    loss = policy_loss + hyper.vf_coef * value_loss - hyper.ent_coef * entropy
    clipped = np.abs(ratio - 1.0) > hyper.clip_eps
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "clip_fraction": float((clipped * m).sum() / n),
        "approx_kl": float(((ratio - 1.0 - log_ratio) * m).sum() / n),
        "loss": float(loss),
    }
    if not with_grad:
        return loss, stats, None
    # gradient of the surrogate flows only where the unclipped branch is selected
    active = (ratio * adv <= np.clip(ratio, 1 - hyper.clip_eps, 1 + hyper.clip_eps) * adv) | ~clipped
    d_logp = -(ratio * adv * active * m) / n
    g_mean, g_logstd = dist.log_prob_grads(out.mean, out.log_std, batch.actions)
    d_mean = d_logp[:, None] * g_mean
    d_log_std = (d_logp[:, None] * g_logstd).sum(0) - hyper.ent_coef * np.ones_like(out.log_std)
    d_value = 2.0 * hyper.vf_coef * value_err * m / n
    grad = net.backward(flat, cache, d_mean, d_log_std, d_value)
    return loss, stats, grad


def ppo_diagnostics(net: PolicyNetwork, params, batch: Batch, hyper: Hyperparams) -> dict:
    """Ratio statistics of ``params`` on ``batch`` without updating anything."""
    flat = params.as_float64() if isinstance(params, ModelParameters) else np.asarray(params, float)
    return ppo_loss(net, flat, batch, hyper, with_grad=False)[1]


def ppo_update(net: PolicyNetwork, params: ModelParameters, batch: Batch, hyper: Hyperparams,
               optimizer: Adam | None = None, rng: np.random.Generator | None = None):
    """Run ``hyper.epochs`` passes of shuffled minibatch descent.

    Returns the new parameters (version bumped by exactly one) and averaged
    statistics of the final epoch.
    """
    if len(batch) == 0 or batch.n_valid == 0:
        raise ValueError("ppo_update needs a non-empty batch")
    if batch.advantages is None:
        raise ValueError("batch has no advantages; call with_advantages first")
    optimizer = optimizer or Adam(hyper.lr)
    rng = rng or np.random.default_rng(0)
    flat = params.as_float64()
    rows = np.flatnonzero(batch.mask > 0)
    size = min(hyper.minibatch_size, len(rows))
    history = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(rows)
        epoch_stats = []
        for start in range(0, len(order), size):
            mb = batch.take(order[start:start + size])
            _, stats, grad = ppo_loss(net, flat, mb, hyper)
            grad, norm = clip_grad_norm(grad, hyper.max_grad_norm)
            stats["grad_norm"] = norm
            flat = optimizer.step(flat, grad)
            epoch_stats.append(stats)
        history = epoch_stats
    stats = {k: float(np.mean([s[k] for s in history])) for k in history[0]}
    new = params.evolve(flat.astype(np.float32))
    stats["version"] = new.version
    return new, stats


class PPO:
    """Stateful PPO learner: owns the optimizer and minibatch RNG."""

    name = "ppo"
    on_policy = True

    def __init__(self, net: PolicyNetwork, hyper: Hyperparams = Hyperparams(), seed: int = 0):
        self.net = net
        self.hyper = hyper
        self.optimizer = Adam(hyper.lr)
        self.rng = np.random.default_rng(seed)

    def update(self, params: ModelParameters, batch: Batch):
        return ppo_update(self.net, params, batch, self.hyper, self.optimizer, self.rng)
