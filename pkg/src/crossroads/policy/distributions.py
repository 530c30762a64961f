"""Tanh-squashed diagonal Gaussian used by every learner."""
from __future__ import annotations

import numpy as np

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
ACTION_EPS = 1e-6
_HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


def clamp_log_std(log_std):
    return np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)


def _log1m_tanh2(u):
    # log(1 - tanh(u)^2), stable for large |u|
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def pre_squash(action):
    a = np.clip(np.asarray(action, dtype=float), -1 + ACTION_EPS, 1 - ACTION_EPS)
    return np.arctanh(a)


def log_prob(mean, log_std, action):
    """Exact log-density of ``action`` under the squashed Gaussian.

    Shapes broadcast; the last axis holds the action dimensions and is summed.
    """
    log_std = clamp_log_std(np.asarray(log_std, dtype=float))
    u = pre_squash(action)
    z = (u - mean) * np.exp(-log_std)
    return (-0.5 * z**2 - log_std - _HALF_LOG_2PI - _log1m_tanh2(u)).sum(-1)


def log_prob_grads(mean, log_std, action):
    """Partials of :func:`log_prob` with respect to ``mean`` and ``log_std``."""
    log_std = clamp_log_std(np.asarray(log_std, dtype=float))
    u = pre_squash(action)
    z = (u - mean) * np.exp(-log_std)
    return z * np.exp(-log_std), z**2 - 1.0


def sample(mean, log_std, rng: np.random.Generator):
    """Draw squashed actions; returns ``(action, log_prob, noise)``."""
    mean = np.asarray(mean, dtype=float)
    log_std = clamp_log_std(np.asarray(log_std, dtype=float))
    eps = rng.standard_normal(mean.shape)
    # float tanh saturates to exactly +-1 for large pre-squash values
    action = np.clip(np.tanh(mean + np.exp(log_std) * eps), -1 + ACTION_EPS, 1 - ACTION_EPS)
    return action, log_prob(mean, log_std, action), eps


def gaussian_entropy(log_std):
    """Entropy of the unsquashed Gaussian; the squashed one has no closed form."""
    log_std = clamp_log_std(np.asarray(log_std, dtype=float))
    return float((log_std + 0.5 + _HALF_LOG_2PI).sum())


def reparam_sample(mean, log_std, eps):
    """Reparameterised action and log-prob with partials for off-policy actors.

    Returns ``(action, logp, dlogp_dmean, dlogp_dlogstd, da_dmean, da_dlogstd)``;
    the partials hold ``eps`` fixed.
    """
    log_std = clamp_log_std(np.asarray(log_std, dtype=float))
    std = np.exp(log_std)
    u = mean + std * eps
    a = np.tanh(u)
    logp = (-0.5 * eps**2 - log_std - _HALF_LOG_2PI - _log1m_tanh2(u)).sum(-1)
    da_du = 1.0 - a**2
    return a, logp, 2.0 * a, -1.0 + 2.0 * a * std * eps, da_du, da_du * std * eps
