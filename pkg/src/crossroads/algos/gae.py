"""Generalised advantage estimation and batch-level normalisation."""
from __future__ import annotations

import numpy as np


def compute_gae(rewards, values, dones, bootstrap_value, gamma: float = 0.99, lam: float = 0.95):
    """Backward GAE recursion over the last axis.

    Works on 1-D sequences or on (n_segments, horizon) arrays with one
    bootstrap value per segment. A ``done`` at step t cuts both the value
    bootstrap and the advantage carry from t + 1.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    if r.shape != v.shape or r.shape != d.shape:
        raise ValueError(f"length mismatch: rewards {r.shape}, values {v.shape}, dones {d.shape}")
    if not 0.0 <= gamma <= 1.0 or not 0.0 <= lam <= 1.0:
        raise ValueError("gamma and lam must lie in [0, 1]")
    adv = np.zeros_like(r)
    next_value = np.asarray(bootstrap_value, dtype=np.float64)
    carry = np.zeros_like(next_value)
    for t in range(r.shape[-1] - 1, -1, -1):
        live = 1.0 - d[..., t]
        delta = r[..., t] + gamma * next_value * live - v[..., t]
        carry = delta + gamma * lam * live * carry
        adv[..., t] = carry
        next_value = v[..., t]
    return adv, adv + v


def normalize_advantages(advantages, mask=None, eps: float = 1e-8):
    """Whiten advantages over the whole batch (population std)."""
    a = np.asarray(advantages, dtype=np.float64)
    m = np.ones_like(a, dtype=bool) if mask is None else np.asarray(mask) > 0
    if not m.any():
        return np.zeros_like(a)
    mu = a[m].mean()
    sd = a[m].std()
    out = (a - mu) / (sd + eps)
    return np.where(m, out, 0.0)


class RunningMeanStd:
    """Streaming mean/variance (parallel-merge form) for reward scaling."""

    def __init__(self, eps: float = 1e-4):
        self.mean = 0.0
        self.var = 1.0
        self.count = eps

    def update(self, x) -> None:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size == 0:
            return
        b_mean, b_var, n = x.mean(), x.var(), x.size
        delta = b_mean - self.mean
        total = self.count + n
        self.mean += delta * n / total
        m2 = self.var * self.count + b_var * n + delta**2 * self.count * n / total
        self.var = m2 / total
        self.count = total

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var) + 1e-8)

    def state_dict(self) -> dict:
        return {"mean": self.mean, "var": self.var, "count": self.count}
