"""Numpy MLPs with hand-written backward passes.

:class:`PolicyNetwork` shares one tanh trunk between a Gaussian action head
(state-independent ``log_std``) and a value head. In CTCE mode the trunk is
split: the first layer embeds each agent, embeddings are mean-pooled over the
agents of one joint step, and the remaining layers see ``[own ; pooled]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.utils.validation import check_array

from .distributions import LOG_STD_MAX, LOG_STD_MIN, clamp_log_std
from .params import LayerSpec, ModelParameters, layout_size, unpack

CTDE, CTCE = "ctde", "ctce"


@dataclass(frozen=True)
class NetworkConfig:
    obs_dim: int = 83
    hidden_sizes: tuple[int, ...] = (256, 256)
    mode: str = CTDE
    action_dim: int = 2
    activation: str = "tanh"
    pooled_width: int | None = None
    pool_radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("hidden_sizes must be non-empty and positive")
        if self.mode not in (CTDE, CTCE):
            raise ValueError(f"mode must be {CTDE!r} or {CTCE!r}, got {self.mode!r}")
        if self.activation != "tanh":
            raise ValueError("only tanh activation is supported")
        if self.mode == CTCE:
            width = self.pooled_width or self.hidden_sizes[0]
            if width != self.hidden_sizes[0]:
                raise ValueError("pooled_width must equal the first hidden size")


@dataclass
class PolicyOutput:
    """Batched network output; ``log_std`` is shared across the batch."""

    mean: np.ndarray
    log_std: np.ndarray
    value: np.ndarray
    hidden: np.ndarray

    def __getitem__(self, i) -> "PolicyOutput":
        return PolicyOutput(self.mean[i], self.log_std, self.value[i], self.hidden[i])

    def __len__(self) -> int:
        return len(self.mean)


def _dense_backward(x, W, dy):
    return x.T @ dy, dy.sum(0), dy @ W.T


class MLP:
    """Plain tanh MLP with a linear output layer."""

    def __init__(self, sizes, prefix: str = "l"):
        self.sizes = tuple(int(s) for s in sizes)
        self.layout = tuple(LayerSpec(f"{prefix}{k}", a, b) for k, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])))

    @property
    def n_params(self) -> int:
        return layout_size(self.layout)

    def init(self, rng: np.random.Generator, out_scale: float = 1.0) -> np.ndarray:
        parts = []
        for k, spec in enumerate(self.layout):
            bound = np.sqrt(1.0 / spec.in_dim)
            scale = out_scale if k == len(self.layout) - 1 else 1.0
            parts.append(rng.uniform(-bound, bound, spec.in_dim * spec.out_dim) * scale)
            parts.append(rng.uniform(-bound, bound, spec.out_dim) * scale)
        return np.concatenate(parts)

    def forward(self, flat, x):
        p = unpack(np.asarray(flat, dtype=np.float64), self.layout)
        acts = [np.asarray(x, dtype=np.float64)]
        for k, spec in enumerate(self.layout):
            W, b = p[spec.name]
            z = acts[-1] @ W + b
            acts.append(np.tanh(z) if k < len(self.layout) - 1 else z)
        return acts[-1], acts

    def backward(self, flat, cache, dy):
        """Returns ``(dflat, dx)`` for upstream gradient ``dy`` on the output."""
        p = unpack(np.asarray(flat, dtype=np.float64), self.layout)
        grads = []
        d = np.asarray(dy, dtype=np.float64)
        for k in range(len(self.layout) - 1, -1, -1):
            spec = self.layout[k]
            W, _ = p[spec.name]
            if k < len(self.layout) - 1:
                d = d * (1.0 - cache[k + 1] ** 2)
            dW, db, d = _dense_backward(cache[k], W, d)
            grads.append(np.concatenate([dW.ravel(), db]))
        return np.concatenate(grads[::-1]), d


class PolicyNetwork:
    def __init__(self, config: NetworkConfig = NetworkConfig()):
        self.config = config
        h = config.hidden_sizes
        layers = [LayerSpec("embed", config.obs_dim, h[0])]
        width = 2 * h[0] if config.mode == CTCE else h[0]
        for k, size in enumerate(h[1:], start=1):
            layers.append(LayerSpec(f"hidden{k}", width, size))
            width = size
        layers.append(LayerSpec("mean", width, config.action_dim))
        layers.append(LayerSpec("log_std", 0, config.action_dim, "vector"))
        layers.append(LayerSpec("value", width, 1))
        self.layout = tuple(layers)
        self._trunk = [spec.name for spec in layers[1:-3]]

    @property
    def n_params(self) -> int:
        return layout_size(self.layout)

    @property
    def ctce(self) -> bool:
        return self.config.mode == CTCE

    def init_params(self, seed: int = 0) -> ModelParameters:
        rng = np.random.default_rng(seed)
        parts = []
        for spec in self.layout:
            if spec.role == "vector":
                parts.append(np.full(spec.out_dim, -0.5))
                continue
            bound = np.sqrt(1.0 / spec.in_dim)
            scale = 0.01 if spec.name == "mean" else 1.0
            parts.append(rng.uniform(-bound, bound, spec.in_dim * spec.out_dim) * scale)
            parts.append(rng.uniform(-bound, bound, spec.out_dim) * scale)
        return ModelParameters(np.concatenate(parts), self.layout, 0)

    def _check_obs(self, obs):
        obs = check_array(obs, dtype=np.float64, ensure_2d=False, allow_nd=True)
        if obs.shape[-1] != self.config.obs_dim:
            raise ValueError(f"observation width {obs.shape[-1]} != obs_dim {self.config.obs_dim}")
        return obs

    @staticmethod
    def _flat(params):
        if isinstance(params, ModelParameters):
            return params.as_float64()
        return np.asarray(params, dtype=np.float64)

    # -- shared pieces ----------------------------------------------------
    def _head(self, p, z0):
        acts = [z0]
        for name in self._trunk:
            W, b = p[name]
            acts.append(np.tanh(acts[-1] @ W + b))
        top = acts[-1]
        Wm, bm = p["mean"]
        Wv, bv = p["value"]
        return top @ Wm + bm, (top @ Wv + bv)[:, 0], acts

    def _head_backward(self, p, acts, d_mean, d_value, grads):
        top = acts[-1]
        Wm, _ = p["mean"]
        Wv, _ = p["value"]
        dWm, dbm, dtop_m = _dense_backward(top, Wm, d_mean)
        dWv, dbv, dtop_v = _dense_backward(top, Wv, d_value[:, None])
        grads["mean"] = (dWm, dbm)
        grads["value"] = (dWv, dbv)
        d = dtop_m + dtop_v
        for k in range(len(self._trunk) - 1, -1, -1):
            name = self._trunk[k]
            W, _ = p[name]
            d = d * (1.0 - acts[k + 1] ** 2)
            dW, db, d = _dense_backward(acts[k], W, d)
            grads[name] = (dW, db)
        return d

    def _pack(self, grads, d_log_std, log_std_raw):
        parts = []
        for spec in self.layout:
            if spec.role == "vector":
                inside = (log_std_raw >= LOG_STD_MIN) & (log_std_raw <= LOG_STD_MAX)
                parts.append(np.where(inside, d_log_std, 0.0))
            else:
                dW, db = grads[spec.name]
                parts.append(dW.ravel())
                parts.append(db)
        return np.concatenate(parts)

    # -- decentralised ----------------------------------------------------
    def forward(self, params, obs, return_cache: bool = False):
        """Per-agent forward from local observations only (CTDE)."""
        if self.ctce:
            raise ValueError("forward() needs mode ctde; use forward_ctce or forward_pooled")
        flat = self._flat(params)
        obs = self._check_obs(obs)
        single = obs.ndim == 1
        x = np.atleast_2d(obs)
        p = unpack(flat, self.layout)
        W0, b0 = p["embed"]
        h = np.tanh(x @ W0 + b0)
        mean, value, acts = self._head(p, h)
        out = PolicyOutput(mean, clamp_log_std(p["log_std"]).copy(), value, h)
        if single:
            out = out[0]
        if return_cache:
            return out, {"x": x, "acts": acts, "kind": CTDE}
        return out

    # -- centralised ------------------------------------------------------
    def forward_ctce(self, params, obs_all, neighbor_mask=None):
        """Joint forward for one step: embeddings mean-pooled over all agents.

        ``neighbor_mask[i, j]`` restricts agent ``i``'s pool to agents ``j``
        (the radius-limited variant); by default every agent pools over all.
        """
        if not self.ctce:
            raise ValueError("forward_ctce() needs mode ctce")
        obs_all = self._check_obs(np.atleast_2d(obs_all))
        if len(obs_all) == 0:
            raise ValueError("forward_ctce() needs at least one agent")
        flat = self._flat(params)
        p = unpack(flat, self.layout)
        W0, b0 = p["embed"]
        h = np.tanh(obs_all @ W0 + b0)
        if neighbor_mask is None:
            pooled = np.broadcast_to(h.mean(0), h.shape)
        else:
            m = np.asarray(neighbor_mask, dtype=np.float64)
            pooled = (m @ h) / m.sum(1, keepdims=True)
        mean, value, _ = self._head(p, np.concatenate([h, pooled], axis=1))
        return PolicyOutput(mean, clamp_log_std(p["log_std"]).copy(), value, h)

    def forward_pooled(self, params, peer_obs, peer_mask, own, return_cache: bool = False):
        """Batched CTCE forward for training rows.

        Row ``k`` belongs to agent ``own[k]`` of a joint step whose agents'
        observations are ``peer_obs[k]`` (padded, valid where ``peer_mask``).
        """
        if not self.ctce:
            raise ValueError("forward_pooled() needs mode ctce")
        flat = self._flat(params)
        peer_obs = self._check_obs(peer_obs)
        mask = np.asarray(peer_mask, dtype=np.float64)
        own = np.asarray(own, dtype=np.int64)
        p = unpack(flat, self.layout)
        W0, b0 = p["embed"]
        h_all = np.tanh(peer_obs @ W0 + b0) * mask[..., None]
        count = mask.sum(1, keepdims=True)
        pooled = h_all.sum(1) / count
        rows = np.arange(len(own))
        h = h_all[rows, own]
        mean, value, acts = self._head(p, np.concatenate([h, pooled], axis=1))
        out = PolicyOutput(mean, clamp_log_std(p["log_std"]).copy(), value, h)
        if return_cache:
            return out, {"x": peer_obs, "h_all": h_all, "mask": mask, "count": count, "own": own,
                         "acts": acts, "kind": CTCE}
        return out

    def backward(self, params, cache, d_mean, d_log_std, d_value) -> np.ndarray:
        """Gradient of a scalar loss w.r.t. all parameters, in layout order.

        ``d_mean`` (B, action_dim), ``d_log_std`` (action_dim,) and ``d_value``
        (B,) are the loss partials w.r.t. the network outputs.
        """
        flat = self._flat(params)
        p = unpack(flat, self.layout)
        d_mean = np.atleast_2d(np.asarray(d_mean, dtype=np.float64))
        d_value = np.atleast_1d(np.asarray(d_value, dtype=np.float64))
        acts = cache["acts"]
        if d_mean.shape != (len(acts[0]), self.config.action_dim) or d_value.shape != (len(acts[0]),):
            raise ValueError("upstream gradient shapes do not match the cached batch")
        grads = {}
        dz0 = self._head_backward(p, acts, d_mean, d_value, grads)
        W0, _ = p["embed"]
        if cache["kind"] == CTDE:
            h = acts[0]
            dpre = dz0 * (1.0 - h**2)
            dW0, db0, _ = _dense_backward(cache["x"], W0, dpre)
        else:
            H = self.config.hidden_sizes[0]
            h_all, mask, own = cache["h_all"], cache["mask"], cache["own"]
            dh_all = (dz0[:, H:] / cache["count"])[:, None, :] * mask[..., None]
            dh_all[np.arange(len(own)), own] += dz0[:, :H]
            dpre = dh_all * (1.0 - h_all**2) * mask[..., None]
            x = cache["x"]
            dW0 = np.einsum("bni,bnj->ij", x, dpre)
            db0 = dpre.sum((0, 1))
        grads["embed"] = (dW0, db0)
        return self._pack(grads, np.asarray(d_log_std, dtype=np.float64), p["log_std"])
