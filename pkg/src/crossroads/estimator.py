"""scikit-learn style facade over training and evaluation.

``IntersectionPolicy().fit()`` trains from a RunConfig, ``predict(obs)`` maps
observation rows to deterministic actions and ``score()`` runs the
evaluation protocol and returns mean arrivals per episode.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .checkpoint import load_checkpoint
from .config import RunConfig, parse_config
from .metrics import evaluate
from .policy.network import PolicyNetwork


class IntersectionPolicy(BaseEstimator):
    """Train and query a shared intersection-driving policy.

    Parameters
    ----------
    config : RunConfig, str or None
        Full run configuration, INI text or a path; None means defaults.
    budget, actors, seed : int or None
        Overrides for the corresponding ``runtime`` keys.
    deterministic : bool
        Single-process reproducible training.
    out_dir : str or None
        Where to write stats, checkpoints and the manifest.
    eval_episodes : int or None
        Episodes used by :meth:`score` (default from the config).
    """

    def __init__(self, config=None, budget=None, actors=None, seed=None, deterministic=True, out_dir=None,
                 eval_episodes=None):
        self.config = config
        self.budget = budget
        self.actors = actors
        self.seed = seed
        self.deterministic = deterministic
        self.out_dir = out_dir
        self.eval_episodes = eval_episodes

    def _resolved_config(self) -> RunConfig:
        base = self.config if isinstance(self.config, RunConfig) else parse_config(self.config, environ={})
        runtime = {"deterministic": bool(self.deterministic)}
        for key in ("budget", "actors", "seed"):
            if getattr(self, key) is not None:
                runtime[key] = getattr(self, key)
        return base.replace(runtime=runtime)

    def fit(self, X=None, y=None):
        """Train; ``X`` and ``y`` are ignored (data comes from the simulator)."""
        from .runtime.trainer import run_training

        config = self._resolved_config()
        result = run_training(config, self.out_dir)
        self.config_ = config
        self.net_ = PolicyNetwork(config.network_config)
        self.params_ = result.params
        self.stats_ = result.stats
        self.manifest_ = result.manifest
        self.n_features_in_ = config.sim.obs_dim
        return self

    def load(self, checkpoint):
        """Adopt parameters from a checkpoint file instead of training."""
        config = self._resolved_config()
        params, _ = load_checkpoint(checkpoint)
        net = PolicyNetwork(config.network_config)
        if tuple(params.layout) != tuple(net.layout):
            raise ValueError("checkpoint does not match the configured network")
        self.config_, self.net_, self.params_ = config, net, params
        self.stats_, self.manifest_ = [], {}
        self.n_features_in_ = config.sim.obs_dim
        return self

    def predict(self, X):
        """Deterministic ``tanh(mean)`` actions, one row per observation."""
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        flat = self.params_.as_float64()
        if self.net_.ctce:
            return np.tanh(self.net_.forward_ctce(flat, X).mean)
        return np.tanh(self.net_.forward(flat, X).mean)

    def evaluate(self, n_episodes=None, base_seed=None):
        check_is_fitted(self, "params_")
        return evaluate(self.params_, self.config_, n_episodes or self.eval_episodes, base_seed)

    def score(self, X=None, y=None):
        """Mean number of arrived vehicles per evaluation episode."""
        return float(self.evaluate()["success"])
