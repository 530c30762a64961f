"""Policy/value networks, parameter vectors and the squashed Gaussian head."""
from . import distributions
from .distributions import gaussian_entropy, log_prob, sample
from .network import CTCE, CTDE, MLP, NetworkConfig, PolicyNetwork, PolicyOutput
from .params import LayerSpec, ModelParameters, layout_size, unpack


def init_params(config: NetworkConfig, seed: int = 0) -> ModelParameters:
    return PolicyNetwork(config).init_params(seed)


def sample_action(output: PolicyOutput, rng):
    """Squashed-Gaussian action and its log-probability for one output row."""
    action, logp, _ = sample(output.mean, output.log_std, rng)
    return action, logp


__all__ = [
    "CTCE", "CTDE", "LayerSpec", "MLP", "ModelParameters", "NetworkConfig", "PolicyNetwork",
    "PolicyOutput", "distributions", "gaussian_entropy", "init_params", "layout_size", "log_prob",
    "sample", "sample_action", "unpack",
]
