"""Multi-agent intersection coordination with asynchronous actor-learner training."""

__version__ = "0.1.0"
