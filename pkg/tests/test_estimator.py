import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from crossroads.checkpoint import save_checkpoint
from crossroads.config import RunConfig
from crossroads.estimator import IntersectionPolicy

TINY = RunConfig().replace(
    sim={"n_vehicles": 2, "max_steps": 20, "arm_length": 30.0},
    network={"hidden_sizes": (8,)},
    algo={"epochs": 1},
    runtime={"horizon": 8, "batch_segments": 2, "capacity": 8},
    eval={"episodes": 2},
)


def test_params_roundtrip_and_clone():
    est = IntersectionPolicy(config=TINY, budget=3, seed=5)
    assert est.get_params()["budget"] == 3
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est
    est.set_params(actors=2)
    assert est.actors == 2


def test_unfitted_predict_raises():
    with pytest.raises(NotFittedError):
        IntersectionPolicy(config=TINY).predict(np.zeros((1, TINY.sim.obs_dim)))


def test_fit_predict_score(tmp_path):
    est = IntersectionPolicy(config=TINY, budget=2, seed=1, out_dir=str(tmp_path)).fit()
    assert est.params_.version == 2 and est.n_features_in_ == TINY.sim.obs_dim
    X = np.random.default_rng(0).uniform(-1, 1, (5, TINY.sim.obs_dim))
    a = est.predict(X)
    assert a.shape == (5, 2) and np.all(np.abs(a) < 1)
    assert np.array_equal(a, est.predict(X))
    s = est.score()
    assert 0.0 <= s <= TINY.sim.n_vehicles
    with pytest.raises(ValueError, match="features"):
        est.predict(np.zeros((1, 3)))


def test_fit_is_reproducible():
    a = IntersectionPolicy(config=TINY, budget=2, seed=4).fit()
    b = IntersectionPolicy(config=TINY, budget=2, seed=4).fit()
    assert a.params_.equals(b.params_)


def test_load_checkpoint(tmp_path):
    trained = IntersectionPolicy(config=TINY, budget=1, seed=2).fit()
    path = save_checkpoint(tmp_path / "p.ckpt", trained.params_, TINY.hash)
    loaded = IntersectionPolicy(config=TINY).load(path)
    X = np.ones((2, TINY.sim.obs_dim)) * 0.1
    assert np.array_equal(loaded.predict(X), trained.predict(X))
    with pytest.raises(ValueError, match="does not match"):
        IntersectionPolicy(config=TINY.replace(network={"hidden_sizes": (4,)})).load(path)
