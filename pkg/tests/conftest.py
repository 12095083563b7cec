import numpy as np
import pytest

from objnav_drq.drq import Batch, LearnerConfig
from objnav_drq.networks import NetConfig, init_params


def toy_net(**kw) -> NetConfig:
    base = dict(n_categories=2, map_size=16, conv_channels=4, n_conv=4, feature_dim=6, hidden_dim=32)
    base.update(kw)
    return NetConfig(**base)


def random_batch(rng, net: NetConfig, n: int = 4, done=None) -> Batch:
    shape = (n, net.in_channels, net.map_size, net.map_size)
    cats = rng.integers(net.n_categories, size=n)
    g = np.eye(net.n_categories)[cats]
    return Batch(
        s=(rng.random(shape) < 0.3).astype(np.float64),
        a=rng.uniform(-0.9, 0.9, size=(n, 2)),
        r=rng.normal(size=n),
        s_next=(rng.random(shape) < 0.3).astype(np.float64),
        g=g,
        g_next=g.copy(),
        done=(rng.random(n) < 0.3).astype(np.float64) if done is None else np.full(n, float(done)),
    )


def numeric_grad(f, arr: np.ndarray, idx, h: float = 1e-6) -> float:
    old = arr[idx]
    arr[idx] = old + h
    up = f()
    arr[idx] = old - h
    down = f()
    arr[idx] = old
    return (up - down) / (2 * h)


def rel_err(a: float, b: float, floor: float = 1e-7) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def net():
    return toy_net()


@pytest.fixture
def params(net):
    return init_params(net, np.random.default_rng(0))


@pytest.fixture
def lcfg():
    return LearnerConfig(batch_size=4, capacity=100)
