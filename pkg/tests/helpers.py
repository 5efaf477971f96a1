"""Random instance builders shared by the tests."""

from __future__ import annotations

import numpy as np

from repositioning import DemandSample, InventoryVector, NetworkConfig, SubperiodSample


def stochastic(n: int, rng: np.random.Generator) -> np.ndarray:
    P = rng.uniform(0.0, 1.0, (n, n)) + 1e-3
    return P / P.sum(axis=1, keepdims=True)


def substochastic(n: int, rng: np.random.Generator, low: float = 0.5, high: float = 1.0) -> np.ndarray:
    return stochastic(n, rng) * rng.uniform(low, high, (n, 1))


def network(n: int, rng: np.random.Generator, c_range=(0.1, 1.0), l_range=(1.0, 2.0)) -> NetworkConfig:
    """With c <= 1 <= l the cost condition holds for every stochastic P."""
    l = rng.uniform(*l_range, (n, n))
    c = rng.uniform(*c_range, (n, n))
    np.fill_diagonal(c, 0.0)
    return NetworkConfig(l, c)


def point(n: int, rng: np.random.Generator, total: float = 1.0) -> InventoryVector:
    return InventoryVector(rng.dirichlet(np.ones(n)) * total, total)


def sample(n: int, rng: np.random.Generator, high: float = 0.8) -> DemandSample:
    return DemandSample(rng.uniform(0.0, high, n), stochastic(n, rng))


def subperiods(n: int, H: int, rng: np.random.Generator, high: float = 0.6) -> list[SubperiodSample]:
    return [SubperiodSample(rng.uniform(0.0, high, n), substochastic(n, rng)) for _ in range(H)]


def balanced(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    z = rng.normal(size=n) * scale
    return z - z.mean()
