"""Seeded random models shared by the test modules."""

from __future__ import annotations

import numpy as np

from smpstop.distributions import Deterministic, Empirical, Exponential, Weibull
from smpstop.model import PER_PAIR, PER_STATE, KernelSpec, Model


def random_distribution(rng: np.random.Generator):
    kind = rng.integers(4)
    if kind == 0:
        return Exponential(float(rng.uniform(0.1, 3.0)))
    if kind == 1:
        return Deterministic(float(rng.uniform(0.2, 3.0)))
    if kind == 2:
        return Weibull(float(rng.uniform(0.7, 3.0)), float(rng.uniform(0.3, 3.0)))
    m = int(rng.integers(2, 6))
    times = np.cumsum(rng.uniform(0.1, 1.5, size=m))
    values = np.sort(rng.uniform(0.0, 1.0, size=m))
    values[-1] = 1.0
    return Empirical(tuple(times.tolist()), tuple(values.tolist()))


def random_model(seed: int, n_min: int = 2, n_max: int = 8, mode: str | None = None) -> Model:
    rng = np.random.default_rng([20260, seed])
    n = int(rng.integers(n_min, n_max + 1))
    beta = float(rng.uniform(0.02, 0.5))
    c = rng.uniform(0.0, 100.0, size=n)
    g = rng.uniform(0.0, 500.0, size=n)
    p = rng.dirichlet(np.ones(n), size=n)
    p /= p.sum(axis=1, keepdims=True)
    mode = mode or (PER_STATE if rng.random() < 0.5 else PER_PAIR)
    if mode == PER_STATE:
        sojourn = tuple(random_distribution(rng) for _ in range(n))
    else:
        sojourn = tuple(tuple(random_distribution(rng) for _ in range(n)) for _ in range(n))
    return Model(
        states=tuple(f"s{k}" for k in range(n)),
        beta=beta,
        cost_rate=c,
        terminal_cost=g,
        kernel=KernelSpec(p, mode, sojourn),
        name=f"random-{seed}",
    )


def exponential_model(n: int, beta: float, c, g, rate: float, p=None) -> Model:
    p = np.full((n, n), 1.0 / n) if p is None else np.asarray(p, dtype=float)
    return Model(
        states=tuple(str(k + 1) for k in range(n)),
        beta=beta,
        cost_rate=np.broadcast_to(np.asarray(c, dtype=float), (n,)).copy(),
        terminal_cost=np.broadcast_to(np.asarray(g, dtype=float), (n,)).copy(),
        kernel=KernelSpec(p, PER_STATE, tuple(Exponential(rate) for _ in range(n))),
    )
