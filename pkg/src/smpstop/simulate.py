"""Seeded Monte Carlo simulation of stopped trajectories.

Random numbers follow a counter contract: variate number ``k`` of replication
``r`` is element ``r`` of a Philox stream keyed by ``(seed, k)``. Every
replication is therefore a pure function of (seed, r, k), the whole batch can
be advanced one epoch at a time with array operations, and results do not
depend on how many replications run alongside. Epoch ``m`` of a trajectory
uses variates ``2m`` (next state) and ``2m + 1`` (sojourn).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from smpstop.equivalence import Policy, Smdp, StationaryPolicy
from smpstop.history import CONTINUE, STOP, SmdpHistory, SmpHistory
from smpstop.model import PER_STATE, Model
from smpstop.stopping import FirstEpoch, HittingSet, Predicate, StoppingRule

DEFAULT_BIAS = 1e-6


def uniforms(seed: int, counter: int, size: int) -> np.ndarray:
    """The first ``size`` variates of stream ``(seed, counter)``."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(counter)])
    return np.random.Generator(np.random.Philox(ss)).random(size)


def default_horizon(model: Model, bias: float = DEFAULT_BIAS, rate_bound: float | None = None) -> float:
    """A horizon T with e^{-beta T} ||c|| / beta strictly below ``bias``."""
    c = float(np.max(model.cost_rate)) if rate_bound is None else rate_bound
    if c <= 0:
        return 1.0
    # one unit past the exact root keeps the bound strictly below bias despite rounding
    return max(1.0, math.log(c / (model.beta * bias)) / model.beta + 1.0)


def truncation_bias(model: Model, horizon: float, rate_bound: float | None = None) -> float:
    c = float(np.max(model.cost_rate)) if rate_bound is None else rate_bound
    return math.exp(-model.beta * horizon) * c / model.beta


@dataclass
class Trajectory:
    path: SmpHistory
    stop_epoch: int | None
    truncated_at: float | None
    discounted_cost: float

    @property
    def jump_epochs(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.path.sojourns)))


@dataclass
class EstimatorReport:
    replications: int
    mean: float
    std_error: float
    truncation_bias_bound: float
    truncated: int = 0
    seed: int = 0

    def as_dict(self) -> dict:
        return {
            "replications": self.replications,
            "mean": self.mean,
            "std_error": self.std_error,
            "truncation_bias_bound": self.truncation_bias_bound,
            "truncated": self.truncated,
            "seed": self.seed,
        }


def _summarize(costs: np.ndarray, truncated: np.ndarray, bias: float, seed: int) -> EstimatorReport:
    n = costs.size
    # np.mean / np.std on a fixed-order array: deterministic pairwise summation
    mean = float(np.mean(costs))
    se = float(np.std(costs, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return EstimatorReport(n, mean, se, bias, int(np.count_nonzero(truncated)), seed)


class _Sampler:
    """Vectorized next-state and sojourn sampling for a batch of replications."""

    def __init__(self, model: Model, seed: int, reps: np.ndarray):
        self.model = model
        self.seed = seed
        self.reps = reps
        self.size = int(reps.max()) + 1 if reps.size else 0
        p = model.kernel.transition
        self.cum = np.cumsum(p, axis=1)
        n = model.n_states
        self.last = np.array([int(np.flatnonzero(p[i] > 0)[-1]) for i in range(n)])

    def draw(self, counter: int, rows: np.ndarray) -> np.ndarray:
        return uniforms(self.seed, counter, self.size)[self.reps[rows]]

    def step(self, epoch: int, rows: np.ndarray, cur: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Next states and sojourns for batch positions ``rows`` sitting in states ``cur``."""
        u_jump = self.draw(2 * epoch, rows)
        u_time = self.draw(2 * epoch + 1, rows)
        nxt = np.sum(self.cum[cur] <= u_jump[:, None], axis=1)
        nxt = np.minimum(nxt, self.last[cur])
        t = np.empty(rows.size)
        kernel = self.model.kernel
        if kernel.mode == PER_STATE:
            for s in np.unique(cur):
                m = cur == s
                t[m] = kernel.sojourn[s].ppf(u_time[m])
        else:
            keys = cur * self.model.n_states + nxt
            for key in np.unique(keys):
                m = keys == key
                i, j = divmod(int(key), self.model.n_states)
                t[m] = kernel.sojourn[i][j].ppf(u_time[m])
        return nxt, t


def _stop_mask(rule: StoppingRule, epoch: int, cur: np.ndarray, histories) -> np.ndarray:
    if isinstance(rule, HittingSet):
        return np.isin(cur, list(rule.states)) if rule.states else np.zeros(cur.size, dtype=bool)
    if isinstance(rule, FirstEpoch):
        return np.full(cur.size, epoch == rule.n)
    if isinstance(rule, Predicate):
        return np.array([bool(rule.fires(h)) for h in histories], dtype=bool)
    raise TypeError(f"not a stopping rule: {rule!r}")


def _run_smp(model: Model, start: int, rule: StoppingRule, horizon: float, seed: int,
             reps: np.ndarray, keep_paths: bool):
    n_reps = reps.size
    beta = model.beta
    c, g = model.cost_rate, model.terminal_cost
    sampler = _Sampler(model, seed, reps)
    cur = np.full(n_reps, start, dtype=int)
    epoch_time = np.zeros(n_reps)
    disc = np.ones(n_reps)
    cost = np.zeros(n_reps)
    stop_epoch = np.full(n_reps, -1)
    truncated = np.zeros(n_reps, dtype=bool)
    alive = np.ones(n_reps, dtype=bool)
    track = keep_paths or isinstance(rule, Predicate)
    states = [[start] for _ in range(n_reps)] if track else None
    sojourns = [[] for _ in range(n_reps)] if track else None
    epoch = 0
    while alive.any():
        rows = np.flatnonzero(alive)
        hist = ([SmpHistory._unchecked(tuple(states[r]), tuple(sojourns[r])) for r in rows]
                if isinstance(rule, Predicate) else None)
        stop = _stop_mask(rule, epoch, cur[rows], hist)
        if stop.any():
            done = rows[stop]
            cost[done] += g[cur[done]] * disc[done]
            stop_epoch[done] = epoch
            alive[done] = False
            rows = rows[~stop]
        if rows.size:
            nxt, t = sampler.step(epoch, rows, cur[rows])
            new_time = epoch_time[rows] + t
            over = new_time > horizon
            end_disc = np.where(over, math.exp(-beta * horizon), np.exp(-beta * new_time))
            cost[rows] += c[cur[rows]] * (disc[rows] - end_disc) / beta
            cut = rows[over]
            truncated[cut] = True
            alive[cut] = False
            go = rows[~over]
            cur[go] = nxt[~over]
            epoch_time[go] = new_time[~over]
            disc[go] = end_disc[~over]
            if track:
                for r, s, dt in zip(go, nxt[~over], t[~over]):
                    states[r].append(int(s))
                    sojourns[r].append(float(dt))
        epoch += 1
    return cost, stop_epoch, truncated, states, sojourns


def sample_trajectory(model: Model, start: int | str, rule: StoppingRule,
                      horizon: float | None = None, seed: int = 0, replication: int = 0) -> Trajectory:
    """One stopped trajectory: replication ``replication`` of master seed ``seed``."""
    start = model.index(start)
    horizon = default_horizon(model) if horizon is None else horizon
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    cost, stop_epoch, truncated, states, sojourns = _run_smp(
        model, start, rule, horizon, seed, np.array([replication]), keep_paths=True)
    path = SmpHistory(states[0], sojourns[0])
    if truncated[0] and path.n == 0:
        warnings.warn(f"no jump occurred before horizon {horizon:g}; increase the horizon",
                      RuntimeWarning, stacklevel=2)
    return Trajectory(
        path=path,
        stop_epoch=int(stop_epoch[0]) if stop_epoch[0] >= 0 else None,
        truncated_at=horizon if truncated[0] else None,
        discounted_cost=float(cost[0]),
    )


def estimate_value(model: Model, start: int | str, rule: StoppingRule, reps: int,
                   horizon: float | None = None, seed: int = 0) -> EstimatorReport:
    """Sample mean and standard error of the discounted cost over ``reps`` replications."""
    if reps < 2:
        raise ValueError("need at least 2 replications")
    start = model.index(start)
    horizon = default_horizon(model) if horizon is None else horizon
    cost, _, truncated, _, _ = _run_smp(model, start, rule, horizon, seed,
                                        np.arange(reps), keep_paths=False)
    return _summarize(cost, truncated, truncation_bias(model, horizon), seed)


def sample_jump_paths(model: Model, starts: int | str | Sequence, length: int,
                      n_paths: int, seed: int = 0) -> list[SmpHistory]:
    """``n_paths`` unstopped jump-chain prefixes with ``length`` jumps each.

    ``starts`` is one state for all paths or one state per path.
    """
    if isinstance(starts, (int, str, np.integer)):
        start_idx = np.full(n_paths, model.index(starts), dtype=int)
    else:
        start_idx = np.array([model.index(s) for s in starts], dtype=int)
        if start_idx.size != n_paths:
            raise ValueError("need one start state per path")
    reps = np.arange(n_paths)
    sampler = _Sampler(model, seed, reps)
    cur = start_idx.copy()
    states = np.empty((n_paths, length + 1), dtype=int)
    times = np.empty((n_paths, length))
    states[:, 0] = cur
    for k in range(length):
        cur, t = sampler.step(k, reps, cur)
        states[:, k + 1] = cur
        times[:, k] = t
    return [SmpHistory(tuple(states[r]), tuple(times[r])) for r in range(n_paths)]


def _run_smdp(smdp: Smdp, start: int, policy: Policy, horizon: float, seed: int,
              reps: np.ndarray):
    model = smdp.model
    n_reps = reps.size
    beta = model.beta
    sampler = _Sampler(model, seed, reps)
    cur = np.full(n_reps, start, dtype=int)
    epoch_time = np.zeros(n_reps)
    disc = np.ones(n_reps)
    cost = np.zeros(n_reps)
    truncated = np.zeros(n_reps, dtype=bool)
    alive = np.ones(n_reps, dtype=bool)
    stationary = isinstance(policy, StationaryPolicy)
    act_table = np.array(policy.actions, dtype=int) if stationary else None
    states = None if stationary else [[start] for _ in range(n_reps)]
    sojourns = None if stationary else [[] for _ in range(n_reps)]
    epoch = 0
    while alive.any():
        rows = np.flatnonzero(alive)
        if stationary:
            act = act_table[cur[rows]]
        else:
            # every earlier action was CONTINUE: a STOP ends the simulated path
            act = np.array([
                policy(SmdpHistory._unchecked(tuple(states[r]), (CONTINUE,) * len(sojourns[r]),
                                              tuple(sojourns[r])))
                for r in rows
            ], dtype=int)
        stop = act == STOP
        if stop.any():
            done = rows[stop]
            end = epoch_time[done] + 1.0
            end_disc = np.where(end > horizon, math.exp(-beta * horizon), np.exp(-beta * end))
            cost[done] += smdp.cost_stop[cur[done]] * (disc[done] - end_disc) / beta
            truncated[done[end > horizon]] = True
            # after the unit sojourn the path sits in DELTA at zero cost forever
            alive[done] = False
            rows = rows[~stop]
        if rows.size:
            nxt, t = sampler.step(epoch, rows, cur[rows])
            new_time = epoch_time[rows] + t
            over = new_time > horizon
            end_disc = np.where(over, math.exp(-beta * horizon), np.exp(-beta * new_time))
            cost[rows] += smdp.cost_continue[cur[rows]] * (disc[rows] - end_disc) / beta
            truncated[rows[over]] = True
            alive[rows[over]] = False
            go = rows[~over]
            cur[go] = nxt[~over]
            epoch_time[go] = new_time[~over]
            disc[go] = end_disc[~over]
            if not stationary:
                for r, s, dt in zip(go, nxt[~over], t[~over]):
                    states[r].append(int(s))
                    sojourns[r].append(float(dt))
        epoch += 1
    return cost, truncated


def simulate_smdp_policy(smdp: Smdp, start: int | str, policy: Policy, reps: int,
                         horizon: float | None = None, seed: int = 0) -> EstimatorReport:
    """Discounted cost of ``policy`` on the decision process, estimated from ``reps`` paths.

    A STOP action costs ``cost_stop`` over a deterministic unit sojourn and
    then absorbs in DELTA. Uses the same variate layout as ``estimate_value``,
    so equal seeds couple the two simulations path by path.
    """
    if reps < 2:
        raise ValueError("need at least 2 replications")
    model = smdp.model
    start = model.index(start)
    rate = max(float(np.max(smdp.cost_continue)), float(np.max(smdp.cost_stop)))
    horizon = default_horizon(model, rate_bound=rate) if horizon is None else horizon
    cost, truncated = _run_smdp(smdp, start, policy, horizon, seed, np.arange(reps))
    return _summarize(cost, truncated, truncation_bias(model, horizon, rate_bound=rate), seed)
