"""The two-action decision process equivalent to the stopping problem.

Each state of the original process gets a "continue" action (action 0, the
original kernel and cost rate) and a "stop" action (action 1): a deterministic
unit sojourn into an absorbing zero-cost state DELTA, during which cost
accrues at rate beta*g(i)/(1 - e^{-beta}). Discounted over the unit sojourn
that is exactly g(i), so stopping policies and stopping times cost the same.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from smpstop.history import CONTINUE, DELTA, STOP, SmdpHistory, SmpHistory, embed, strip
from smpstop.model import Model
from smpstop.moments import DiscountedMoments
from smpstop.stopping import Predicate, StoppingRule, fires_at, stopping_time_of

Policy = Callable[[SmdpHistory], int]


@dataclass(frozen=True, eq=False)
class Smdp:
    """Arrays are indexed by original state; DELTA is implicit.

    ``stop_m0`` and ``stop_m1`` are the discounted moments of the unit
    sojourn, (1 - e^{-beta})/beta and e^{-beta}.
    """

    beta: float
    cost_continue: np.ndarray
    cost_stop: np.ndarray
    stop_m0: float
    stop_m1: float
    model: Model

    @property
    def n_states(self) -> int:
        """Number of states including DELTA."""
        return self.model.n_states + 1

    def actions(self, state: int) -> tuple[int, ...]:
        return (STOP,) if state == DELTA else (CONTINUE, STOP)

    def cost(self, state: int, action: int) -> float:
        if state == DELTA:
            return 0.0
        return float(self.cost_stop[state] if action == STOP else self.cost_continue[state])


def build_smdp(model: Model) -> Smdp:
    beta = model.beta
    one_minus = -math.expm1(-beta)
    return Smdp(
        beta=beta,
        cost_continue=model.cost_rate,
        cost_stop=beta * model.terminal_cost / one_minus,
        stop_m0=one_minus / beta,
        stop_m1=math.exp(-beta),
        model=model,
    )


def smdp_value_iterate(smdp: Smdp, moments: DiscountedMoments, n_max: int) -> list[np.ndarray]:
    """U_0, ..., U_{n_max} from U_{-1} = 0; the last entry of each vector is DELTA."""
    n = smdp.model.n_states
    u = np.zeros(n + 1)
    out = []
    for _ in range(n_max + 1):
        keep_going = smdp.cost_continue * moments.m0 + moments.m1 @ u[:n]
        stop_now = smdp.cost_stop * smdp.stop_m0 + smdp.stop_m1 * u[n]
        nxt = np.empty(n + 1)
        nxt[:n] = np.minimum(keep_going, stop_now)
        nxt[n] = smdp.stop_m1 * u[n]  # zero cost rate at DELTA
        out.append(nxt)
        u = nxt
    return out


@dataclass(frozen=True)
class StationaryPolicy:
    """Deterministic stationary policy: one action per original state, STOP at DELTA."""

    actions: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(a not in (CONTINUE, STOP) for a in self.actions):
            raise ValueError(f"infeasible action in {self.actions}")

    @classmethod
    def stop_on(cls, n_states: int, stop_set: Iterable[int]) -> StationaryPolicy:
        s = set(stop_set)
        return cls(tuple(STOP if i in s else CONTINUE for i in range(n_states)))

    def action(self, state: int) -> int:
        return STOP if state == DELTA else self.actions[state]

    def __call__(self, history: SmdpHistory) -> int:
        return self.action(history.states[-1])


def _as_smdp_history(history) -> SmdpHistory:
    if isinstance(history, SmdpHistory):
        return history
    return SmdpHistory.from_flat(history)


class InducedPolicy:
    """Decision rules f_n of the policy induced by a stopping rule.

    On an embedded history (all actions "continue") the policy stops iff the
    rule stops exactly at the current epoch; on any other history it stops.
    """

    def __init__(self, rule: StoppingRule) -> None:
        self.rule = rule

    def __call__(self, history) -> int:
        h = _as_smdp_history(history)
        plain = strip(h)
        if plain is None:
            return STOP
        return STOP if fires_at(self.rule, plain) else CONTINUE

    def __repr__(self) -> str:
        return f"InducedPolicy({self.rule!r})"


def induce_policy(rule: StoppingRule) -> InducedPolicy:
    return InducedPolicy(rule)


def induce_stopping_time(policy: Policy) -> Predicate:
    """tau_pi = first n with f_n(M_n(h_n)) = STOP, as an event-form predicate."""

    @lru_cache(maxsize=8192)
    def decide(h: SmpHistory) -> int:
        return policy(embed(h))

    def fires(h: SmpHistory) -> bool:
        if decide(h) != STOP:
            return False
        return all(decide(h.prefix(k)) == CONTINUE for k in range(h.n))

    return Predicate(fires, label=f"induced({policy!r})")


@dataclass
class RoundTripResult:
    ok: bool
    checked: int
    counterexample: SmpHistory | None = None
    expected: object = None
    got: object = None

    def __bool__(self) -> bool:
        return self.ok


def _within_prefix(value):
    # inf (never stops) and None (no stop inside the prefix) are indistinguishable on a finite path
    return None if value is None or value == math.inf else value


def round_trip_check(rule: StoppingRule, paths: Sequence[SmpHistory]) -> RoundTripResult:
    """Check tau == tau_{pi_tau} on every path; carries the first counterexample."""
    back = induce_stopping_time(induce_policy(rule))
    for count, path in enumerate(paths, start=1):
        a = _within_prefix(stopping_time_of(rule, path))
        b = _within_prefix(stopping_time_of(back, path))
        if a != b:
            return RoundTripResult(False, count, path, a, b)
    return RoundTripResult(True, len(paths))
