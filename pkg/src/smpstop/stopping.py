"""Stopping rules, stopping-set extraction and the optimality certificate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Union

import numpy as np

from smpstop.errors import InconsistentPredicateError
from smpstop.history import SmpHistory
from smpstop.model import Model
from smpstop.moments import DiscountedMoments
from smpstop.solver import bellman_apply, continuation_value

NEVER = math.inf
DEFAULT_EQ_TOL = 1e-9
DEFAULT_EPSILON = 1e-8


@dataclass(frozen=True)
class HittingSet:
    """Stop at the first epoch whose state lies in ``states``; never stop if empty."""

    states: frozenset[int]

    def __init__(self, states: Iterable[int]) -> None:
        object.__setattr__(self, "states", frozenset(int(s) for s in states))


@dataclass(frozen=True)
class FirstEpoch:
    """Stop unconditionally at epoch ``n``."""

    n: int


@dataclass(frozen=True)
class Predicate:
    """A rule given as the indicator of the event {tau = n} on the prefix h_n.

    ``fires(h)`` is called with the history up to epoch h.n and must depend on
    nothing else. Along a single path it may fire at most once; use
    ``Predicate.first_time`` to turn a "stop now" condition into this form.
    """

    fires: Callable[[SmpHistory], bool]
    label: str = "predicate"

    @classmethod
    def first_time(cls, condition: Callable[[SmpHistory], bool], label: str = "first-time") -> Predicate:
        def fires(h: SmpHistory) -> bool:
            if not condition(h):
                return False
            return not any(condition(h.prefix(k)) for k in range(h.n))

        return cls(fires, label)


StoppingRule = Union[HittingSet, FirstEpoch, Predicate]


def stopping_time_of(rule: StoppingRule, path: SmpHistory) -> float | int | None:
    """Epoch at which ``rule`` stops along ``path``.

    Returns the epoch index, ``math.inf`` for the never-stop rule
    ``HittingSet(())``, and None when the rule has not fired within this
    finite prefix.
    """
    if isinstance(rule, HittingSet):
        if not rule.states:
            return NEVER
        for k, s in enumerate(path.states):
            if s in rule.states:
                return k
        return None
    if isinstance(rule, FirstEpoch):
        return rule.n if rule.n <= path.n else None
    if isinstance(rule, Predicate):
        found: int | None = None
        for k in range(path.n + 1):
            if rule.fires(path.prefix(k)):
                if found is not None:
                    raise InconsistentPredicateError(
                        f"predicate {rule.label!r} fired at epoch {k} after already firing at {found}"
                    )
                found = k
        return found
    raise TypeError(f"not a stopping rule: {rule!r}")


def fires_at(rule: StoppingRule, path: SmpHistory) -> bool:
    """True iff the rule stops exactly at the last epoch of ``path``."""
    if isinstance(rule, HittingSet):
        return path.states[-1] in rule.states and rule.states.isdisjoint(path.states[:-1])
    if isinstance(rule, FirstEpoch):
        return path.n == rule.n
    if isinstance(rule, Predicate):
        return bool(rule.fires(path))
    raise TypeError(f"not a stopping rule: {rule!r}")


@dataclass
class StoppingCertificate:
    stop_set: frozenset[int]
    epsilon_opt: float
    margin: float
    certified_optimal: bool
    iteration_budget: int | None = None
    near_boundary: tuple[int, ...] = ()
    continuation: np.ndarray = field(default=None, repr=False)
    next_values: np.ndarray = field(default=None, repr=False)

    @property
    def status(self) -> str:
        return "optimal" if self.certified_optimal else "epsilon-optimal only"


def extract_stop_set(model: Model, moments: DiscountedMoments, values,
                     eq_tol: float = DEFAULT_EQ_TOL, epsilon_opt: float = DEFAULT_EPSILON,
                     iteration_budget: int | None = None) -> StoppingCertificate:
    """Stopping set {i : g(i) = TV(i)} and the margin test for exact optimality.

    Equality is tested as g(i) <= TV(i) + eq_tol * (1 + |g(i)|). The margin is
    the smallest g(i) - TV(i) over states outside the set (inf if none); when
    it exceeds ``epsilon_opt`` the hitting time of the set is optimal, and
    otherwise the states within ``epsilon_opt`` of stopping are listed.
    """
    v = np.asarray(values, dtype=float)
    g = model.terminal_cost
    tv = bellman_apply(moments, model, v)
    stop = g <= tv + eq_tol * (1.0 + np.abs(g))
    gaps = (g - tv)[~stop]
    margin = float(np.min(gaps)) if gaps.size else math.inf
    rest = np.flatnonzero(~stop)
    near = tuple(int(i) for i in rest if g[i] - tv[i] <= epsilon_opt)
    return StoppingCertificate(
        stop_set=frozenset(int(i) for i in np.flatnonzero(stop)),
        epsilon_opt=epsilon_opt,
        margin=margin,
        certified_optimal=margin > epsilon_opt,
        iteration_budget=iteration_budget,
        near_boundary=near,
        continuation=continuation_value(moments, model, v),
        next_values=tv,
    )
