"""Bellman operator, value iteration and exact evaluation of hitting rules."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from smpstop.errors import BudgetOverflowError, ModelError, NumericalError, SingularSystemError
from smpstop.model import Model, RegularityWitness
from smpstop.moments import DiscountedMoments, contraction_modulus

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 10**6
MONOTONE_TOL = 1e-14
MAX_BUDGET = 10**9
DIRECT_SOLVE_LIMIT = 2000
BRUTE_FORCE_LIMIT = 20


@dataclass
class ValueFunction:
    """A value vector plus the bookkeeping of the run that produced it.

    ``iterations`` is the index n of the returned iterate V_n, counting from
    V_{-1} = 0, so V_0 = T(0) has ``iterations == 0``.
    """

    values: np.ndarray
    iterations: int = 0
    sup_diff: float = math.nan
    error_bound: float = math.nan
    converged: bool = True
    trace: list[tuple[int, float, float]] = field(default_factory=list, repr=False)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def continuation_value(moments: DiscountedMoments, model: Model, values) -> np.ndarray:
    """c(i) m0(i) + sum_j m1(i, j) V(j): the expected cost of running one more sojourn."""
    v = np.asarray(values, dtype=float)
    return model.cost_rate * moments.m0 + moments.m1 @ v


def bellman_apply(moments: DiscountedMoments, model: Model, values) -> np.ndarray:
    """TV(i) = min{ g(i), c(i) m0(i) + sum_j m1(i, j) V(j) }."""
    return np.minimum(model.terminal_cost, continuation_value(moments, model, values))


def value_iterate(model: Model, moments: DiscountedMoments, tol: float = DEFAULT_TOL,
                  max_iters: int = DEFAULT_MAX_ITERS, record_trace: bool = False) -> ValueFunction:
    """Iterate V_n = T V_{n-1} from V_{-1} = 0.

    Stops at the first n with ||V_n - V_{n-1}|| <= tol, or at n = max_iters.
    In the latter case the result has ``converged=False`` but still carries the
    last iterate and its a-posteriori bound. Each step is checked to be
    pointwise nondecreasing; a violation means corrupted inputs.
    """
    if tol < 0 or max_iters < 0:
        raise ValueError("tol and max_iters must be nonnegative")
    gamma = contraction_modulus(moments)
    factor = gamma / (1.0 - gamma)
    prev = np.zeros(model.n_states)
    trace: list[tuple[int, float, float]] = []
    n = 0
    while True:
        cur = bellman_apply(moments, model, prev)
        step = cur - prev
        if np.min(step) < -MONOTONE_TOL:
            i = int(np.argmin(step))
            raise NumericalError(
                f"value iteration decreased at state {model.states[i]} on step {n} "
                f"by {-step[i]:.3g}; the moments are not a valid discounted kernel"
            )
        diff = float(np.max(np.abs(step)))
        bound = factor * diff
        if record_trace:
            trace.append((n, diff, bound))
        if diff <= tol or n >= max_iters:
            return ValueFunction(values=cur, iterations=n, sup_diff=diff, error_bound=bound,
                                 converged=diff <= tol, trace=trace)
        prev = cur
        n += 1


def value_sequence(model: Model, moments: DiscountedMoments, n_max: int) -> list[np.ndarray]:
    """V_0, ..., V_{n_max} without a stopping test."""
    out = []
    v = np.zeros(model.n_states)
    for _ in range(n_max + 1):
        v = bellman_apply(moments, model, v)
        out.append(v)
    return out


def compute_iteration_budget(model: Model, witness: RegularityWitness, epsilon_opt: float) -> int:
    """Smallest N with gamma^(N+2) / (1 - gamma) * (||c||/beta + ||g|| + 1) <= epsilon_opt.

    ``gamma`` is the witness modulus 1 - eps + eps e^{-beta delta*}, and
    1 - gamma is taken as eps (1 - e^{-beta delta*}).
    """
    if not epsilon_opt > 0:
        raise ValueError("epsilon_opt must be positive")
    const = float(np.max(model.cost_rate)) / model.beta + float(np.max(model.terminal_cost)) + 1.0
    gamma = witness.gamma
    one_minus = witness.one_minus_gamma
    if const <= epsilon_opt:
        return 0
    if gamma <= 0.0:
        return 0
    # solve (N + 2) log(gamma) <= log(eps (1 - gamma) / const)
    target = math.log(epsilon_opt) + math.log(one_minus) - math.log(const)
    log_gamma = math.log1p(-one_minus)
    estimate = target / log_gamma - 2.0
    if estimate > MAX_BUDGET:
        raise BudgetOverflowError(
            f"iteration budget ~{estimate:.3g} exceeds {MAX_BUDGET}; "
            "use a larger epsilon_opt or a tighter regularity witness"
        )
    n = max(0, math.ceil(estimate))

    def holds(k: int) -> bool:
        return (k + 2) * log_gamma + math.log(const) - math.log(one_minus) <= math.log(epsilon_opt)

    while n > 0 and holds(n - 1):
        n -= 1
    while not holds(n):
        n += 1
    return n


def uncorrected_iteration_budget(model: Model, witness: RegularityWitness,
                                 epsilon_opt: float) -> int | None:
    """floor((log(eps (eps_reg - e^{-beta delta*})) - log(C)) / log(gamma)), or None.

    This variant uses eps_reg - e^{-beta delta*} in place of 1 - gamma; that
    difference is negative unless eps_reg is close to 1, in which case the
    logarithm is undefined and None is returned.
    """
    const = float(np.max(model.cost_rate)) / model.beta + float(np.max(model.terminal_cost)) + 1.0
    arg = epsilon_opt * (witness.epsilon_reg - math.exp(-model.beta * witness.delta_star))
    if arg <= 0 or witness.gamma <= 0:
        return None
    return math.floor((math.log(arg) - math.log(const)) / math.log(witness.gamma))


def evaluate_hitting_rule(model: Model, moments: DiscountedMoments,
                          stop_set: Iterable[int]) -> ValueFunction:
    """Exact expected cost of stopping at the first epoch the chain is in ``stop_set``.

    Solves V = g on the set and V = c m0 + m1 V off it.
    """
    n = model.n_states
    stop = np.zeros(n, dtype=bool)
    for i in stop_set:
        stop[model.index(i)] = True
    values = np.array(model.terminal_cost, dtype=float)
    free = ~stop
    if free.any():
        m_ff = moments.m1[np.ix_(free, free)]
        rhs = (model.cost_rate * moments.m0)[free] + moments.m1[np.ix_(free, stop)] @ values[stop]
        values[free] = _solve(m_ff, rhs)
    if not np.all(np.isfinite(values)):
        raise SingularSystemError("hitting-rule evaluation produced non-finite values")
    return ValueFunction(values=values, iterations=0, sup_diff=0.0, error_bound=0.0)


def _solve(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve (I - m) x = b."""
    if m.shape[0] <= DIRECT_SOLVE_LIMIT:
        try:
            return np.linalg.solve(np.eye(m.shape[0]) - m, b)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(f"hitting-rule system is singular: {exc}") from None
    # large systems: x = b + m x is a contraction in the sup norm (row sums < 1)
    x = np.zeros_like(b)
    gamma = float(np.max(m.sum(axis=1)))
    for _ in range(DEFAULT_MAX_ITERS):
        nxt = b + m @ x
        diff = float(np.max(np.abs(nxt - x)))
        x = nxt
        if diff * gamma / (1.0 - gamma) <= 1e-13 * max(1.0, float(np.max(np.abs(x)))):
            return x
    raise SingularSystemError("fixed-point solve for the hitting-rule system did not converge")


def brute_force_optimum(model: Model, moments: DiscountedMoments
                        ) -> tuple[ValueFunction, frozenset[int]]:
    """Pointwise minimum of the hitting-rule values over all 2^|S| stop sets.

    Also returns one minimizing set: the one with the smallest total value,
    ties broken by size and then lexicographically.
    """
    n = model.n_states
    if n > BRUTE_FORCE_LIMIT:
        raise ModelError(f"brute force enumerates 2^{n} sets; limit is |S| <= {BRUTE_FORCE_LIMIT}")
    best = np.full(n, np.inf)
    best_key: tuple | None = None
    best_set: frozenset[int] = frozenset()
    for size in range(n + 1):
        for subset in itertools.combinations(range(n), size):
            v = evaluate_hitting_rule(model, moments, subset).values
            best = np.minimum(best, v)
            key = (round(float(np.sum(v)), 8), size, subset)
            if best_key is None or key < best_key:
                best_key, best_set = key, frozenset(subset)
    return ValueFunction(values=best, iterations=0, sup_diff=0.0, error_bound=0.0), best_set
