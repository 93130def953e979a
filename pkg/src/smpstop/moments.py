"""Discounted kernel moments.

For each state i the Bellman operator needs

    m0(i)    = int_0^inf e^{-beta t} (1 - sum_j Q(t, j|i)) dt
    m1(i, j) = int_0^inf e^{-beta t} Q(dt, j|i)

Because every sojourn law has total mass one, integration by parts gives
beta * m0(i) + sum_j m1(i, j) = 1. Quadrature results are checked against
this identity after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from smpstop.distributions import Deterministic, Exponential, SojournDistribution
from smpstop.errors import QuadratureError
from smpstop.model import PER_STATE, Model

@dataclass(frozen=True)
class QuadratureConfig:
    tol: float = 1e-9
    max_refine: int = 20
    min_refine: int = 6


@dataclass(frozen=True, eq=False)
class DiscountedMoments:
    m0: np.ndarray
    m1: np.ndarray
    beta: float

    @property
    def gamma_tight(self) -> float:
        return contraction_modulus(self)

    def identity_residual(self) -> np.ndarray:
        return self.beta * self.m0 + self.m1.sum(axis=1) - 1.0


def stieltjes_moments(dist: SojournDistribution, beta: float,
                      quad: QuadratureConfig = QuadratureConfig()) -> tuple[float, float]:
    """Return (m0, L) for one distribution by Stieltjes quadrature.

    ``L`` is int e^{-beta t} dF(t), evaluated with the midpoint rule on CDF
    increments plus exact weights for atoms; ``m0`` integrates e^{-beta t}
    against the trapezoidal survival function. The grid merges a uniform time
    grid, a uniform quantile grid and the distribution's breakpoints, and is
    refined dyadically until |beta*m0 + L - 1| < tol and two successive
    levels agree within tol. The identity alone is a weak certificate: the
    errors of the two rules largely cancel in it.
    """
    return _stieltjes_cached(dist, float(beta), quad)


@lru_cache(maxsize=4096)
def _stieltjes_cached(dist, beta: float, quad: QuadratureConfig) -> tuple[float, float]:
    t_cut = dist.tail_cutoff()
    extra = np.array(dist.breakpoints(), dtype=float)
    residual = change = np.inf
    prev: tuple[float, float] | None = None
    for level in range(min(quad.min_refine, quad.max_refine), quad.max_refine + 1):
        n = 2 ** level
        u = np.arange(1, n) / n
        grid = np.concatenate((
            np.linspace(0.0, t_cut, n + 1),
            dist.ppf(u),
            extra,
        ))
        grid = np.unique(grid[(grid >= 0) & (grid <= t_cut)])
        m0, lap = _rule(dist, beta, grid)
        residual = abs(beta * m0 + lap - 1.0)
        if prev is not None:
            change = max(abs(m0 - prev[0]), abs(lap - prev[1]))
            if residual < quad.tol and change < quad.tol:
                return m0, lap
        prev = (m0, lap)
    raise QuadratureError(
        f"Stieltjes quadrature for {dist!r} did not reach tol={quad.tol:g} after "
        f"2^{quad.max_refine} intervals (identity residual {residual:.3g}, "
        f"last refinement change {change:.3g})"
    )


def _rule(dist, beta: float, grid: np.ndarray) -> tuple[float, float]:
    lo, hi = grid[:-1], grid[1:]
    f_lo = dist.cdf(lo)
    f_hi_left = dist.cdf_left(hi)
    f_grid = dist.cdf(grid)
    # mass sitting exactly on grid points (atoms); zero for continuous laws
    jumps = f_grid - dist.cdf_left(grid)
    mid = 0.5 * (lo + hi)
    lap = np.sum(np.exp(-beta * mid) * (f_hi_left - f_lo)) + np.sum(np.exp(-beta * grid) * jumps)
    # int_lo^hi e^{-beta t} dt = e^{-beta lo} (1 - e^{-beta h}) / beta
    weight = np.exp(-beta * lo) * -np.expm1(-beta * (hi - lo)) / beta
    survival = 1.0 - 0.5 * (f_lo + f_hi_left)
    m0 = np.sum(weight * survival)
    t_end = grid[-1]
    tail = 1.0 - float(dist.cdf(t_end))
    lap += np.exp(-beta * t_end) * tail
    return float(m0), float(lap)


def closed_form_moments(dist: SojournDistribution, beta: float) -> tuple[float, float] | None:
    if isinstance(dist, Exponential):
        return 1.0 / (beta + dist.rate), dist.rate / (beta + dist.rate)
    if isinstance(dist, Deterministic):
        return -np.expm1(-beta * dist.duration) / beta, float(np.exp(-beta * dist.duration))
    return None


def distribution_moments(dist: SojournDistribution, beta: float,
                         quad: QuadratureConfig = QuadratureConfig(),
                         force_quadrature: bool = False) -> tuple[float, float]:
    if not force_quadrature:
        closed = closed_form_moments(dist, beta)
        if closed is not None:
            return closed
    return stieltjes_moments(dist, beta, quad)


def compute_moments(model: Model, quad: QuadratureConfig = QuadratureConfig(),
                    force_quadrature: bool = False) -> DiscountedMoments:
    """Discounted moments of every state of ``model``.

    ``force_quadrature`` bypasses the closed forms for exponential and
    deterministic sojourns; it exists for cross-checking.
    """
    n = model.n_states
    beta = model.beta
    kernel = model.kernel
    p = kernel.transition
    m0 = np.zeros(n)
    m1 = np.zeros((n, n))
    quad_used = np.zeros(n, dtype=bool)
    for i in range(n):
        if kernel.mode == PER_STATE:
            dist = kernel.sojourn[i]
            a, lap = distribution_moments(dist, beta, quad, force_quadrature)
            m0[i] = a
            m1[i] = p[i] * lap
            quad_used[i] = force_quadrature or closed_form_moments(dist, beta) is None
        else:
            for j in range(n):
                if p[i, j] == 0:
                    continue
                dist = kernel.sojourn[i][j]
                a, lap = distribution_moments(dist, beta, quad, force_quadrature)
                m0[i] += p[i, j] * a
                m1[i, j] = p[i, j] * lap
                quad_used[i] |= force_quadrature or closed_form_moments(dist, beta) is None
    moments = DiscountedMoments(m0=m0, m1=m1, beta=beta)
    residual = np.abs(moments.identity_residual())
    limit = np.where(quad_used, quad.tol, 1e-12)
    if np.any(residual > limit):
        i = int(np.argmax(residual - limit))
        raise QuadratureError(
            f"moment identity violated at state {model.states[i]}: residual {residual[i]:.3g}"
        )
    m0.setflags(write=False)
    m1.setflags(write=False)
    return moments


def contraction_modulus(moments: DiscountedMoments) -> float:
    """max_i sum_j m1(i, j): the sup-norm Lipschitz constant of the Bellman operator."""
    return float(np.max(moments.m1.sum(axis=1)))
