"""Sojourn-time distributions used to build semi-Markov kernels.

Every family exposes its CDF (right-continuous), the left limit of the CDF,
an inverse CDF for sampling, a tail cutoff beyond which the remaining mass is
below ``TAIL_MASS``, and the discrete atoms it carries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from smpstop.errors import ModelError

TAIL_MASS = 1e-12


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self) -> None:
        _require_positive("exponential rate", self.rate)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, -np.expm1(-self.rate * np.maximum(t, 0.0)), 0.0)

    def cdf_left(self, t):
        return self.cdf(t)

    def ppf(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def tail_cutoff(self) -> float:
        return -math.log(TAIL_MASS) / self.rate

    def atoms(self) -> tuple[float, ...]:
        return ()

    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def to_dict(self) -> dict[str, Any]:
        return {"type": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Deterministic:
    duration: float

    def __post_init__(self) -> None:
        _require_positive("deterministic duration", self.duration)

    def cdf(self, t):
        return np.where(np.asarray(t, dtype=float) >= self.duration, 1.0, 0.0)

    def cdf_left(self, t):
        return np.where(np.asarray(t, dtype=float) > self.duration, 1.0, 0.0)

    def ppf(self, u):
        return np.full(np.shape(u), self.duration, dtype=float)

    def tail_cutoff(self) -> float:
        return self.duration

    def atoms(self) -> tuple[float, ...]:
        return (self.duration,)

    def breakpoints(self) -> tuple[float, ...]:
        return (self.duration,)

    def to_dict(self) -> dict[str, Any]:
        return {"type": "deterministic", "duration": self.duration}


@dataclass(frozen=True)
class Weibull:
    shape: float
    scale: float

    def __post_init__(self) -> None:
        _require_positive("weibull shape", self.shape)
        _require_positive("weibull scale", self.scale)

    def cdf(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return -np.expm1(-((t / self.scale) ** self.shape))

    def cdf_left(self, t):
        return self.cdf(t)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return self.scale * (-np.log1p(-u)) ** (1.0 / self.shape)

    def tail_cutoff(self) -> float:
        return self.scale * (-math.log(TAIL_MASS)) ** (1.0 / self.shape)

    def atoms(self) -> tuple[float, ...]:
        return ()

    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def to_dict(self) -> dict[str, Any]:
        return {"type": "weibull", "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class Empirical:
    """Piecewise-linear CDF through (0, 0) and the points ``(times[k], cdf[k])``.

    The last CDF value must be exactly 1 so the distribution has no mass at
    infinity.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", tuple(float(x) for x in self.times))
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        t, f = self.times, self.values
        if len(t) == 0 or len(t) != len(f):
            raise ModelError("empirical distribution needs equal-length, non-empty times and cdf")
        if not all(math.isfinite(x) for x in t + f):
            raise ModelError("empirical distribution has non-finite entries")
        if t[0] <= 0:
            raise ModelError(f"empirical grid must start above 0, got {t[0]}")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ModelError("empirical grid times must be strictly increasing")
        if any(b < a for a, b in zip(f, f[1:])) or f[0] < 0:
            raise ModelError("empirical cdf values must be nondecreasing and in [0, 1]")
        if f[-1] != 1.0:
            raise ModelError(f"empirical cdf must end at exactly 1, got {f[-1]!r}")

    @property
    def _xp(self) -> np.ndarray:
        return np.concatenate(([0.0], self.times))

    @property
    def _fp(self) -> np.ndarray:
        return np.concatenate(([0.0], self.values))

    def cdf(self, t):
        return np.interp(np.asarray(t, dtype=float), self._xp, self._fp, left=0.0, right=1.0)

    def cdf_left(self, t):
        return self.cdf(t)

    def ppf(self, u):
        # first grid point where the cdf reaches u, linear inside the segment
        u = np.asarray(u, dtype=float)
        xp, fp = self._xp, self._fp
        k = np.searchsorted(fp, u, side="left")
        k = np.clip(k, 1, len(fp) - 1)
        f0, f1 = fp[k - 1], fp[k]
        x0, x1 = xp[k - 1], xp[k]
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(f1 > f0, (u - f0) / (f1 - f0), 1.0)
        return x0 + np.clip(w, 0.0, 1.0) * (x1 - x0)

    def tail_cutoff(self) -> float:
        return self.times[-1]

    def atoms(self) -> tuple[float, ...]:
        return ()

    def breakpoints(self) -> tuple[float, ...]:
        return self.times

    def to_dict(self) -> dict[str, Any]:
        return {"type": "empirical", "times": list(self.times), "cdf": list(self.values)}


SojournDistribution = Union[Exponential, Deterministic, Weibull, Empirical]


def _require_positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ModelError(f"{name} must be a positive finite number, got {value!r}")


def distribution_from_dict(entry: dict[str, Any]) -> SojournDistribution:
    """Build a distribution from its JSON form, e.g. ``{"type": "exponential", "rate": 2}``."""
    if not isinstance(entry, dict) or "type" not in entry:
        raise ModelError(f"sojourn distribution must be an object with a 'type' key, got {entry!r}")
    kind = entry["type"]
    try:
        if kind == "exponential":
            return Exponential(float(entry["rate"]))
        if kind == "deterministic":
            return Deterministic(float(entry["duration"]))
        if kind == "weibull":
            return Weibull(float(entry["shape"]), float(entry["scale"]))
        if kind == "empirical":
            return Empirical(tuple(entry["times"]), tuple(entry["cdf"]))
    except KeyError as exc:
        raise ModelError(f"{kind} distribution is missing parameter {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ModelError(f"bad parameters for {kind} distribution: {exc}") from None
    raise ModelError(f"unknown sojourn distribution type {kind!r}")
