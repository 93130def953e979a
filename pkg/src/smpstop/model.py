"""Semi-Markov optimal stopping models: types, JSON ingestion, validation."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from smpstop.distributions import SojournDistribution, distribution_from_dict
from smpstop.errors import ModelError, NoWitnessError

ROW_SUM_TOL = 1e-12
WITNESS_EPS_FLOOR = 1e-12
DELTA_GRID = np.geomspace(1e-4, 0.5, 65)[1:]

PER_STATE = "per_state"
PER_PAIR = "per_pair"


def _frozen_array(values, name: str, ndim: int) -> np.ndarray:
    try:
        arr = np.array(values, dtype=float)
    except (TypeError, ValueError):
        raise ModelError(f"{name} must be numeric") from None
    if arr.ndim != ndim:
        raise ModelError(f"{name} must be a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Factorized kernel Q(t, j | i) = P(j | i) * F(t).

    ``sojourn`` holds one distribution per state in ``per_state`` mode and an
    n-by-n nested tuple in ``per_pair`` mode.
    """

    transition: np.ndarray
    mode: str
    sojourn: tuple

    def __post_init__(self) -> None:
        p = _frozen_array(self.transition, "transition", 2)
        n = p.shape[0]
        if p.shape != (n, n) or n == 0:
            raise ModelError(f"transition must be a non-empty square matrix, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ModelError("transition has non-finite entries")
        bad = np.argwhere((p < 0) | (p > 1))
        if bad.size:
            i, j = bad[0]
            raise ModelError(f"transition entry ({i}, {j}) = {p[i, j]} is outside [0, 1]")
        sums = p.sum(axis=1)
        for i, s in enumerate(sums):
            if abs(s - 1.0) > ROW_SUM_TOL:
                raise ModelError(f"row {i} of transition sums to {s:.15g}, not 1")
        if np.any(sums != 1.0):
            p = p / sums[:, None]
            p.setflags(write=False)
        object.__setattr__(self, "transition", p)

        if self.mode == PER_STATE:
            soj = tuple(self.sojourn)
            if len(soj) != n:
                raise ModelError(f"per_state sojourn needs {n} distributions, got {len(soj)}")
        elif self.mode == PER_PAIR:
            soj = tuple(tuple(row) for row in self.sojourn)
            if len(soj) != n or any(len(row) != n for row in soj):
                raise ModelError(f"per_pair sojourn must be a {n}x{n} matrix of distributions")
        else:
            raise ModelError(f"sojourn mode must be 'per_state' or 'per_pair', got {self.mode!r}")
        object.__setattr__(self, "sojourn", soj)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def distribution(self, i: int, j: int) -> SojournDistribution:
        """Sojourn distribution governing a jump from ``i`` to ``j``."""
        if self.mode == PER_STATE:
            return self.sojourn[i]
        return self.sojourn[i][j]

    def jump_mass(self, t: float) -> np.ndarray:
        """Vector of sum_j Q(t, j | i) over states i."""
        n = self.n_states
        if self.mode == PER_STATE:
            return np.array([float(self.sojourn[i].cdf(t)) for i in range(n)])
        out = np.zeros(n)
        for i in range(n):
            for j in range(n):
                if self.transition[i, j] > 0:
                    out[i] += self.transition[i, j] * float(self.sojourn[i][j].cdf(t))
        return out


@dataclass(frozen=True, eq=False)
class Model:
    states: tuple[str, ...]
    beta: float
    cost_rate: np.ndarray
    terminal_cost: np.ndarray
    kernel: KernelSpec
    name: str = ""

    def __post_init__(self) -> None:
        states = tuple(str(s) for s in self.states)
        if not states:
            raise ModelError("model needs at least one state")
        if len(set(states)) != len(states):
            raise ModelError("state identifiers must be unique")
        object.__setattr__(self, "states", states)
        if not (isinstance(self.beta, (int, float)) and math.isfinite(self.beta) and self.beta > 0):
            raise ModelError(f"beta must be a positive finite number, got {self.beta!r}")
        object.__setattr__(self, "beta", float(self.beta))
        n = len(states)
        for name in ("cost_rate", "terminal_cost"):
            arr = _frozen_array(getattr(self, name), name, 1)
            if arr.shape != (n,):
                raise ModelError(f"{name} has {arr.shape[0]} entries, expected {n}")
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"{name} has non-finite entries")
            if np.any(arr < 0):
                i = int(np.argmin(arr))
                raise ModelError(f"{name}[{states[i]}] = {arr[i]} is negative")
            object.__setattr__(self, name, arr)
        if self.kernel.n_states != n:
            raise ModelError(f"kernel has {self.kernel.n_states} states, model has {n}")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index(self, state: str | int) -> int:
        """Position of a state identifier (ints are accepted as positions)."""
        if isinstance(state, (int, np.integer)) and not isinstance(state, bool):
            if not 0 <= state < self.n_states:
                raise ModelError(f"state index {state} out of range")
            return int(state)
        try:
            return self.states.index(str(state))
        except ValueError:
            raise ModelError(f"unknown state {state!r}; known states: {', '.join(self.states)}") from None

    def to_dict(self) -> dict[str, Any]:
        k = self.kernel
        if k.mode == PER_STATE:
            dists: list = [d.to_dict() for d in k.sojourn]
        else:
            dists = [[d.to_dict() for d in row] for row in k.sojourn]
        out: dict[str, Any] = {
            "beta": self.beta,
            "states": list(self.states),
            "cost_rate": self.cost_rate.tolist(),
            "terminal_cost": self.terminal_cost.tolist(),
            "kernel": {
                "transition": k.transition.tolist(),
                "sojourn": {"mode": k.mode, "distributions": dists},
            },
        }
        if self.name:
            out["name"] = self.name
        return out

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form of the model."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def model_from_dict(data: dict[str, Any]) -> Model:
    if not isinstance(data, dict):
        raise ModelError("model file must contain a JSON object")
    missing = [k for k in ("beta", "states", "cost_rate", "terminal_cost", "kernel") if k not in data]
    if missing:
        raise ModelError(f"model is missing keys: {', '.join(missing)}")
    kernel = data["kernel"]
    if not isinstance(kernel, dict) or "transition" not in kernel or "sojourn" not in kernel:
        raise ModelError("kernel must be an object with 'transition' and 'sojourn'")
    sojourn = kernel["sojourn"]
    if not isinstance(sojourn, dict) or "mode" not in sojourn or "distributions" not in sojourn:
        raise ModelError("kernel.sojourn must be an object with 'mode' and 'distributions'")
    mode = sojourn["mode"]
    raw = sojourn["distributions"]
    if not isinstance(raw, list):
        raise ModelError("kernel.sojourn.distributions must be an array")
    if mode == PER_PAIR:
        if not all(isinstance(row, list) for row in raw):
            raise ModelError("per_pair distributions must be an array of arrays")
        dists: tuple = tuple(tuple(distribution_from_dict(d) for d in row) for row in raw)
    else:
        dists = tuple(distribution_from_dict(d) for d in raw)
    beta = data["beta"]
    if isinstance(beta, bool) or not isinstance(beta, (int, float)):
        raise ModelError(f"beta must be a number, got {beta!r}")
    if not isinstance(data["states"], list):
        raise ModelError("states must be an array")
    return Model(
        states=tuple(data["states"]),
        beta=float(beta),
        cost_rate=data["cost_rate"],
        terminal_cost=data["terminal_cost"],
        kernel=KernelSpec(transition=kernel["transition"], mode=mode, sojourn=dists),
        name=str(data.get("name", "")),
    )


def load_model(path: str | Path) -> Model:
    """Read and validate a model file.

    Raises ``ModelError`` for malformed JSON as well as for any violated
    invariant; the message names the offending row, state or parameter.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read model file {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from None
    return model_from_dict(data)


@dataclass(frozen=True)
class RegularityWitness:
    """Constants (delta, epsilon_reg) with sum_j Q(delta, j|i) <= 1 - epsilon_reg for all i."""

    delta: float
    epsilon_reg: float
    delta_star: float = field(init=False)
    gamma: float = field(init=False)
    beta: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.epsilon_reg <= 1:
            raise NoWitnessError(f"epsilon_reg must lie in (0, 1], got {self.epsilon_reg}")
        ds = min(self.delta, 0.5)
        object.__setattr__(self, "delta_star", ds)
        # 1 - eps + eps*exp(-beta*ds), written to keep precision when eps*(1-e^{-beta ds}) is tiny
        object.__setattr__(self, "gamma", 1.0 + self.epsilon_reg * math.expm1(-self.beta * ds))

    @property
    def one_minus_gamma(self) -> float:
        return -self.epsilon_reg * math.expm1(-self.beta * self.delta_star)


def witness_at(model: Model, delta: float) -> RegularityWitness:
    """Witness for a fixed ``delta`` (diagnostic mode)."""
    if not delta > 0:
        raise ModelError(f"delta must be positive, got {delta}")
    eps = 1.0 - float(np.max(model.kernel.jump_mass(delta)))
    if eps <= WITNESS_EPS_FLOOR:
        raise NoWitnessError(
            f"every state jumps before delta={delta:g} with probability ~1; "
            "the regularity condition fails at this delta"
        )
    return RegularityWitness(delta=float(delta), epsilon_reg=eps, beta=model.beta)


def find_regularity_witness(model: Model, delta: float | None = None,
                            grid: Sequence[float] = DELTA_GRID) -> RegularityWitness:
    """Witness minimizing gamma over a log-spaced grid of delta in (1e-4, 1/2].

    Passing ``delta`` skips the search and evaluates that single candidate.
    """
    if delta is not None:
        return witness_at(model, delta)
    best: RegularityWitness | None = None
    for d in grid:
        eps = 1.0 - float(np.max(model.kernel.jump_mass(float(d))))
        if eps <= WITNESS_EPS_FLOOR:
            continue
        w = RegularityWitness(delta=float(d), epsilon_reg=min(eps, 1.0), beta=model.beta)
        if best is None or w.gamma < best.gamma:
            best = w
    if best is None:
        raise NoWitnessError(
            "no delta in (1e-4, 1/2] leaves positive probability of no jump; "
            "the kernel violates the regularity condition numerically"
        )
    return best
