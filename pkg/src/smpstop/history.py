"""Jump-epoch histories of the stopping process and of its decision process.

An SMP history up to epoch n is (i_0, t_1, i_1, ..., t_n, i_n); the decision
process additionally records the action a_k chosen at each epoch k < n:
(i_0, a_0, t_1, i_1, ..., a_{n-1}, t_n, i_n). States are integer positions;
the absorbing virtual state of the decision process is ``DELTA``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from smpstop.errors import NonEmbeddedHistoryError

DELTA = -1
CONTINUE = 0
STOP = 1
_ACTIONS = frozenset((CONTINUE, STOP))


@dataclass(frozen=True)
class SmpHistory:
    states: tuple[int, ...]
    sojourns: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(map(int, self.states)))
        object.__setattr__(self, "sojourns", tuple(map(float, self.sojourns)))
        if len(self.states) != len(self.sojourns) + 1:
            raise ValueError("an SMP history has exactly one more state than sojourns")
        if self.sojourns and min(self.sojourns) < 0:
            raise ValueError("sojourn times must be nonnegative")

    @classmethod
    def _unchecked(cls, states: tuple, sojourns: tuple) -> SmpHistory:
        # for histories derived from already-validated data
        h = object.__new__(cls)
        object.__setattr__(h, "states", states)
        object.__setattr__(h, "sojourns", sojourns)
        return h

    @property
    def n(self) -> int:
        """Index of the last epoch in the history."""
        return len(self.sojourns)

    def prefix(self, k: int) -> SmpHistory:
        return SmpHistory._unchecked(self.states[: k + 1], self.sojourns[:k])

    @classmethod
    def from_flat(cls, flat: Sequence) -> SmpHistory:
        if len(flat) % 2 != 1:
            raise ValueError("flat SMP history must have odd length (i_0, t_1, i_1, ...)")
        return cls(tuple(flat[0::2]), tuple(flat[1::2]))

    def to_flat(self) -> tuple:
        out: list = [self.states[0]]
        for t, s in zip(self.sojourns, self.states[1:]):
            out += [t, s]
        return tuple(out)


@dataclass(frozen=True)
class SmdpHistory:
    states: tuple[int, ...]
    actions: tuple[int, ...] = ()
    sojourns: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.sojourns)
        if len(self.states) != n + 1 or len(self.actions) != n:
            raise NonEmbeddedHistoryError(
                f"decision history needs n+1 states, n actions and n sojourns; got "
                f"{len(self.states)}, {len(self.actions)}, {n}"
            )
        if not _ACTIONS.issuperset(self.actions):
            raise NonEmbeddedHistoryError(f"actions must be 0 or 1, got {self.actions}")
        if self.sojourns and min(self.sojourns) < 0:
            raise NonEmbeddedHistoryError("sojourn times must be nonnegative")

    @classmethod
    def _unchecked(cls, states: tuple, actions: tuple, sojourns: tuple) -> SmdpHistory:
        h = object.__new__(cls)
        object.__setattr__(h, "states", states)
        object.__setattr__(h, "actions", actions)
        object.__setattr__(h, "sojourns", sojourns)
        return h

    @property
    def n(self) -> int:
        return len(self.sojourns)

    @classmethod
    def from_flat(cls, flat: Sequence) -> SmdpHistory:
        """Parse (i_0, a_0, t_1, i_1, ..., a_{n-1}, t_n, i_n)."""
        if len(flat) % 3 != 1:
            raise NonEmbeddedHistoryError(
                f"flat decision history must have length 3n+1, got {len(flat)}"
            )
        return cls(tuple(flat[0::3]), tuple(flat[1::3]), tuple(flat[2::3]))

    def to_flat(self) -> tuple:
        out: list = [self.states[0]]
        for a, t, s in zip(self.actions, self.sojourns, self.states[1:]):
            out += [a, t, s]
        return tuple(out)


def embed(history: SmpHistory) -> SmdpHistory:
    """M_n: insert the continue action at every epoch before n."""
    return SmdpHistory._unchecked(history.states, (CONTINUE,) * history.n, history.sojourns)


def strip(history: SmdpHistory) -> SmpHistory | None:
    """Inverse of ``embed``; None when the history is outside its image."""
    if STOP in history.actions or DELTA in history.states:
        return None
    return SmpHistory._unchecked(history.states, history.sojourns)
