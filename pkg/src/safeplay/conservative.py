"""Conservative learner for stochastic rewards: starts at the comparator and
moves probability mass only when confidence boxes prove the move cannot hurt.

Each round solves max over mu in the simplex of min over m in the confidence
box of <mu - mu_t, m>. The inner minimum decomposes per coordinate (the box is
a product), so the problem is equivalent to the small linear program
maximize sum_a t_a subject to t_a <= (mu_a - mu_t_a) * lower_a and
t_a <= (mu_a - mu_t_a) * upper_a. That program has an exact combinatorial
solution: every action whose upper bound falls below the best lower bound
hands all of its mass to the action with the best lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .simplex import validate_simplex


def half_widths(counts: np.ndarray, rounds: int, n_actions: int, zeta: float) -> np.ndarray:
    """Confidence half-widths; infinite for actions never pulled."""
    counts = np.asarray(counts, dtype=float)
    width = np.full_like(counts, np.inf)
    pulled = counts > 0
    log_term = math.log(rounds**2 * n_actions / zeta)
    width[pulled] = 2.0 * np.sqrt(2.0 * log_term / counts[pulled])
    return width


def box_objective(candidate: np.ndarray, current: np.ndarray,
                  lower: np.ndarray, upper: np.ndarray) -> float:
    """min over the box of <candidate - current, m>, coordinate-decomposed."""
    diff = np.asarray(candidate, dtype=float) - np.asarray(current, dtype=float)
    total = 0.0
    for d, lo, hi in zip(diff, lower, upper):
        if d == 0.0:
            continue
        total += min(d * lo, d * hi)
    return total


def saddle_step(current: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Exact maximizer of the boxed saddle problem starting from `current`.

    Actions with an infinite box never move (any change there is worth -inf).
    Among the rest, mass flows from every action with upper < best lower into
    the lowest-index action attaining the best lower bound. The returned point
    achieves the linear program's optimum exactly; ties keep mass in place.
    """
    current = np.asarray(current, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    finite = np.isfinite(lower) & np.isfinite(upper)
    if not finite.any():
        return current.copy()
    best_lower = float(np.max(lower[finite]))
    receiver = int(np.flatnonzero(finite & (lower == best_lower))[0])
    out = current.copy()
    donors = finite & (upper < best_lower)
    donors[receiver] = False
    freed = float(out[donors].sum())
    if freed > 0.0:
        out[donors] = 0.0
        out[receiver] += freed
    return out


@dataclass
class ConfidenceState:
    """Counts, empirical means, and the current strategy of the conservative
    learner. Rewards live in [0, 1]; zeta is the confidence failure mass."""

    comparator: np.ndarray
    rounds: int
    zeta: float
    counts: np.ndarray = field(init=False)
    reward_sums: np.ndarray = field(init=False)
    strategy: np.ndarray = field(init=False)
    round: int = 0

    def __post_init__(self):
        validate_simplex(self.comparator)
        n = len(self.comparator)
        self.counts = np.zeros(n, dtype=int)
        self.reward_sums = np.zeros(n)
        self.strategy = np.asarray(self.comparator, dtype=float).copy()

    @property
    def n_actions(self) -> int:
        return len(self.comparator)

    def means(self) -> np.ndarray:
        out = np.zeros(self.n_actions)
        pulled = self.counts > 0
        out[pulled] = self.reward_sums[pulled] / self.counts[pulled]
        return out

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        width = half_widths(self.counts, self.rounds, self.n_actions, self.zeta)
        means = self.means()
        return means - width, means + width


def conservative_round(state: ConfidenceState, action: int, reward: float
                       ) -> tuple[ConfidenceState, np.ndarray]:
    """Fold in one (action, reward) observation and emit the next strategy."""
    if not 0.0 <= reward <= 1.0 + 1e-12:
        raise ValueError(f"reward {reward} outside [0, 1]")
    state.round += 1
    state.counts[action] += 1
    state.reward_sums[action] += reward
    lower, upper = state.bounds()
    state.strategy = saddle_step(state.strategy, lower, upper)
    return state, state.strategy


class ConservativeStochastic:
    """Harness-facing wrapper; observes rewards (1 - cost) of the played action."""

    phase = 0
    alpha = 1.0

    def __init__(self, comparator: np.ndarray, rounds: int, zeta: float | None = None):
        zeta = zeta if zeta is not None else 1.0 / (2.0 * rounds)
        self.state = ConfidenceState(np.asarray(comparator, dtype=float), rounds, zeta)

    def play(self) -> np.ndarray:
        return self.state.strategy

    def observe(self, action: int, cost: float) -> None:
        conservative_round(self.state, action, 1.0 - cost)
