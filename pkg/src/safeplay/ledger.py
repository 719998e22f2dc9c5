"""Regret accounting against a fixed comparator and the best action in hindsight."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .simplex import min_entry, validate_simplex


@dataclass
class RegretLedger:
    """Running sums needed for expected regret. The environment supplies the
    full true cost vector each round even though the learner saw one entry."""

    n_actions: int
    played_cost: float = 0.0
    comparator_cost: float = 0.0
    action_cost: np.ndarray = field(init=False)
    rounds: int = 0

    def __post_init__(self):
        self.action_cost = np.zeros(self.n_actions)

    def record(self, played: np.ndarray, comparator: np.ndarray, costs: np.ndarray) -> None:
        validate_simplex(played)
        validate_simplex(comparator)
        costs = np.asarray(costs, dtype=float)
        if costs.shape != (self.n_actions,):
            raise ValueError("cost vector has the wrong length")
        self.played_cost += float(played @ costs)
        self.comparator_cost += float(comparator @ costs)
        self.action_cost += costs
        self.rounds += 1

    @property
    def comparator_regret(self) -> float:
        return self.played_cost - self.comparator_cost

    @property
    def worst_case_regret(self) -> float:
        """Regret against the best fixed action in hindsight."""
        best, _ = min_entry(self.action_cost)
        return self.played_cost - best
