"""Probability vectors over a finite action set and the basic operations on them.

All strategies are plain float64 numpy arrays. Validation tolerance for the
sum-to-one constraint is 1e-9 throughout the package.
"""

from __future__ import annotations

import numpy as np

from .rng import RngStream

SIMPLEX_TOL = 1e-9


def uniform(n_actions: int) -> np.ndarray:
    return np.full(n_actions, 1.0 / n_actions)


def simplex_residual(probs: np.ndarray) -> float:
    """How far `probs` is from the simplex: max of sum error and negativity."""
    probs = np.asarray(probs, dtype=float)
    return max(abs(float(probs.sum()) - 1.0), float(max(0.0, -probs.min(initial=0.0))))


def validate_simplex(probs: np.ndarray, tol: float = SIMPLEX_TOL) -> None:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError("strategy must be a nonempty 1-d vector")
    if not np.all(np.isfinite(probs)):
        raise ValueError("strategy has non-finite entries")
    if simplex_residual(probs) > tol:
        raise ValueError(f"strategy violates simplex constraints by {simplex_residual(probs):.3g}")


def sample_action(probs: np.ndarray, rng: RngStream) -> int:
    """Draw one action by inverse CDF over the stored order (single uniform)."""
    validate_simplex(probs)
    u = rng.uniform()
    acc = 0.0
    last_positive = 0
    for i, p in enumerate(probs):
        if p > 0.0:
            last_positive = i
        acc += p
        if u < acc:
            return i
    # u landed in the rounding slack past the last cumulative step
    return last_positive


def mix(alpha: float, inner: np.ndarray, comparator: np.ndarray) -> np.ndarray:
    """Convex combination alpha*inner + (1-alpha)*comparator, alpha in (0, 1]."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    validate_simplex(inner)
    validate_simplex(comparator)
    return alpha * np.asarray(inner, dtype=float) + (1.0 - alpha) * np.asarray(comparator, dtype=float)


def min_entry(costs: np.ndarray) -> tuple[float, int]:
    """Smallest entry and its lowest-index position.

    This is the linear minimization over the simplex: max over mu of
    <q, mu_c - mu> equals <q, mu_c> minus the value returned here.
    """
    costs = np.asarray(costs, dtype=float)
    if not np.all(np.isfinite(costs)):
        raise ValueError("cost vector has non-finite entries")
    action = int(np.argmin(costs))
    return float(costs[action]), action
