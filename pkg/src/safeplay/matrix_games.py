"""Normal-form zero-sum games: cost matrices, values, and equilibrium solving.

The row player (Alice) minimizes; the column player (Bob) maximizes. Raw
entries live in [-1, 1]; learners consume the affinely rescaled matrix
(1 + raw) / 2 whose entries are costs in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simplex import uniform, validate_simplex


class GameMatrix:
    """A x B cost matrix for the row player, raw entries in [-1, 1]."""

    def __init__(self, raw):
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
            raise ValueError("game matrix must be 2-d and nonempty")
        if not np.all(np.isfinite(raw)):
            raise ValueError("game matrix has non-finite entries")
        if raw.min() < -1.0 - 1e-12 or raw.max() > 1.0 + 1e-12:
            raise ValueError("raw entries must lie in [-1, 1]")
        self.raw = raw
        self.rescaled = (1.0 + raw) / 2.0

    @property
    def n_rows(self) -> int:
        return self.raw.shape[0]

    @property
    def n_cols(self) -> int:
        return self.raw.shape[1]

    def cost_column(self, bob_action: int) -> np.ndarray:
        """Alice's rescaled cost vector when Bob plays `bob_action`."""
        if not 0 <= bob_action < self.n_cols:
            raise IndexError(f"bob action {bob_action} out of range")
        return self.rescaled[:, bob_action].copy()

    def expected_value(self, mu: np.ndarray, nu: np.ndarray) -> float:
        """mu^T U nu on the raw matrix."""
        mu = np.asarray(mu, dtype=float)
        nu = np.asarray(nu, dtype=float)
        if mu.shape != (self.n_rows,) or nu.shape != (self.n_cols,):
            raise ValueError("strategy dimensions do not match the matrix")
        return float(mu @ self.raw @ nu)


def load_matrix_text(text: str) -> GameMatrix:
    """Parse the plain-text format: first line "A B", then A rows of B entries."""
    lines = [ln for ln in (ln.strip() for ln in text.splitlines()) if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty game matrix file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError("first line must be 'A B'")
    n_rows, n_cols = int(header[0]), int(header[1])
    if len(lines) - 1 != n_rows:
        raise ValueError(f"expected {n_rows} matrix rows, found {len(lines) - 1}")
    rows = []
    for ln in lines[1:]:
        row = [float(v) for v in ln.split()]
        if len(row) != n_cols:
            raise ValueError(f"expected {n_cols} entries per row, got {len(row)}")
        rows.append(row)
    return GameMatrix(rows)


def load_matrix(path: str) -> GameMatrix:
    with open(path) as fh:
        return load_matrix_text(fh.read())


def exploitability(game: GameMatrix, mu: np.ndarray, nu: np.ndarray) -> float:
    """Certified gap via exact best responses on the raw matrix."""
    validate_simplex(mu)
    validate_simplex(nu)
    value = game.expected_value(mu, nu)
    bob_best = float(np.max(mu @ game.raw))
    alice_best = float(np.min(game.raw @ nu))
    return max(bob_best - value, value - alice_best)


@dataclass
class NfgEquilibrium:
    alice: np.ndarray
    bob: np.ndarray
    value: float
    exploitability: float
    iterations: int


class SolverBudgetError(RuntimeError):
    """Raised when certification fails within the iteration budget."""

    def __init__(self, gap: float, budget: int):
        super().__init__(f"no certified solution within {budget} iterates; achieved gap {gap:.3g}")
        self.gap = gap
        self.budget = budget


def _mw(weights: np.ndarray, costs: np.ndarray, rate: float) -> np.ndarray:
    z = -rate * costs
    z -= z.max()
    w = weights * np.exp(z)
    return w / w.sum()


def solve_minmax(
    game: GameMatrix,
    epsilon: float,
    budget: int = 1_000_000,
    certify_every: int = 1000,
    rate: float = 0.25,
) -> NfgEquilibrium:
    """Min-max pair by self-play of two multiplicative-weights learners.

    Both sides run the optimistic variant (the update is applied once with the
    current cost to the base iterate and once more as a prediction for the
    played iterate), which makes the averaged strategies converge fast enough
    to certify at desk scale. Exploitability of the running averages is
    recomputed from exact best responses every `certify_every` iterates; the
    solver's own telemetry is never trusted.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n_rows, n_cols = game.n_rows, game.n_cols
    mat = game.rescaled

    base_mu, base_nu = uniform(n_rows), uniform(n_cols)
    play_mu, play_nu = base_mu.copy(), base_nu.copy()
    sum_mu, sum_nu = np.zeros(n_rows), np.zeros(n_cols)

    best: tuple[float, np.ndarray, np.ndarray, int] | None = None
    for it in range(1, budget + 1):
        sum_mu += play_mu
        sum_nu += play_nu
        cost_mu = mat @ play_nu
        cost_nu = -(play_mu @ mat)  # Bob maximizes Alice's cost
        base_mu = _mw(base_mu, cost_mu, rate)
        base_nu = _mw(base_nu, cost_nu, rate)
        play_mu = _mw(base_mu, cost_mu, rate)
        play_nu = _mw(base_nu, cost_nu, rate)

        if it % certify_every == 0 or it == budget:
            avg_mu, avg_nu = sum_mu / it, sum_nu / it
            gap = exploitability(game, avg_mu, avg_nu)
            if best is None or gap < best[0]:
                best = (gap, avg_mu, avg_nu, it)
            if gap <= epsilon:
                avg_mu, avg_nu, gap = _snap_rational(game, avg_mu, avg_nu, gap)
                value = game.expected_value(avg_mu, avg_nu)
                return NfgEquilibrium(avg_mu, avg_nu, value, gap, it)

    assert best is not None
    raise SolverBudgetError(best[0], budget)


def _snap_rational(game: GameMatrix, mu: np.ndarray, nu: np.ndarray, gap: float,
                   max_denominator: int = 24):
    """Replace the certified pair by nearby small rationals when that does not
    hurt the certificate (it usually makes it exact)."""
    from fractions import Fraction

    def snap(vec):
        fracs = [Fraction(float(v)).limit_denominator(max_denominator) for v in vec]
        fracs[int(np.argmax(vec))] += 1 - sum(fracs)
        if any(f < 0 for f in fracs):
            return None
        return np.array([float(f) for f in fracs])

    s_mu, s_nu = snap(mu), snap(nu)
    if s_mu is None or s_nu is None:
        return mu, nu, gap
    s_gap = exploitability(game, s_mu, s_nu)
    if s_gap <= max(gap, 1e-12):
        return s_mu, s_nu, s_gap
    return mu, nu, gap
