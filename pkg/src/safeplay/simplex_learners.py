"""Bandit learners over the simplex: importance-weighted mirror descent and
the phased scheme that mixes it with a trusted comparator strategy.

The phased learner plays alpha * inner + (1 - alpha) * comparator and doubles
alpha whenever the comparator looks bad under the estimated costs accumulated
since the current phase began.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .simplex import SIMPLEX_TOL, min_entry, mix, uniform, validate_simplex


def pow2_ceil(x: float) -> float:
    """Smallest power of two >= x (x > 0)."""
    if x <= 0:
        raise ValueError("pow2_ceil needs a positive argument")
    return float(2.0 ** math.ceil(math.log2(x)))


def importance_estimate(action: int, cost: float, strategy: np.ndarray) -> np.ndarray:
    """Unbiased estimate of the full cost vector from one bandit observation."""
    strategy = np.asarray(strategy, dtype=float)
    if not 0.0 <= cost <= 1.0 + 1e-12:
        raise ValueError(f"observed cost {cost} outside [0, 1]")
    p = float(strategy[action])
    if p <= 0.0:
        raise ValueError("played action has zero probability; sampling and feedback disagree")
    est = np.zeros_like(strategy)
    est[action] = cost / p
    return est


def omd_kl_step(inner: np.ndarray, est: np.ndarray, rate: float) -> np.ndarray:
    """One mirror-descent step with KL regularizer, in closed form.

    out[a] is proportional to inner[a] * exp(-rate * est[a]). The maximum
    exponent is subtracted before exponentiating so that large importance
    weights cannot overflow.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    inner = np.asarray(inner, dtype=float)
    est = np.asarray(est, dtype=float)
    if np.any(inner <= 0.0):
        raise ValueError("inner iterate must be strictly positive")
    z = -rate * est
    z -= z.max()
    w = inner * np.exp(z)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise FloatingPointError("mirror-descent weights are not finite")
    return w / total


@dataclass(frozen=True)
class NfgHyperparams:
    """Round count, comparator margin, and the derived tuning constants.

    `regret_bound` (R) is always an exact power of two; phases then keep
    alpha <= 1/2 until the final phase, which the estimator bound relies on.
    """

    rounds: int
    delta: float
    regret_bound: float
    eta: float
    tau: float

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must be in (0, 1]")
        if self.eta <= 0 or self.tau <= 0:
            raise ValueError("learning rates must be positive")
        r = self.regret_bound
        if r < 1 or 2.0 ** round(math.log2(r)) != r:
            raise ValueError("regret_bound must be a power of two >= 1")

    @classmethod
    def from_theory(cls, rounds: int, delta: float, n_actions: int) -> "NfgHyperparams":
        log_a = math.log(max(n_actions, 2))
        raw_bound = math.sqrt(2.0 * rounds * log_a) / delta
        return cls(
            rounds=rounds,
            delta=delta,
            regret_bound=pow2_ceil(raw_bound),
            eta=math.sqrt(delta**2 * log_a / (2.0 * rounds)),
            tau=math.sqrt(2.0 * log_a / (n_actions * rounds)),
        )

    @property
    def max_phases(self) -> int:
        return 1 + math.ceil(math.log2(self.regret_bound))


@dataclass
class PhasedState:
    """Mutable phase bookkeeping: phase index, mixing weight, per-phase sums of
    the estimated costs, and the inner mirror-descent iterate."""

    phase: int
    alpha: float
    start: int
    inner: np.ndarray
    cum_est: np.ndarray
    cum_est_comp: float
    cum_est_played: float
    round: int = 0
    closed_phase_regrets: list[float] = field(default_factory=list)

    @classmethod
    def fresh(cls, n_actions: int, regret_bound: float) -> "PhasedState":
        return cls(
            phase=1,
            alpha=min(1.0 / regret_bound, 1.0),
            start=1,
            inner=uniform(n_actions),
            cum_est=np.zeros(n_actions),
            cum_est_comp=0.0,
            cum_est_played=0.0,
        )

    def phase_est_regret(self) -> float:
        """Worst-case estimated regret accumulated in the current phase."""
        best, _ = min_entry(self.cum_est)
        return self.cum_est_played - best


def phase_trigger_nfg(state: PhasedState, regret_bound: float) -> bool:
    """True iff the comparator trails the best estimated response by more than
    2R within the current phase and the final phase has not started."""
    if state.alpha >= 1.0:
        return False
    best, _ = min_entry(state.cum_est)
    return state.cum_est_comp - best > 2.0 * regret_bound


def emitted_strategy(state: PhasedState, comparator: np.ndarray) -> np.ndarray:
    return mix(state.alpha, state.inner, comparator)


def phased_round_nfg(
    state: PhasedState,
    hyper: NfgHyperparams,
    comparator: np.ndarray,
    action: int,
    cost: float,
) -> tuple[PhasedState, np.ndarray]:
    """Consume one bandit observation for the strategy the state just emitted;
    return the state and the strategy to play next round.

    The trigger is checked after folding round t's estimate into the phase
    sums, so the sums run over start..t inclusive.
    """
    played = emitted_strategy(state, comparator)
    est = importance_estimate(action, cost, played)
    state.round += 1
    state.cum_est = state.cum_est + est
    state.cum_est_comp += float(est @ comparator)
    state.cum_est_played += float(est @ played)  # equals the observed cost

    if phase_trigger_nfg(state, hyper.regret_bound):
        state.closed_phase_regrets.append(state.phase_est_regret())
        state.phase += 1
        state.start = state.round + 1
        state.inner = uniform(len(comparator))
        state.cum_est = np.zeros(len(comparator))
        state.cum_est_comp = 0.0
        state.cum_est_played = 0.0
        state.alpha = min(2.0 ** (state.phase - 1) / hyper.regret_bound, 1.0)
    else:
        rate = hyper.eta if state.alpha < 1.0 else hyper.tau
        state.inner = omd_kl_step(state.inner, est, rate)
    return state, emitted_strategy(state, comparator)


class PhasedAggressionNfg:
    """Harness-facing wrapper around the phased round function.

    Tracks the telemetry the experiments assert on: per-phase worst-case
    estimated regret, the largest estimator entry seen while alpha <= 1/2,
    and the phase count.
    """

    def __init__(self, hyper: NfgHyperparams, comparator: np.ndarray):
        validate_simplex(comparator)
        if float(np.min(comparator)) < hyper.delta - SIMPLEX_TOL:
            raise ValueError("comparator puts less than delta on some action")
        self.hyper = hyper
        self.comparator = np.asarray(comparator, dtype=float)
        self.state = PhasedState.fresh(len(comparator), hyper.regret_bound)
        self._next = emitted_strategy(self.state, self.comparator)
        self.max_est_nonfinal = 0.0

    def play(self) -> np.ndarray:
        return self._next

    def observe(self, action: int, cost: float) -> None:
        if self.state.alpha <= 0.5:
            self.max_est_nonfinal = max(
                self.max_est_nonfinal, cost / float(self._next[action])
            )
        _, self._next = phased_round_nfg(
            self.state, self.hyper, self.comparator, action, cost
        )

    @property
    def phase_est_regrets(self) -> list[float]:
        """Estimated worst-case regret per phase, open phase included."""
        return self.state.closed_phase_regrets + [self.state.phase_est_regret()]

    @property
    def phase(self) -> int:
        return self.state.phase

    @property
    def alpha(self) -> float:
        return self.state.alpha


class Exp3Nfg:
    """Importance-weighted mirror descent with no comparator (textbook Exp3)."""

    phase = 0
    alpha = 1.0

    def __init__(self, n_actions: int, rounds: int, rate: float | None = None):
        self.n_actions = n_actions
        self.rate = rate if rate is not None else math.sqrt(
            2.0 * math.log(max(n_actions, 2)) / (n_actions * rounds)
        )
        self.inner = uniform(n_actions)

    def play(self) -> np.ndarray:
        return self.inner

    def observe(self, action: int, cost: float) -> None:
        est = importance_estimate(action, cost, self.inner)
        self.inner = omd_kl_step(self.inner, est, self.rate)


class FixedNfg:
    """Plays one fixed strategy every round (e.g. the min-max strategy)."""

    phase = 0
    alpha = 0.0

    def __init__(self, strategy: np.ndarray):
        validate_simplex(strategy)
        self.strategy = np.asarray(strategy, dtype=float)

    def play(self) -> np.ndarray:
        return self.strategy

    def observe(self, action: int, cost: float) -> None:
        pass


def restrict_comparator(comparator: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Drop zero-probability actions; return (kept indices, restricted
    comparator, margin delta). Mirrors the treeplex support restriction."""
    comparator = np.asarray(comparator, dtype=float)
    validate_simplex(comparator)
    keep = np.flatnonzero(comparator > 0.0)
    restricted = comparator[keep]
    return keep, restricted, float(restricted.min())
