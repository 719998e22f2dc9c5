"""Bandit learners over the treeplex.

The mirror-descent updates come in two flavors, matching the two divergences
the phased scheme needs: the plain dilated entropy (used while the comparator
still carries weight) and its balanced variant (used in the final phase,
where the exploration burden is on the learner alone). Both admit closed
forms that touch only the infosets visited by the sampled trajectory; the
normalizers Z_h are accumulated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .efg import StageObservation
from .simplex_learners import pow2_ceil
from .treeplex import (
    FLOW_TOL,
    TreeIndex,
    balanced_weights,
    best_response_value,
    policy_to_weights,
    uniform_policy,
    validate_weights,
)


@dataclass(frozen=True)
class EfgHyperparams:
    """Tuning constants for treeplex learners; `regret_bound` (R) is always a
    power of two so alpha <= 1/2 holds in every non-final phase."""

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
    def from_theory(cls, rounds: int, delta: float, n_infosets: int,
                    n_actions: int, horizon: int) -> "EfgHyperparams":
        log_a = math.log(max(n_actions, 2))
        x, h, t = n_infosets, horizon, rounds
        return cls(
            rounds=t,
            delta=delta,
            regret_bound=pow2_ceil(math.sqrt(8.0 * x * h**3 * log_a * t) / delta),
            eta=math.sqrt(delta**2 * x * log_a / (8.0 * h**2 * t)),
            tau=math.sqrt(x * n_actions * log_a / (h**3 * t)),
        )

    @classmethod
    def from_practical(cls, rounds: int, delta: float,
                       bound_scale: float = 0.5) -> "EfgHyperparams":
        """Experiment-grade constants: R on the order of sqrt(T) and a flat
        1/sqrt(T) learning rate for both divergences. The theory constants
        make the trigger threshold so large that no phase can end at desk
        scale, so reproducing the exploitation behavior needs this profile."""
        rate = 1.0 / math.sqrt(rounds)
        return cls(
            rounds=rounds,
            delta=delta,
            regret_bound=pow2_ceil(max(1.0, bound_scale * math.sqrt(rounds))),
            eta=rate,
            tau=rate,
        )

    @property
    def max_phases(self) -> int:
        return 1 + math.ceil(math.log2(self.regret_bound))


@dataclass
class SparseEstimate:
    """Importance-weighted cost estimate supported on one trajectory."""

    infosets: list[int]      # local infoset per stage
    actions: list[int]
    pairs: list[int]
    values: list[float]      # rescaled cost / realization weight

    @property
    def max_value(self) -> float:
        return max(self.values)


def trajectory_estimate(index: TreeIndex, view: list[StageObservation],
                        emitted: np.ndarray) -> SparseEstimate:
    """Divide each observed stage cost by the emitted realization weight of
    the visited pair. Zero weight on a visited pair means sampling and
    feedback disagree, which is a hard error."""
    infosets, actions, pairs, values = [], [], [], []
    for obs in view:
        x = index.index_of_orig.get(int(obs.infoset))
        if x is None:
            raise KeyError(f"visited infoset {obs.infoset} is outside the learner's tree")
        pair = int(index.pair_of[x, obs.action])
        if pair < 0:
            raise KeyError(f"visited action {obs.action} is pruned at infoset {obs.infoset}")
        w = float(emitted[pair])
        if w <= 0.0:
            raise ValueError(f"visited pair ({obs.infoset},{obs.action}) has zero weight")
        infosets.append(x)
        actions.append(int(obs.action))
        pairs.append(pair)
        values.append(float(obs.cost) / w)
    return SparseEstimate(infosets, actions, pairs, values)


def dilated_omd_step(index: TreeIndex, policy: np.ndarray, est: SparseEstimate,
                     rate: float) -> tuple[np.ndarray, list[float]]:
    """Closed-form dilated-entropy mirror-descent step for a trajectory-sparse
    estimate. Only visited rows change:

        pi'(a|x_h) = pi(a|x_h) * exp(1{a=a_h} (-eta c_h + log Z_{h+1}) - log Z_h),
        Z_h = 1 - pi(a_h|x_h) + pi(a_h|x_h) exp(-eta c_h + log Z_{h+1}),

    with Z_{H+1} = 1. Returns the new policy and [Z_1..Z_H] for diagnostics.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    out = policy.copy()
    log_z = 0.0
    z_by_stage = [0.0] * len(est.pairs)
    for h in range(len(est.pairs) - 1, -1, -1):
        x, a = est.infosets[h], est.actions[h]
        pi = float(policy[x, a])
        bump = math.exp(-rate * est.values[h] + log_z)
        z = 1.0 - pi + pi * bump
        if not z > 0.0:
            raise FloatingPointError(f"nonpositive normalizer at stage {h + 1}")
        row = policy[x] / z
        row[a] = policy[x, a] * bump / z
        out[x] = row
        log_z = math.log(z)
        z_by_stage[h] = z
    return out, z_by_stage


def balanced_omd_step(index: TreeIndex, policy: np.ndarray, est: SparseEstimate,
                      rate: float) -> tuple[np.ndarray, list[float], list[float]]:
    """Closed-form step for the balanced dilated entropy.

    The exponent at stage h scales the cost by the stage-h balanced strategy's
    weight at the visited pair and carries log Z_{h+1} weighted by the ratio
    of consecutive balanced weights along the trajectory. Returns the new
    policy, [Z_1..Z_H], and the per-stage values Xi_h = log(Z_h) / beta_h.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    horizon = len(est.pairs)
    bal = [balanced_weights(index, h) for h in range(1, index.horizon + 1)]
    out = policy.copy()
    log_z = 0.0
    z_by_stage = [0.0] * horizon
    xi_by_stage = [0.0] * horizon
    for h in range(horizon - 1, -1, -1):
        x, a = est.infosets[h], est.actions[h]
        bal_here = float(bal[h][est.pairs[h]])
        exponent = -rate * bal_here * est.values[h]
        if h + 1 < horizon:
            bal_next = float(bal[h + 1][est.pairs[h + 1]])
            exponent += bal_here / bal_next * log_z
        pi = float(policy[x, a])
        bump = math.exp(exponent)
        z = 1.0 - pi + pi * bump
        if not z > 0.0:
            raise FloatingPointError(f"nonpositive normalizer at stage {h + 1}")
        row = policy[x] / z
        row[a] = policy[x, a] * bump / z
        out[x] = row
        log_z = math.log(z)
        z_by_stage[h] = z
        xi_by_stage[h] = log_z / (rate * bal_here)
    return out, z_by_stage, xi_by_stage


def dilated_omd_full(index: TreeIndex, policy: np.ndarray, costs: np.ndarray,
                     rate: float) -> np.ndarray:
    """Dilated-entropy step against a dense cost vector (full information).

    Bottom-up: each infoset's effective cost is its own cost plus the
    children's -log Z values; rows update multiplicatively under a
    log-sum-exp guard. Used by the self-play equilibrium solver.
    """
    out = policy.copy()
    neg_log_z = np.zeros(index.n_infosets)  # stores -log Z_x
    for h in range(index.horizon - 1, -1, -1):
        for x in index.by_stage[h]:
            avail = index.actions[x]
            eff = np.empty(len(avail))
            for i, a in enumerate(avail):
                pair = index.pair_of[x, a]
                eff[i] = -rate * costs[pair] - sum(neg_log_z[c] for c in index.children[pair])
            shift = eff.max()
            weights = policy[x, avail] * np.exp(eff - shift)
            total = weights.sum()
            out[x, avail] = weights / total
            neg_log_z[x] = -(shift + math.log(total))
    return out


class PhasedAggressionEfg:
    """Phased comparator mixing over a (possibly support-restricted) treeplex.

    Emits alpha * inner + (1 - alpha) * comparator; doubles alpha and restarts
    the inner learner whenever the comparator trails the best estimated
    response by more than 2R within the current phase. The final phase
    switches to the balanced divergence (rate tau) unless constructed with
    final_divergence="unbalanced", which reproduces the simplification used
    in the experiments.
    """

    def __init__(self, index: TreeIndex, hyper: EfgHyperparams,
                 comparator: np.ndarray, final_divergence: str = "balanced"):
        validate_weights(index, comparator)
        if float(comparator.min()) < hyper.delta - FLOW_TOL:
            raise ValueError("comparator weight below delta on its own support")
        if final_divergence not in ("balanced", "unbalanced"):
            raise ValueError("final_divergence must be 'balanced' or 'unbalanced'")
        self.index = index
        self.hyper = hyper
        self.comparator = np.asarray(comparator, dtype=float)
        self.final_divergence = final_divergence
        self.policy = uniform_policy(index)
        self.inner = policy_to_weights(index, self.policy)
        self.phase = 1
        self.alpha = min(1.0 / hyper.regret_bound, 1.0)
        self.cum_est = np.zeros(index.n_pairs)
        self.cum_est_played = 0.0
        self.round = 0
        self.closed_phase_regrets: list[float] = []
        self.max_est_nonfinal = 0.0
        self._emitted = self._mix()

    def _mix(self) -> np.ndarray:
        return self.alpha * self.inner + (1.0 - self.alpha) * self.comparator

    def play(self) -> np.ndarray:
        return self._emitted

    def _phase_est_regret(self) -> float:
        return self.cum_est_played - best_response_value(self.index, self.cum_est)

    def observe(self, view: list[StageObservation]) -> None:
        est = trajectory_estimate(self.index, view, self._emitted)
        if self.alpha <= 0.5:
            self.max_est_nonfinal = max(self.max_est_nonfinal, est.max_value)
        self.round += 1
        for pair, value in zip(est.pairs, est.values):
            self.cum_est[pair] += value
        self.cum_est_played += sum(obs.cost for obs in view)

        best = best_response_value(self.index, self.cum_est)
        gap = float(self.cum_est @ self.comparator) - best
        if gap > 2.0 * self.hyper.regret_bound and self.alpha < 1.0:
            self.closed_phase_regrets.append(self.cum_est_played - best)
            self.phase += 1
            self.policy = uniform_policy(self.index)
            self.inner = policy_to_weights(self.index, self.policy)
            self.cum_est = np.zeros(self.index.n_pairs)
            self.cum_est_played = 0.0
            self.alpha = min(2.0 ** (self.phase - 1) / self.hyper.regret_bound, 1.0)
        elif self.alpha < 1.0:
            self.policy, _ = dilated_omd_step(self.index, self.policy, est, self.hyper.eta)
            self.inner = policy_to_weights(self.index, self.policy)
        else:
            if self.final_divergence == "balanced":
                self.policy, _, _ = balanced_omd_step(self.index, self.policy, est, self.hyper.tau)
            else:
                self.policy, _ = dilated_omd_step(self.index, self.policy, est, self.hyper.tau)
            self.inner = policy_to_weights(self.index, self.policy)
        self._emitted = self._mix()

    @property
    def phase_est_regrets(self) -> list[float]:
        return self.closed_phase_regrets + [self._phase_est_regret()]


class OmdEfg:
    """Importance-weighted mirror descent with no comparator (the no-regret
    baseline). Runs on the full tree with uniform initialization."""

    phase = 0
    alpha = 1.0

    def __init__(self, index: TreeIndex, rate: float, divergence: str = "balanced"):
        if divergence not in ("balanced", "unbalanced"):
            raise ValueError("divergence must be 'balanced' or 'unbalanced'")
        self.index = index
        self.rate = rate
        self.divergence = divergence
        self.policy = uniform_policy(index)
        self.weights = policy_to_weights(index, self.policy)

    @classmethod
    def theory_rate(cls, rounds: int, n_infosets: int, n_actions: int, horizon: int) -> float:
        log_a = math.log(max(n_actions, 2))
        return math.sqrt(n_infosets * n_actions * log_a / (horizon**3 * rounds))

    def play(self) -> np.ndarray:
        return self.weights

    def observe(self, view: list[StageObservation]) -> None:
        est = trajectory_estimate(self.index, view, self.weights)
        if self.divergence == "balanced":
            self.policy, _, _ = balanced_omd_step(self.index, self.policy, est, self.rate)
        else:
            self.policy, _ = dilated_omd_step(self.index, self.policy, est, self.rate)
        self.weights = policy_to_weights(self.index, self.policy)


class FixedEfg:
    """Plays one fixed treeplex strategy every round."""

    phase = 0
    alpha = 0.0

    def __init__(self, index: TreeIndex, weights: np.ndarray):
        validate_weights(index, weights)
        self.index = index
        self.weights = np.asarray(weights, dtype=float)

    def play(self) -> np.ndarray:
        return self.weights

    def observe(self, view: list[StageObservation]) -> None:
        pass
