"""Concrete opponents and adversarial cost environments.

Kuhn opponents follow the experiment roster: the equilibrium itself, the
equilibrium with Jack betting rows forced to always-bet (BluffJ), the
deterministic card-threshold players (RaiseKQ, RaiseK), and the per-round
mixture of equilibrium and uniform play (RandMinMax). The lower-bound
environments implement the two-point construction behind the sqrt(T)
impossibility argument: one safe action at cost one half and one action
whose Bernoulli mean sits a gap of gamma / sqrt(T) away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .efg import EfgSpec
from .kuhn import AGGRESSIVE, BETTING_KINDS, PASSIVE, KuhnGame
from .matrix_games import GameMatrix
from .rng import RngStream
from .treeplex import uniform_policy, validate_policy


def rock_paper_scissors() -> GameMatrix:
    """Alice's cost: -1 when her action beats Bob's, +1 when it loses."""
    return GameMatrix([[0, 1, -1], [-1, 0, 1], [1, -1, 0]])


def matching_pennies() -> GameMatrix:
    return GameMatrix([[1, -1], [-1, 1]])


class KuhnOpponent:
    """Per-round policy generator for Bob on a Kuhn game.

    `kind` is one of minmax, bluffj, raisekq, raisek, randminmax (mixing
    probability `alpha` per round, not per action). The generator owns its
    RngStream; fixed kinds never draw from it.
    """

    KINDS = ("minmax", "bluffj", "raisekq", "raisek", "randminmax")

    def __init__(self, kind: str, game: KuhnGame, equilibrium_policy: np.ndarray,
                 rng: RngStream, alpha: float = 0.2):
        if kind not in self.KINDS:
            raise ValueError(f"unknown opponent kind {kind!r}")
        self.kind = kind
        self.game = game
        self.rng = rng
        self.alpha = float(alpha)
        index = game.spec.bob
        self._uniform = uniform_policy(index)
        self._equilibrium = equilibrium_policy.copy()
        self._fixed: np.ndarray | None = None
        if kind == "minmax":
            self._fixed = self._equilibrium
        elif kind == "bluffj":
            policy = equilibrium_policy.copy()
            for y, meta in enumerate(game.bob_meta):
                if meta.kind in BETTING_KINDS and meta.card == 0:  # Jack
                    policy[y, :] = 0.0
                    policy[y, AGGRESSIVE] = 1.0
            self._fixed = policy
        elif kind in ("raisekq", "raisek"):
            threshold = 1 if kind == "raisekq" else 2  # Q or better / K only
            policy = np.zeros_like(equilibrium_policy)
            for y, meta in enumerate(game.bob_meta):
                act = AGGRESSIVE if meta.card >= threshold else PASSIVE
                policy[y, act] = 1.0
            self._fixed = policy
        validate_policy(index, self._fixed if self._fixed is not None else self._equilibrium)

    def policy(self) -> np.ndarray:
        """The policy for the coming round."""
        if self.kind == "randminmax":
            if self.rng.uniform() < self.alpha:
                return self._uniform
            return self._equilibrium
        return self._fixed

    def observe(self, view) -> None:
        pass


@dataclass
class LowerBoundEnv:
    """Two-point stochastic cost environment over `n_actions` arms.

    The designated last action draws Bernoulli costs with mean
    1/2 + sign * gamma / sqrt(T); every other action costs exactly 1/2.
    The canonical comparator plays the designated action with probability
    delta. gamma defaults to 0.1 / sqrt(delta), capped so the Bernoulli
    parameter stays inside (0.01, 0.99).
    """

    delta: float
    rounds: int
    gamma: float | None = None
    sign: int = -1
    n_actions: int = 2

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0 / self.n_actions:
            raise ValueError("delta must be in (0, 1/A]")
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        if self.gamma is None:
            # default gap scale, capped so the parameter stays in (0.01, 0.99)
            self.gamma = min(0.1 / math.sqrt(self.delta),
                             0.48 * math.sqrt(self.rounds))
        p = self.bernoulli_parameter
        if not 0.01 < p < 0.99:
            raise ValueError(f"Bernoulli parameter {p} outside (0.01, 0.99)")

    @property
    def designated(self) -> int:
        return self.n_actions - 1

    @property
    def gap(self) -> float:
        return self.gamma / math.sqrt(self.rounds)

    @property
    def bernoulli_parameter(self) -> float:
        return 0.5 + self.sign * self.gap

    @property
    def mean_costs(self) -> np.ndarray:
        costs = np.full(self.n_actions, 0.5)
        costs[self.designated] = self.bernoulli_parameter
        return costs

    @property
    def comparator(self) -> np.ndarray:
        comp = np.full(self.n_actions, (1.0 - self.delta) / (self.n_actions - 1))
        comp[self.designated] = self.delta
        return comp

    def draw(self, rng: RngStream) -> np.ndarray:
        """One full cost vector; the learner may only see one entry."""
        costs = np.full(self.n_actions, 0.5)
        costs[self.designated] = 1.0 if rng.uniform() < self.bernoulli_parameter else 0.0
        return costs


@dataclass
class BernoulliRewardEnv:
    """I.i.d. Bernoulli cost environment given by per-action reward means."""

    reward_means: np.ndarray

    def __post_init__(self):
        self.reward_means = np.asarray(self.reward_means, dtype=float)
        if np.any(self.reward_means < 0) or np.any(self.reward_means > 1):
            raise ValueError("reward means must lie in [0, 1]")

    @property
    def n_actions(self) -> int:
        return len(self.reward_means)

    @property
    def mean_costs(self) -> np.ndarray:
        return 1.0 - self.reward_means

    def draw(self, rng: RngStream) -> np.ndarray:
        rewards = np.array([1.0 if rng.uniform() < m else 0.0 for m in self.reward_means])
        return 1.0 - rewards


def lower_bound_env_efg(n_actions: int, horizon: int, delta: float, rounds: int,
                        gamma: float | None = None, sign: int = -1,
                        ) -> tuple[EfgSpec, tuple[int, int], np.ndarray]:
    """A-ary deterministic tree where every stage costs the maximum except at
    one designated leaf pair, which draws the two-point lower-bound costs.

    Returns (spec, (designated infoset, action), comparator policy). The
    comparator plays the last action with probability delta**(1/H) at every
    infoset, so its minimum realization weight is exactly delta, attained at
    the designated pair (requires delta <= A**-H).
    """
    if n_actions < 2 or horizon < 1:
        raise ValueError("need at least 2 actions and horizon 1")
    if n_actions**horizon > 4096:
        raise ValueError("tree size budget exceeded (A**H > 4096)")
    if delta > n_actions ** (-horizon) + 1e-12:
        raise ValueError("delta must be at most A**-H for a treeplex comparator")
    env = LowerBoundEnv(delta=delta, rounds=rounds, gamma=gamma, sign=sign,
                        n_actions=2)

    # states are action histories; one state per infoset (Alice), Bob inert
    states: list[tuple[int, ...]] = []
    ids: dict[tuple[int, ...], int] = {}
    for h in range(horizon):
        for hist in _histories(n_actions, h):
            ids[hist] = len(states)
            states.append(hist)
    n_states = len(states)
    stage_of = [len(s) + 1 for s in states]
    x_map = list(range(n_states))
    y_map = [len(s) for s in states]  # one Bob infoset per stage
    p0 = [0.0] * n_states
    p0[ids[()]] = 1.0

    transitions = []
    mean_cost = np.ones((n_states, n_actions, 1))
    noise = {}
    designated_state = ids[tuple([n_actions - 1] * (horizon - 1))]
    designated = (designated_state, n_actions - 1)
    # every state-action costs the maximum except at the designated leaf
    # state, which carries the two-armed environment: rescaled cost 1/2 on its
    # other actions and the two-point Bernoulli on the designated action
    # (raw 0 rescales to 1/2; raw {-1, +1} with mean 2p - 1 rescales to p).
    # At horizon 1 this is exactly the simplex lower-bound environment.
    mean_cost[designated_state, :, 0] = 0.0
    mean_cost[designated_state, n_actions - 1, 0] = 2.0 * env.bernoulli_parameter - 1.0
    noise[(designated_state, n_actions - 1, 0)] = (-1.0, 1.0)
    for s, hist in enumerate(states):
        if len(hist) == horizon - 1:
            transitions.append(None)
        else:
            transitions.append([[ids[hist + (a,)]] for a in range(n_actions)])

    spec = EfgSpec(
        horizon=horizon,
        n_actions=n_actions,
        n_opp_actions=1,
        stage_of=stage_of,
        x_map=x_map,
        y_map=y_map,
        p0=p0,
        transitions=transitions,
        mean_cost=mean_cost,
        noise=noise,
    )
    g = delta ** (1.0 / horizon)
    comparator = np.zeros((n_states, n_actions))
    comparator[:, :] = (1.0 - g) / (n_actions - 1)
    comparator[:, n_actions - 1] = g
    return spec, designated, comparator


def _histories(n_actions: int, length: int):
    if length == 0:
        yield ()
        return
    for prefix in _histories(n_actions, length - 1):
        for a in range(n_actions):
            yield prefix + (a,)
