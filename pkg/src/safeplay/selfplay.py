"""Equilibrium computation for extensive-form games by full-information
self-play of two dilated-entropy mirror-descent learners.

Both sides run the optimistic two-step variant, alternating, and average
their played strategies with quadratic weights. The averaged pair is
certified every `certify_every` iterates by exact best-response dynamic
programming on the raw costs; the loop's own numbers are never trusted.

`max_margin_equilibrium` additionally selects, among certified equilibria,
one whose support-restricted comparator margin delta is largest. Averaged
self-play tends to land in the interior of the equilibrium set, where the
margin is set by whichever flat direction the average happened to stop at;
the extreme points of the set usually do better. The selection walks there
greedily: drop the pair currently attaining the margin, re-solve the true
game restricted to the smaller support, and keep the move only if the result
still certifies and the margin grew. Solutions are snapped to small
rationals whenever that preserves the certificate. A larger delta directly
tightens every downstream tuning constant, which is why the selection is
worth the extra solves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .efg import ALICE, BOB, EfgSpec, exploitability
from .efg_learners import dilated_omd_full
from .matrix_games import SolverBudgetError
from .treeplex import (
    TreeIndex,
    embed_policy,
    policy_to_weights,
    prune_policy,
    rationalize_policy,
    support_restriction,
    uniform_policy,
    weights_to_policy,
)


@dataclass
class EfgEquilibrium:
    alice: np.ndarray          # treeplex weights on the full trees
    bob: np.ndarray
    value: float
    exploitability: float
    iterations: int

    def alice_policy(self, spec: EfgSpec) -> np.ndarray:
        return weights_to_policy(spec.alice, self.alice)

    def bob_policy(self, spec: EfgSpec) -> np.ndarray:
        return weights_to_policy(spec.bob, self.bob)


def _full_pair_map(sub: TreeIndex, full: TreeIndex) -> np.ndarray:
    """For each pair of `sub`, the corresponding pair id in `full`."""
    out = np.empty(sub.n_pairs, dtype=int)
    for p in range(sub.n_pairs):
        x_full = full.index_of_orig[int(sub.orig_id[sub.x_of_pair[p]])]
        out[p] = full.pair_of[x_full, sub.a_of_pair[p]]
    return out


def solve_efg(
    spec: EfgSpec,
    epsilon: float,
    budget: int = 1_000_000,
    certify_every: int = 500,
    rate: float = 2.0,
    trees: tuple[TreeIndex, TreeIndex] | None = None,
    bias: tuple[np.ndarray, np.ndarray] | None = None,
    max_iters: int | None = None,
) -> EfgEquilibrium:
    """Certified equilibrium of the (possibly restricted, possibly biased)
    self-play game.

    trees: optional support-restricted views to confine both players to.
    bias: optional per-pair cost offsets (in the trees' pair spaces); used to
        break ties within the equilibrium set. With a bias the certificate
        still measures the true game, so exploration runs should pass
        max_iters instead of waiting for certification.
    max_iters: run exactly this many iterates and return the average without
        requiring certification (informational gap attached).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    full_a, full_b = spec.alice, spec.bob
    atree = full_a if trees is None else trees[0]
    btree = full_b if trees is None else trees[1]
    restricted = trees is not None
    map_a = _full_pair_map(atree, full_a) if restricted else None
    map_b = _full_pair_map(btree, full_b) if restricted else None
    bias_a = bias[0] if bias is not None else None
    bias_b = bias[1] if bias is not None else None

    def full_weights(policy_a, policy_b):
        if not restricted:
            return (policy_to_weights(full_a, policy_a),
                    policy_to_weights(full_b, policy_b))
        return (policy_to_weights(full_a, embed_policy(atree, policy_a, full_a)),
                policy_to_weights(full_b, embed_policy(btree, policy_b, full_b)))

    def gather(vec, pair_map):
        return vec if pair_map is None else vec[pair_map]

    base_a, base_b = uniform_policy(atree), uniform_policy(btree)
    play_a, play_b = base_a.copy(), base_b.copy()
    sum_a = np.zeros(full_a.n_pairs)
    sum_b = np.zeros(full_b.n_pairs)
    total_weight = 0.0

    limit = max_iters if max_iters is not None else budget
    best: tuple[float, np.ndarray, np.ndarray, int] | None = None
    for it in range(1, limit + 1):
        w_a, w_b = full_weights(play_a, play_b)
        weight = float(it) ** 2
        sum_a += weight * w_a
        sum_b += weight * w_b
        total_weight += weight

        cost_a = gather(spec.cost_vector(ALICE, w_b, rescaled=True), map_a)
        if bias_a is not None:
            cost_a = cost_a + bias_a
        base_a = dilated_omd_full(atree, base_a, cost_a, rate)
        play_a = dilated_omd_full(atree, base_a, cost_a, rate)
        w_a, _ = full_weights(play_a, play_b)  # Bob answers the updated iterate
        cost_b = gather(spec.cost_vector(BOB, w_a, rescaled=True), map_b)
        if bias_b is not None:
            cost_b = cost_b + bias_b
        base_b = dilated_omd_full(btree, base_b, cost_b, rate)
        play_b = dilated_omd_full(btree, base_b, cost_b, rate)

        if max_iters is None and (it % certify_every == 0 or it == limit):
            avg_a, avg_b = sum_a / total_weight, sum_b / total_weight
            gap = exploitability(spec, avg_a, avg_b)
            if best is None or gap < best[0]:
                best = (gap, avg_a, avg_b, it)
            if gap <= epsilon:
                value = spec.expected_value(avg_a, avg_b)
                return EfgEquilibrium(avg_a, avg_b, value, gap, it)

    if max_iters is not None:
        avg_a, avg_b = sum_a / total_weight, sum_b / total_weight
        gap = exploitability(spec, avg_a, avg_b)
        value = spec.expected_value(avg_a, avg_b)
        return EfgEquilibrium(avg_a, avg_b, value, gap, limit)
    assert best is not None
    raise SolverBudgetError(best[0], budget)


@dataclass
class MarginEquilibrium:
    """A certified equilibrium pair together with the support-restricted
    comparator data for each player."""

    equilibrium: EfgEquilibrium
    alice_tree: TreeIndex
    alice_comparator: np.ndarray
    alice_delta: float
    bob_tree: TreeIndex
    bob_comparator: np.ndarray
    bob_delta: float

    @property
    def margin(self) -> float:
        return min(self.alice_delta, self.bob_delta)


def _restrict_both(spec: EfgSpec, eq: EfgEquilibrium, prune_tol: float,
                   canonicalize: Callable[[int, np.ndarray], np.ndarray] | None):
    out = []
    for player, weights in ((ALICE, eq.alice), (BOB, eq.bob)):
        full = spec.tree(player)
        policy = weights_to_policy(full, weights)
        if canonicalize is not None:
            policy = canonicalize(player, policy)
        policy = prune_policy(full, policy, prune_tol)
        out.append(support_restriction(full, policy_to_weights(full, policy)))
    return out  # [(tree, comparator, delta), (tree, comparator, delta)]


def _try_rationalize(spec: EfgSpec, eq: EfgEquilibrium, epsilon: float) -> EfgEquilibrium:
    """Snap both policies to small rationals if that keeps the certificate."""
    pol_a = rationalize_policy(spec.alice, eq.alice_policy(spec))
    pol_b = rationalize_policy(spec.bob, eq.bob_policy(spec))
    if pol_a is None or pol_b is None:
        return eq
    w_a = policy_to_weights(spec.alice, pol_a)
    w_b = policy_to_weights(spec.bob, pol_b)
    gap = exploitability(spec, w_a, w_b)
    if gap <= min(epsilon, max(eq.exploitability, 1e-12)):
        return EfgEquilibrium(w_a, w_b, spec.expected_value(w_a, w_b), gap, eq.iterations)
    return eq


def _drop_pair(index: TreeIndex, policy: np.ndarray, pair: int) -> np.ndarray | None:
    """Policy with one (infoset, action) zeroed and the row renormalized;
    None when the action was the row's only support."""
    x = int(index.x_of_pair[pair])
    a = int(index.a_of_pair[pair])
    out = policy.copy()
    out[x, a] = 0.0
    total = out[x].sum()
    if total <= 0.0:
        return None
    out[x] /= total
    return out


def max_margin_equilibrium(
    spec: EfgSpec,
    epsilon: float,
    prune_tol: float = 0.02,
    polish_iters: int = 3000,
    certify_every: int = 250,
    rate: float = 8.0,
    max_trials: int = 12,
    canonicalize: Callable[[int, np.ndarray], np.ndarray] | None = None,
) -> MarginEquilibrium:
    """Certified equilibrium chosen to greedily maximize the support
    restriction margin min(delta_alice, delta_bob); see the module docstring.

    Restricting a player can make parts of the opponent's tree unreachable
    during the polish, leaving the opponent's play there unconstrained, so a
    polished pair keeps the certified base equilibrium's rows at every
    infoset the pair cannot reach. Each combined pair must re-certify on the
    full game before it can be accepted.
    """
    from .efg import reachable_infosets

    base = solve_efg(spec, epsilon, budget=200_000, certify_every=certify_every, rate=rate)
    base = _try_rationalize(spec, base, epsilon)
    base_pol = (base.alice_policy(spec), base.bob_policy(spec))

    def candidate(eq: EfgEquilibrium) -> MarginEquilibrium:
        (at, ac, ad), (bt, bc, bd) = _restrict_both(spec, eq, prune_tol, canonicalize)
        return MarginEquilibrium(eq, at, ac, ad, bt, bc, bd)

    def polish(trees: tuple[TreeIndex, TreeIndex]) -> EfgEquilibrium | None:
        probe = solve_efg(spec, epsilon, rate=rate, trees=trees, max_iters=polish_iters)
        pol_a = weights_to_policy(spec.alice, probe.alice)
        pol_b = weights_to_policy(spec.bob, probe.bob)
        if canonicalize is not None:
            pol_a = canonicalize(ALICE, pol_a)
            pol_b = canonicalize(BOB, pol_b)
        # crisp zeros before the reachability test, so solver residue cannot
        # keep an unconverged off-path row alive through the combine
        pol_a = prune_policy(spec.alice, pol_a, prune_tol)
        pol_b = prune_policy(spec.bob, pol_b, prune_tol)
        mask_a, mask_b = reachable_infosets(spec, pol_a, pol_b)
        pol_a = np.where(mask_a[:, None], pol_a, base_pol[0])
        pol_b = np.where(mask_b[:, None], pol_b, base_pol[1])
        w_a = policy_to_weights(spec.alice, pol_a)
        w_b = policy_to_weights(spec.bob, pol_b)
        gap = exploitability(spec, w_a, w_b)
        eq = EfgEquilibrium(w_a, w_b, spec.expected_value(w_a, w_b), gap, probe.iterations)
        eq = _try_rationalize(spec, eq, epsilon)
        return eq if eq.exploitability <= epsilon else None

    best = candidate(base)

    def score(c: MarginEquilibrium) -> tuple[float, float]:
        return (c.margin, c.alice_delta + c.bob_delta)

    trials = 0
    improved = True
    while improved and trials < max_trials:
        improved = False
        # worst side first, then its smallest comparator weights
        sides = sorted(
            ((best.alice_delta, 0, best.alice_tree, best.alice_comparator),
             (best.bob_delta, 1, best.bob_tree, best.bob_comparator)),
            key=lambda t: t[0])
        for _, player, tree, comp in sides:
            accepted = False
            for pair in np.argsort(comp)[:2]:  # margin pair, then runner-up
                trials += 1
                dropped = _drop_pair(tree, weights_to_policy(tree, comp), int(pair))
                if dropped is None:
                    continue
                try:
                    sub, _, _ = support_restriction(tree, policy_to_weights(tree, dropped))
                    trees = ((sub, best.bob_tree) if player == ALICE
                             else (best.alice_tree, sub))
                    polished = polish(trees)
                except (SolverBudgetError, ValueError):
                    continue
                if polished is None:
                    continue
                cand = candidate(polished)
                if score(cand) > score(best):
                    best = cand
                    improved = True
                    accepted = True
                    break
            if accepted or trials >= max_trials:
                break
    return best
