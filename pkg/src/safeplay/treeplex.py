"""Sequence-form strategy machinery for one player of an extensive-form game.

A TreeIndex describes the player's infoset tree: which actions exist at each
infoset and which (infoset, action) pair each deeper infoset hangs from.
Strategies come in two interchangeable forms:

- policy: dense (X, A) array of per-infoset action distributions (rows sum to
  one over the available actions, zeros elsewhere);
- weights: vector over (infoset, action) pairs of realization weights
  mu(x, a) satisfying the flow constraints sum_a mu(x, a) = mu(parent pair),
  with weight 1 flowing into each stage-1 infoset.

Pairs are enumerated infoset-major with actions ascending, so each infoset
owns a contiguous pair segment; the per-round operations below are reduceat
sweeps over those segments, one per stage.
"""

from __future__ import annotations

import numpy as np

FLOW_TOL = 1e-9


class TreeIndex:
    """Dense integer indexing of a player's infoset tree.

    `actions[x]` lists the available action labels at infoset x in ascending
    order (the full game uses all of range(n_actions); a support-restricted
    view fewer). `parent_infoset[x]` / `parent_action[x]` give the unique
    predecessor pair of a non-root infoset, -1 for stage-1 roots.
    `orig_id[x]` remembers the infoset's id in the tree this one was derived
    from, so trajectory views can be translated after a restriction.
    """

    def __init__(self, horizon, n_actions, stage, actions, parent_infoset,
                 parent_action, orig_id=None):
        self.horizon = int(horizon)
        self.n_actions = int(n_actions)
        self.stage = np.asarray(stage, dtype=int)
        self.n_infosets = len(self.stage)
        self.actions = [np.asarray(a, dtype=int) for a in actions]
        parent_infoset = np.asarray(parent_infoset, dtype=int)
        parent_action = np.asarray(parent_action, dtype=int)
        self.orig_id = (np.arange(self.n_infosets) if orig_id is None
                        else np.asarray(orig_id, dtype=int))
        self.index_of_orig = {int(o): i for i, o in enumerate(self.orig_id)}

        self.pair_of = np.full((self.n_infosets, self.n_actions), -1, dtype=int)
        self.row_start = np.zeros(self.n_infosets, dtype=int)
        self.row_size = np.zeros(self.n_infosets, dtype=int)
        xs, acts = [], []
        for x in range(self.n_infosets):
            avail = self.actions[x]
            if len(avail) == 0:
                raise ValueError(f"infoset {x} has no available actions")
            if avail.min() < 0 or avail.max() >= self.n_actions:
                raise ValueError(f"infoset {x} has out-of-range actions")
            if len(avail) > 1 and np.any(np.diff(avail) <= 0):
                raise ValueError(f"infoset {x} actions must be strictly ascending")
            self.row_start[x] = len(xs)
            self.row_size[x] = len(avail)
            for a in avail:
                self.pair_of[x, a] = len(xs)
                xs.append(x)
                acts.append(int(a))
        self.n_pairs = len(xs)
        self.x_of_pair = np.asarray(xs, dtype=int)
        self.a_of_pair = np.asarray(acts, dtype=int)

        self.parent_pair = np.full(self.n_infosets, -1, dtype=int)
        self.children: list[list[int]] = [[] for _ in range(self.n_pairs)]
        for x in range(self.n_infosets):
            px, pa = int(parent_infoset[x]), int(parent_action[x])
            if self.stage[x] == 1:
                if px != -1:
                    raise ValueError(f"stage-1 infoset {x} cannot have a parent")
                continue
            pair = int(self.pair_of[px, pa]) if 0 <= px < self.n_infosets else -1
            if pair < 0 or self.stage[px] != self.stage[x] - 1:
                raise ValueError(f"infoset {x} has an inconsistent parent pair")
            self.parent_pair[x] = pair
            self.children[pair].append(x)

        self.by_stage = [np.flatnonzero(self.stage == h) for h in range(1, self.horizon + 1)]
        self.roots = self.by_stage[0]
        if len(self.roots) == 0:
            raise ValueError("tree has no stage-1 infosets")
        # pair-level gather tables for the vectorized sweeps
        self.parent_pair_of_pair = self.parent_pair[self.x_of_pair]
        self.pairs_by_stage = [
            np.flatnonzero(np.isin(self.x_of_pair, xs)) for xs in self.by_stage
        ]
        self._nonroot = np.flatnonzero(self.parent_pair >= 0)
        self._balanced_cache: dict[int, np.ndarray] = {}

    def available_mask(self) -> np.ndarray:
        return self.pair_of >= 0

    def local_pair(self, orig_infoset: int, action: int) -> int:
        """Pair id for an (original infoset id, action); raises if pruned."""
        x = self.index_of_orig.get(int(orig_infoset))
        if x is None:
            raise KeyError(f"infoset {orig_infoset} is not part of this tree")
        pair = int(self.pair_of[x, action])
        if pair < 0:
            raise KeyError(f"action {action} unavailable at infoset {orig_infoset}")
        return pair


def uniform_policy(index: TreeIndex) -> np.ndarray:
    policy = np.zeros((index.n_infosets, index.n_actions))
    policy[index.x_of_pair, index.a_of_pair] = 1.0 / index.row_size[index.x_of_pair]
    return policy


def validate_policy(index: TreeIndex, policy: np.ndarray, tol: float = FLOW_TOL) -> None:
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (index.n_infosets, index.n_actions):
        raise ValueError("policy has the wrong shape")
    if not np.all(np.isfinite(policy)):
        raise ValueError("policy has non-finite entries")
    if np.any(policy[~index.available_mask()] != 0.0):
        raise ValueError("policy puts mass on unavailable actions")
    if np.any(policy < -tol):
        raise ValueError("policy has negative entries")
    sums = policy.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > tol):
        x = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"policy row {x} sums to {sums[x]}")


def policy_to_weights(index: TreeIndex, policy: np.ndarray) -> np.ndarray:
    """Realization weights as path products of the policy probabilities."""
    flat = policy[index.x_of_pair, index.a_of_pair]
    weights = np.empty(index.n_pairs)
    for h, pairs in enumerate(index.pairs_by_stage):
        if h == 0:
            weights[pairs] = flat[pairs]
        else:
            weights[pairs] = weights[index.parent_pair_of_pair[pairs]] * flat[pairs]
    return weights


def weights_to_policy(index: TreeIndex, weights: np.ndarray) -> np.ndarray:
    """Per-infoset normalization; zero-mass infosets get the uniform row."""
    sums = np.add.reduceat(weights, index.row_start)
    safe = sums[index.x_of_pair] > 0.0
    vals = np.where(safe, weights / np.where(sums[index.x_of_pair] > 0, sums[index.x_of_pair], 1.0),
                    1.0 / index.row_size[index.x_of_pair])
    policy = np.zeros((index.n_infosets, index.n_actions))
    policy[index.x_of_pair, index.a_of_pair] = vals
    return policy


def flow_residual(index: TreeIndex, weights: np.ndarray) -> float:
    """Largest violation of nonnegativity or flow conservation."""
    weights = np.asarray(weights, dtype=float)
    outflow = np.add.reduceat(weights, index.row_start)
    inflow = np.where(index.parent_pair < 0, 1.0,
                      weights[np.maximum(index.parent_pair, 0)])
    worst = float(np.max(np.abs(outflow - inflow)))
    return max(worst, float(max(0.0, -weights.min(initial=0.0))))


def validate_weights(index: TreeIndex, weights: np.ndarray, tol: float = FLOW_TOL) -> None:
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (index.n_pairs,):
        raise ValueError("weight vector has the wrong length")
    if not np.all(np.isfinite(weights)):
        raise ValueError("weights have non-finite entries")
    res = flow_residual(index, weights)
    if res > tol:
        raise ValueError(f"treeplex flow constraints violated by {res:.3g}")


def best_response_value(index: TreeIndex, costs: np.ndarray) -> float:
    """Minimum of <costs, mu> over the treeplex (value only, vectorized)."""
    costs = np.asarray(costs, dtype=float)
    value = np.zeros(index.n_infosets)
    childsum = np.zeros(index.n_pairs)
    for h in range(index.horizon - 1, -1, -1):
        xs = index.by_stage[h]
        if len(xs) == 0:
            continue
        cand = costs + childsum
        rowmin = np.minimum.reduceat(cand, index.row_start)
        value[xs] = rowmin[xs]
        nonroot = xs[index.parent_pair[xs] >= 0]
        if len(nonroot):
            np.add.at(childsum, index.parent_pair[nonroot], value[nonroot])
    return float(value[index.roots].sum())


def best_response(index: TreeIndex, costs: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Minimum of <costs, mu> over the treeplex by bottom-up dynamic
    programming; returns (value, minimizing policy, its weights).

    value(x) = min_a [costs(x, a) + sum of child values], ties to the lowest
    action; the total is the sum over stage-1 infosets.
    """
    costs = np.asarray(costs, dtype=float)
    if not np.all(np.isfinite(costs)):
        raise ValueError("cost vector has non-finite entries")
    value = np.zeros(index.n_infosets)
    policy = np.zeros((index.n_infosets, index.n_actions))
    for h in range(index.horizon - 1, -1, -1):
        for x in index.by_stage[h]:
            best_val, best_a = None, None
            for a in index.actions[x]:
                pair = index.pair_of[x, a]
                v = costs[pair] + sum(value[c] for c in index.children[pair])
                if best_val is None or v < best_val:
                    best_val, best_a = v, a
            value[x] = best_val
            policy[x, best_a] = 1.0
    total = float(value[index.roots].sum())
    return total, policy, policy_to_weights(index, policy)


def comparator_gap(index: TreeIndex, cum_costs: np.ndarray, comparator: np.ndarray) -> float:
    """max over mu of <cum_costs, comparator - mu>."""
    return float(cum_costs @ comparator) - best_response_value(index, cum_costs)


def balanced_policy(index: TreeIndex, target_stage: int) -> np.ndarray:
    """Stage-h exploration policy: before stage h, play each action with
    probability proportional to the number of stage-h infosets it can reach;
    from stage h on, play uniformly."""
    if not 1 <= target_stage <= index.horizon:
        raise ValueError("target stage out of range")
    counts = np.zeros(index.n_pairs)
    for x in index.by_stage[target_stage - 1]:
        pair = index.parent_pair[x]
        while pair >= 0:
            counts[pair] += 1.0
            pair = index.parent_pair[index.x_of_pair[pair]]
    policy = np.zeros((index.n_infosets, index.n_actions))
    for x in range(index.n_infosets):
        avail = index.actions[x]
        if index.stage[x] >= target_stage:
            policy[x, avail] = 1.0 / len(avail)
        else:
            row = counts[index.pair_of[x, avail]]
            total = row.sum()
            if total > 0.0:
                policy[x, avail] = row / total
            else:
                policy[x, avail] = 1.0 / len(avail)
    return policy


def balanced_weights(index: TreeIndex, target_stage: int) -> np.ndarray:
    """Realization weights of the stage-h balanced policy (cached)."""
    cached = index._balanced_cache.get(target_stage)
    if cached is None:
        cached = policy_to_weights(index, balanced_policy(index, target_stage))
        index._balanced_cache[target_stage] = cached
    return cached


def support_restriction(index: TreeIndex, comparator: np.ndarray
                        ) -> tuple[TreeIndex, np.ndarray, float]:
    """Remove pairs the comparator never plays, and everything below them.

    Returns the restricted tree, the comparator re-indexed onto it (weights
    are unchanged, so flow still holds exactly), and the margin delta =
    min surviving weight. Raises if a stage-1 infoset would lose all mass.
    """
    validate_weights(index, comparator)
    keep_pair = comparator > 0.0
    for x in index.roots:
        if not keep_pair[index.pair_of[x, index.actions[x]]].any():
            raise ValueError(f"comparator has zero mass at root infoset {x}")

    keep_x = np.zeros(index.n_infosets, dtype=bool)
    for h in range(index.horizon):
        for x in index.by_stage[h]:
            parent = index.parent_pair[x]
            keep_x[x] = parent < 0 or keep_pair[parent]

    new_ids = np.flatnonzero(keep_x)
    remap = {int(old): i for i, old in enumerate(new_ids)}
    stage, actions, par_x, par_a, orig = [], [], [], [], []
    for old in new_ids:
        stage.append(int(index.stage[old]))
        avail = [a for a in index.actions[old] if keep_pair[index.pair_of[old, a]]]
        actions.append(np.asarray(avail, dtype=int))
        parent = index.parent_pair[old]
        if parent < 0:
            par_x.append(-1)
            par_a.append(-1)
        else:
            par_x.append(remap[int(index.x_of_pair[parent])])
            par_a.append(int(index.a_of_pair[parent]))
        orig.append(int(index.orig_id[old]))
    restricted = TreeIndex(index.horizon, index.n_actions, stage, actions,
                           par_x, par_a, orig_id=orig)

    new_comp = np.zeros(restricted.n_pairs)
    for x_new, old in enumerate(new_ids):
        for a in restricted.actions[x_new]:
            new_comp[restricted.pair_of[x_new, a]] = comparator[index.pair_of[old, a]]
    delta = float(new_comp.min())
    return restricted, new_comp, delta


def prune_policy(index: TreeIndex, policy: np.ndarray, tol: float) -> np.ndarray:
    """Zero out action probabilities below `tol` and renormalize each row.
    A row whose entries all fall below tol keeps its largest action."""
    out = policy.copy()
    for x in range(index.n_infosets):
        avail = index.actions[x]
        row = out[x, avail]
        row[row < tol] = 0.0
        total = row.sum()
        if total <= 0.0:
            keep = int(np.argmax(policy[x, avail]))
            row[:] = 0.0
            row[keep] = 1.0
            total = 1.0
        out[x, avail] = row / total
    return out


def rationalize_policy(index: TreeIndex, policy: np.ndarray,
                       max_denominator: int = 24) -> np.ndarray | None:
    """Snap each row to nearby small-denominator rationals summing exactly
    to one; None if any row cannot be snapped consistently. Callers must
    re-certify the result before trusting it."""
    from fractions import Fraction

    out = np.zeros_like(policy)
    for x in range(index.n_infosets):
        avail = index.actions[x]
        fracs = [Fraction(float(policy[x, a])).limit_denominator(max_denominator)
                 for a in avail]
        total = sum(fracs)
        if total != 1:
            # absorb the rounding into the largest entry
            largest = max(range(len(avail)), key=lambda i: fracs[i])
            fracs[largest] += 1 - total
        if any(f < 0 for f in fracs):
            return None
        for a, f in zip(avail, fracs):
            out[x, a] = float(f)
    return out


def embed_policy(sub: TreeIndex, policy: np.ndarray, full: TreeIndex) -> np.ndarray:
    """Lift a restricted policy to the full tree: pruned actions get zero,
    infosets outside the restriction get the uniform row (they are
    unreachable under any strategy supported on the restriction)."""
    out = uniform_policy(full)
    for x_sub in range(sub.n_infosets):
        x_full = full.index_of_orig[int(sub.orig_id[x_sub])]
        out[x_full, :] = 0.0
        for a in sub.actions[x_sub]:
            out[x_full, a] = policy[x_sub, a]
    return out
