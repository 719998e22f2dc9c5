"""Kuhn poker as a stage-structured game, plus its certified equilibrium.

Encoding. Each player antes one chip and is dealt one of {J, Q, K} without
replacement. Action 0 is passive (check/fold), action 1 aggressive (bet/call).
The game runs over two stages:

- stage 1: the first player picks check or bet (the second player also
  submits an action, which is ignored);
- stage 2: the second player answers (check/bet after a check, fold/call
  after a bet) while the first player simultaneously pre-commits the
  fold/call response used if the second player bets after a check. A
  pre-committed response is only consulted when that bet happens, so the
  strategy spaces match the classical sequential rules exactly.

Because tree structure requires states to remember both submitted actions,
ignored actions still split states (and the acting player's own infosets);
those infosets are flagged idle and carry no strategic content.

With `symmetrize=True` a fair coin inside the initial chance distribution
decides which player moves first, making the game literally symmetric (both
players share one infoset label space) with value zero. Costs are stored in
half-chips so they fit in [-1, 1]; `unit_scale=2` converts reported values
back to chips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .efg import EfgSpec, exploitability
from .selfplay import EfgEquilibrium, MarginEquilibrium, max_margin_equilibrium, solve_efg
from .treeplex import (
    TreeIndex,
    policy_to_weights,
    prune_policy,
    support_restriction,
    weights_to_policy,
)

CARDS = ("J", "Q", "K")
PASSIVE, AGGRESSIVE = 0, 1

# infoset kinds; "betting rows" (a fresh bet is available) are open/facing_check
KIND_OPEN = "open"                  # first player's stage-1 decision
KIND_RESPONSE = "response"          # first player's fold/call pre-commitment
KIND_FACING_CHECK = "facing_check"  # second player after a check
KIND_FACING_BET = "facing_bet"      # second player after a bet
KIND_IDLE_PRE = "idle_pre"          # second player's ignored stage-1 action
KIND_IDLE_BET = "idle_bet"          # first player's ignored stage-2 action after betting
BETTING_KINDS = (KIND_OPEN, KIND_FACING_CHECK)


@dataclass
class InfosetMeta:
    label: str
    kind: str
    card: int

    @property
    def idle(self) -> bool:
        return self.kind in (KIND_IDLE_PRE, KIND_IDLE_BET)


@dataclass
class KuhnGame:
    spec: EfgSpec
    symmetrized: bool
    alice_meta: list[InfosetMeta]
    bob_meta: list[InfosetMeta]

    def meta(self, player: int) -> list[InfosetMeta]:
        return self.alice_meta if player == 0 else self.bob_meta


def _first_player_chips(m1: int, m2: int, response: int, c_first: int, c_second: int) -> int:
    """Net chips for the first player given the moves and both cards."""
    showdown = 1 if c_first > c_second else -1
    if m1 == PASSIVE:
        if m2 == PASSIVE:
            return showdown          # check-check, pot 1
        if response == PASSIVE:
            return -1                # check-bet-fold
        return 2 * showdown          # check-bet-call
    if m2 == PASSIVE:
        return 1                     # bet-fold
    return 2 * showdown              # bet-call


def build_kuhn(symmetrize: bool = True) -> KuhnGame:
    roles = (0, 1) if symmetrize else (0,)  # role 0: Alice moves first
    deals = [(ca, cb) for ca in range(3) for cb in range(3) if ca != cb]

    # enumerate infosets for one player; labels are role-of-that-player based,
    # so in the symmetrized game both players share one label space
    def infoset_table() -> dict[str, int]:
        labels: dict[str, int] = {}

        def add(label):
            labels.setdefault(label, len(labels))

        for role in roles:
            for card in range(3):
                name = CARDS[card]
                if role == 0:
                    add(f"P1:{name}")
                    add(f"P1:{name}:chk")
                    add(f"P1:{name}:bet")
                else:
                    add(f"P2:{name}")
                    for own1 in (0, 1):
                        for m1 in (0, 1):
                            add(f"P2:{name}:i{own1}:m{m1}")
        return labels

    # Alice is first player in role 0; Bob is first player in role 1.
    # A player's label depends on their seat in the current role.
    def alice_seat(role):  # 1 = first player
        return 1 if role == 0 else 2

    a_labels = infoset_table()
    b_labels = infoset_table() if symmetrize else _second_player_table()

    states: list[tuple] = []        # stage-1: (role, ca, cb); stage-2: + (a1, b1)
    stage_of, x_map, y_map, p0 = [], [], [], []
    state_id: dict[tuple, int] = {}

    def seat_label(role, seat, card, stage, own1=None, m1=None):
        name = CARDS[card]
        if seat == 1:
            if stage == 1:
                return f"P1:{name}"
            return f"P1:{name}:chk" if m1 == PASSIVE else f"P1:{name}:bet"
        if stage == 1:
            return f"P2:{name}"
        return f"P2:{name}:i{own1}:m{m1}"

    # stage-1 states
    for role in roles:
        for ca, cb in deals:
            s = (role, ca, cb)
            state_id[s] = len(states)
            states.append(s)
            stage_of.append(1)
            p0.append(1.0 / (len(roles) * len(deals)))
            a_seat = alice_seat(role)
            x_map.append(a_labels[seat_label(role, a_seat, ca, 1)])
            y_map.append(b_labels[seat_label(role, 3 - a_seat, cb, 1)])
    # stage-2 states
    for role in roles:
        for ca, cb in deals:
            for a1 in (0, 1):
                for b1 in (0, 1):
                    s = (role, ca, cb, a1, b1)
                    state_id[s] = len(states)
                    states.append(s)
                    stage_of.append(2)
                    p0.append(0.0)
                    m1 = a1 if role == 0 else b1
                    a_seat = alice_seat(role)
                    a_own1, b_own1 = a1, b1
                    x_map.append(a_labels[seat_label(role, a_seat, ca, 2,
                                                     own1=a_own1, m1=m1)])
                    y_map.append(b_labels[seat_label(role, 3 - a_seat, cb, 2,
                                                     own1=b_own1, m1=m1)])

    n_states = len(states)
    cost_table = np.zeros((n_states, 2, 2))
    transitions = [None] * n_states
    for s, key in enumerate(states):
        if stage_of[s] == 1:
            role, ca, cb = key
            cell = [[state_id[(role, ca, cb, a1, b1)] for b1 in (0, 1)] for a1 in (0, 1)]
            transitions[s] = cell
        else:
            role, ca, cb, a1, b1 = key
            for a2 in (0, 1):
                for b2 in (0, 1):
                    if role == 0:
                        chips = _first_player_chips(a1, b2, a2, ca, cb)
                        alice_chips = chips
                    else:
                        chips = _first_player_chips(b1, a2, b2, cb, ca)
                        alice_chips = -chips
                    cost_table[s, a2, b2] = -alice_chips / 2.0  # cost, half-chips

    x_label_list = [None] * len(a_labels)
    for label, i in a_labels.items():
        x_label_list[i] = label
    y_label_list = [None] * len(b_labels)
    for label, i in b_labels.items():
        y_label_list[i] = label

    spec = EfgSpec(
        horizon=2,
        n_actions=2,
        n_opp_actions=2,
        stage_of=stage_of,
        x_map=x_map,
        y_map=y_map,
        p0=p0,
        transitions=transitions,
        mean_cost=cost_table,
        x_labels=x_label_list,
        y_labels=y_label_list,
        unit_scale=2.0,
    )
    report = spec.validate()
    if not report.ok:  # pragma: no cover - construction bug guard
        raise AssertionError(f"kuhn build failed validation:\n{report}")
    return KuhnGame(
        spec=spec,
        symmetrized=symmetrize,
        alice_meta=_meta_from_labels(x_label_list),
        bob_meta=_meta_from_labels(y_label_list),
    )


def _second_player_table() -> dict[str, int]:
    """Bob's infosets when he always moves second (unsymmetrized game)."""
    labels: dict[str, int] = {}
    for card in range(3):
        name = CARDS[card]
        labels[f"P2:{name}"] = len(labels)
        for own1 in (0, 1):
            for m1 in (0, 1):
                labels[f"P2:{name}:i{own1}:m{m1}"] = len(labels)
    return labels


def _meta_from_labels(labels: list[str]) -> list[InfosetMeta]:
    out = []
    for label in labels:
        parts = label.split(":")
        card = CARDS.index(parts[1])
        if parts[0] == "P1":
            if len(parts) == 2:
                kind = KIND_OPEN
            else:
                kind = KIND_RESPONSE if parts[2] == "chk" else KIND_IDLE_BET
        else:
            if len(parts) == 2:
                kind = KIND_IDLE_PRE
            else:
                kind = KIND_FACING_CHECK if parts[3] == "m0" else KIND_FACING_BET
        out.append(InfosetMeta(label=label, kind=kind, card=card))
    return out


def canonicalize_idle(game: KuhnGame, player: int, policy: np.ndarray) -> np.ndarray:
    """Point idle rows at action 0. Idle actions are payoff-irrelevant, so
    this changes nothing strategically, but it lets the support restriction
    prune the ignored branches instead of diluting the comparator margin."""
    index = game.spec.tree(player)
    out = policy.copy()
    for meta, x in zip(game.meta(player), range(index.n_infosets)):
        if meta.idle:
            out[x, :] = 0.0
            out[x, PASSIVE] = 1.0
    return out


def kuhn_minmax(game: KuhnGame, epsilon: float = 1e-3,
                budget: int = 1_000_000) -> EfgEquilibrium:
    """Certified equilibrium of the Kuhn spec with idle rows canonicalized.

    The gap is re-certified by exact best response after canonicalization;
    idle actions cannot change it, but the certificate is recomputed rather
    than argued.
    """
    eq = solve_efg(game.spec, epsilon, budget=budget, certify_every=250, rate=8.0)
    pol_a = canonicalize_idle(game, 0, weights_to_policy(game.spec.alice, eq.alice))
    pol_b = canonicalize_idle(game, 1, weights_to_policy(game.spec.bob, eq.bob))
    w_a = policy_to_weights(game.spec.alice, pol_a)
    w_b = policy_to_weights(game.spec.bob, pol_b)
    gap = exploitability(game.spec, w_a, w_b)
    value = game.spec.expected_value(w_a, w_b)
    return EfgEquilibrium(w_a, w_b, value, gap, eq.iterations)


def restricted_comparator(game: KuhnGame, player: int, eq_weights: np.ndarray,
                          prune_tol: float = 0.02):
    """Support-restricted comparator for one player from equilibrium weights.

    Probabilities below `prune_tol` are treated as solver residue and pruned
    before the restriction. Returns (restricted tree, comparator weights on
    it, margin delta).
    """
    index = game.spec.tree(player)
    policy = prune_policy(index, weights_to_policy(index, eq_weights), prune_tol)
    weights = policy_to_weights(index, policy)
    return support_restriction(index, weights)


def kuhn_solution(game: KuhnGame, epsilon: float = 1e-3,
                  prune_tol: float = 0.02) -> MarginEquilibrium:
    """Equilibrium plus support-restricted comparators for both players,
    selected to maximize the comparator margin (idle rows canonicalized so
    the ignored branches drop out of the restriction)."""
    return max_margin_equilibrium(
        game.spec, epsilon, prune_tol=prune_tol,
        canonicalize=lambda player, policy: canonicalize_idle(game, player, policy),
    )
