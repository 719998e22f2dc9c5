"""Two-player zero-sum extensive-form game engine.

A game is a stage-structured tree of states: at every stage both players
submit an action, the state advances by the transition kernel, and the row
player (Alice) accrues the state-action cost. Each player observes only an
infoset label for the current state. Raw per-stage costs live in [-1, 1];
trajectory feedback hands each learner its own costs rescaled to [0, 1] via
(1 + u) / 2 (Alice) and (1 - u) / 2 (Bob).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream
from .treeplex import TreeIndex, best_response

ALICE, BOB = 0, 1


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)

    def __str__(self) -> str:  # pragma: no cover
        return "valid" if self.ok else "\n".join(self.violations)


@dataclass
class StageObservation:
    """One stage of a player's trajectory view: infoset, own action, own
    rescaled cost."""

    infoset: int
    action: int
    cost: float


class EfgSpec:
    """Stage-structured game description plus the derived index tables.

    transitions[s] is None for final-stage states, otherwise an (A, B) nested
    list whose entries are either a successor state id (deterministic) or a
    list of (state id, probability) pairs. `noise[(s, a, b)] = (lo, hi)`
    declares a two-point cost distribution on {lo, hi} whose mean is
    mean_cost[s, a, b]; costs are deterministic elsewhere.
    """

    def __init__(self, horizon, n_actions, n_opp_actions, stage_of, x_map, y_map,
                 p0, transitions, mean_cost, noise=None,
                 x_labels=None, y_labels=None, unit_scale=1.0):
        self.horizon = int(horizon)
        self.n_actions = int(n_actions)
        self.n_opp_actions = int(n_opp_actions)
        self.stage_of = np.asarray(stage_of, dtype=int)
        self.n_states = len(self.stage_of)
        self.x_map = np.asarray(x_map, dtype=int)
        self.y_map = np.asarray(y_map, dtype=int)
        self.p0 = np.asarray(p0, dtype=float)
        self.mean_cost = np.asarray(mean_cost, dtype=float)
        self.noise = dict(noise) if noise else {}
        self.x_labels = list(x_labels) if x_labels is not None else None
        self.y_labels = list(y_labels) if y_labels is not None else None
        self.unit_scale = float(unit_scale)

        # normalize transitions to parallel (ids, probs) arrays
        self._succ: list[list[list[tuple[np.ndarray, np.ndarray]]] | None] = []
        for s in range(self.n_states):
            entry = transitions[s]
            if entry is None:
                self._succ.append(None)
                continue
            rows = []
            for a in range(self.n_actions):
                cols = []
                for b in range(self.n_opp_actions):
                    cell = entry[a][b]
                    if isinstance(cell, (int, np.integer)):
                        cols.append((np.array([int(cell)]), np.array([1.0])))
                    else:
                        ids = np.array([int(c) for c, _ in cell])
                        probs = np.array([float(p) for _, p in cell])
                        cols.append((ids, probs))
                rows.append(cols)
            self._succ.append(rows)

        self._report: ValidationReport | None = None
        self._built = False

    # ---------------------------------------------------------------- counts
    @property
    def n_infosets(self) -> int:
        return int(self.x_map.max()) + 1

    @property
    def n_opp_infosets(self) -> int:
        return int(self.y_map.max()) + 1

    def infoset_map(self, player: int) -> np.ndarray:
        return self.x_map if player == ALICE else self.y_map

    def action_count(self, player: int) -> int:
        return self.n_actions if player == ALICE else self.n_opp_actions

    # ------------------------------------------------------------ validation
    def validate(self) -> ValidationReport:
        if self._report is not None:
            return self._report
        report = ValidationReport()
        self._check_shapes(report)
        parents = self._check_tree_structure(report)
        if parents is not None:
            self._parent = parents
            for player in (ALICE, BOB):
                self._check_perfect_recall(report, player, parents)
        self._report = report
        return report

    def _check_shapes(self, report: ValidationReport) -> None:
        if self.mean_cost.shape != (self.n_states, self.n_actions, self.n_opp_actions):
            report.add("mean_cost has the wrong shape")
            return
        if not np.all(np.isfinite(self.mean_cost)):
            report.add("mean_cost has non-finite entries")
        if self.mean_cost.min() < -1 - 1e-12 or self.mean_cost.max() > 1 + 1e-12:
            report.add("mean costs must lie in [-1, 1]")
        if self.stage_of.min() < 1 or self.stage_of.max() > self.horizon:
            report.add("state stages must lie in 1..H")
        if abs(self.p0.sum() - 1.0) > 1e-9 or self.p0.min() < 0:
            report.add("p0 is not a probability distribution")
        if np.any(self.p0[self.stage_of != 1] > 0):
            report.add("p0 puts mass on states beyond stage 1")
        for s in range(self.n_states):
            has_succ = self._succ[s] is not None
            if self.stage_of[s] == self.horizon:
                if has_succ:
                    report.add(f"final-stage state {s} has successors")
            elif not has_succ:
                report.add(f"state {s} at stage {self.stage_of[s]} has no successors")
            elif has_succ:
                for a in range(self.n_actions):
                    for b in range(self.n_opp_actions):
                        ids, probs = self._succ[s][a][b]
                        if abs(probs.sum() - 1.0) > 1e-9 or probs.min() < 0:
                            report.add(f"transition from ({s},{a},{b}) is not a distribution")

    def _check_tree_structure(self, report: ValidationReport):
        """Each state must be reachable through exactly one (state, a, b)."""
        parents: list[tuple[int, int, int] | None] = [None] * self.n_states
        seen = np.zeros(self.n_states, dtype=bool)
        ok = True
        for s in range(self.n_states):
            if self._succ[s] is None:
                continue
            for a in range(self.n_actions):
                for b in range(self.n_opp_actions):
                    ids, probs = self._succ[s][a][b]
                    for child, prob in zip(ids, probs):
                        if prob <= 0.0:
                            continue
                        child = int(child)
                        if self.stage_of[child] != self.stage_of[s] + 1:
                            report.add(
                                f"edge ({s},{a},{b})->{child} skips stages "
                                f"{self.stage_of[s]}->{self.stage_of[child]}")
                            ok = False
                        if seen[child] and parents[child] != (s, a, b):
                            report.add(
                                f"state {child} reachable from both {parents[child]} "
                                f"and {(s, a, b)}: tree structure violated")
                            ok = False
                        seen[child] = True
                        parents[child] = (s, a, b)
        for s in range(self.n_states):
            if self.stage_of[s] > 1 and parents[s] is None:
                report.add(f"state {s} at stage {self.stage_of[s]} has no parent")
                ok = False
            if self.stage_of[s] == 1 and parents[s] is not None:
                report.add(f"stage-1 state {s} has parent {parents[s]}")
                ok = False
        return parents if ok else None

    def _own_history(self, state: int, player: int,
                     parents) -> tuple[tuple[int, int], ...]:
        """The player's (infoset, own action) sequence leading to `state`."""
        imap = self.infoset_map(player)
        hist = []
        s = state
        while parents[s] is not None:
            ps, a, b = parents[s]
            own = a if player == ALICE else b
            hist.append((int(imap[ps]), int(own)))
            s = ps
        return tuple(reversed(hist))

    def _check_perfect_recall(self, report: ValidationReport, player: int, parents) -> None:
        imap = self.infoset_map(player)
        name = "alice" if player == ALICE else "bob"
        rep_state: dict[int, int] = {}
        rep_hist: dict[int, tuple] = {}
        for s in range(self.n_states):
            info = int(imap[s])
            hist = self._own_history(s, player, parents)
            if info not in rep_state:
                rep_state[info] = s
                rep_hist[info] = hist
                continue
            other = rep_state[info]
            if self.stage_of[other] != self.stage_of[s]:
                report.add(
                    f"{name} infoset {info}: states {other} and {s} sit at "
                    f"different stages")
            elif rep_hist[info] != hist:
                report.add(
                    f"{name} infoset {info}: states {other} and {s} have "
                    f"different (infoset, action) histories: perfect recall violated")

    # ------------------------------------------------------------- derivation
    def _ensure_built(self) -> None:
        if self._built:
            return
        report = self.validate()
        if not report.ok:
            raise ValueError(f"invalid game specification:\n{report}")
        self.chance_reach = np.zeros(self.n_states)
        order = np.argsort(self.stage_of, kind="stable")
        for s in order:
            if self.stage_of[s] == 1:
                self.chance_reach[s] = self.p0[s]
        for s in order:
            if self._succ[s] is None:
                continue
            for a in range(self.n_actions):
                for b in range(self.n_opp_actions):
                    ids, probs = self._succ[s][a][b]
                    for child, prob in zip(ids, probs):
                        if prob > 0:
                            self.chance_reach[int(child)] = self.chance_reach[s] * float(prob)

        self._trees = (self._build_tree(ALICE), self._build_tree(BOB))
        self._build_bilinear()
        self._deterministic = all(
            succ is None or all(len(succ[a][b][0]) == 1
                                for a in range(self.n_actions)
                                for b in range(self.n_opp_actions))
            for succ in self._succ)
        self._built = True

    def _build_tree(self, player: int) -> TreeIndex:
        imap = self.infoset_map(player)
        n_acts = self.action_count(player)
        n_infosets = int(imap.max()) + 1
        stage = np.full(n_infosets, -1, dtype=int)
        par_x = np.full(n_infosets, -1, dtype=int)
        par_a = np.full(n_infosets, -1, dtype=int)
        for s in range(self.n_states):
            info = int(imap[s])
            stage[info] = int(self.stage_of[s])
            if self._parent[s] is not None:
                ps, a, b = self._parent[s]
                par_x[info] = int(imap[ps])
                par_a[info] = int(a if player == ALICE else b)
        return TreeIndex(
            horizon=self.horizon,
            n_actions=n_acts,
            stage=stage,
            actions=[np.arange(n_acts)] * n_infosets,
            parent_infoset=par_x,
            parent_action=par_a,
        )

    def _build_bilinear(self) -> None:
        """Pair-indexed forms: V_raw(mu, nu) = mu^T M nu, plus the rescaled
        variants that turn a fixed opponent into a cost vector by one matvec."""
        a_pairs = self.n_infosets * self.n_actions
        b_pairs = self.n_opp_infosets * self.n_opp_actions
        raw = np.zeros((a_pairs, b_pairs))
        hits = np.zeros((a_pairs, b_pairs))  # sum of chance reach per block
        for s in range(self.n_states):
            reach = self.chance_reach[s]
            if reach == 0.0:
                continue
            xa = int(self.x_map[s]) * self.n_actions
            yb = int(self.y_map[s]) * self.n_opp_actions
            raw[xa:xa + self.n_actions, yb:yb + self.n_opp_actions] += reach * self.mean_cost[s]
            hits[xa:xa + self.n_actions, yb:yb + self.n_opp_actions] += reach
        self._bilinear = raw
        self._resc_alice = (hits + raw) / 2.0          # sum_s p(s) (1 + u) / 2
        self._resc_bob = (hits.T - raw.T) / 2.0        # sum_s p(s) (1 - u) / 2

    def tree(self, player: int) -> TreeIndex:
        self._ensure_built()
        return self._trees[player]

    @property
    def alice(self) -> TreeIndex:
        return self.tree(ALICE)

    @property
    def bob(self) -> TreeIndex:
        return self.tree(BOB)

    # ------------------------------------------------------------------ values
    def expected_value(self, alice_weights: np.ndarray, bob_weights: np.ndarray) -> float:
        """Exact expected total raw cost for Alice under the two strategies."""
        self._ensure_built()
        return float(alice_weights @ self._bilinear @ bob_weights)

    def cost_vector(self, player: int, opp_weights: np.ndarray,
                    rescaled: bool = True) -> np.ndarray:
        """The player's linear cost vector induced by a fixed opponent:
        c(x, a) = sum over states in x and opponent actions of
        chance_reach * opponent_weight * per-stage cost (rescaled by default,
        so <mu, c> is the player's expected total rescaled cost)."""
        self._ensure_built()
        if rescaled:
            mat = self._resc_alice if player == ALICE else self._resc_bob
            return mat @ opp_weights
        if player == ALICE:
            return self._bilinear @ opp_weights
        return -(self._bilinear.T @ opp_weights)

    # ---------------------------------------------------------------- sampling
    @staticmethod
    def _draw(ids: np.ndarray, probs: np.ndarray, rng: RngStream) -> int:
        """Single-uniform inverse-CDF draw; point masses consume no draw."""
        positive = probs > 0.0
        if positive.sum() == 1:
            return int(ids[int(np.argmax(positive))])
        u = rng.uniform()
        acc = 0.0
        last = int(ids[0])
        for i, p in zip(ids, probs):
            if p > 0.0:
                last = int(i)
            acc += p
            if u < acc:
                return int(i)
        return last

    def _draw_action(self, row: np.ndarray, rng: RngStream) -> int:
        ids = np.arange(len(row))
        return self._draw(ids, row, rng)

    def _realized_cost(self, s: int, a: int, b: int, rng: RngStream) -> float:
        two_point = self.noise.get((s, a, b))
        mean = float(self.mean_cost[s, a, b])
        if two_point is None:
            return mean
        lo, hi = two_point
        q = (mean - lo) / (hi - lo)
        return hi if rng.uniform() < q else lo

    def sample_trajectory(self, alice_policy: np.ndarray, bob_policy: np.ndarray,
                          rng: RngStream):
        """Roll out one game; return (alice view, bob view, raw cost total).

        Views are per-stage StageObservation lists; each player's costs are
        rescaled to [0, 1] from their own side.
        """
        self._ensure_built()
        stage1 = np.flatnonzero(self.stage_of == 1)
        s = self._draw(stage1, self.p0[stage1], rng)
        alice_view, bob_view = [], []
        raw_total = 0.0
        for h in range(1, self.horizon + 1):
            a = self._draw_action(alice_policy[int(self.x_map[s])], rng)
            b = self._draw_action(bob_policy[int(self.y_map[s])], rng)
            u = self._realized_cost(s, a, b, rng)
            raw_total += u
            alice_view.append(StageObservation(int(self.x_map[s]), a, (1.0 + u) / 2.0))
            bob_view.append(StageObservation(int(self.y_map[s]), b, (1.0 - u) / 2.0))
            if h < self.horizon:
                ids, probs = self._succ[s][a][b]
                s = self._draw(ids, probs, rng)
        return alice_view, bob_view, raw_total

    def sample_batch(self, alice_policy: np.ndarray, bob_policy: np.ndarray,
                     n: int, seed: int):
        """Vectorized rollout of n trajectories (deterministic transitions
        only). Returns per-stage arrays of (state, alice action, bob action,
        raw cost); used by the Monte-Carlo checks."""
        self._ensure_built()
        if not self._deterministic:
            raise ValueError("batch sampling requires deterministic transitions")
        gen = np.random.Generator(np.random.PCG64(seed))
        next_state = np.full((self.n_states, self.n_actions, self.n_opp_actions), -1)
        for s in range(self.n_states):
            if self._succ[s] is None:
                continue
            for a in range(self.n_actions):
                for b in range(self.n_opp_actions):
                    next_state[s, a, b] = int(self._succ[s][a][b][0][0])

        def draw_rows(policy, infosets):
            rows = policy[infosets]
            cum = np.cumsum(rows, axis=1)
            u = gen.random((len(infosets), 1))
            return (u < cum).argmax(axis=1)

        stage1 = np.flatnonzero(self.stage_of == 1)
        s = gen.choice(stage1, size=n, p=self.p0[stage1] / self.p0[stage1].sum())
        out = []
        for h in range(1, self.horizon + 1):
            a = draw_rows(alice_policy, self.x_map[s])
            b = draw_rows(bob_policy, self.y_map[s])
            u = self.mean_cost[s, a, b].copy()
            if self.noise:
                for (ns, na, nb), (lo, hi) in self.noise.items():
                    hit = (s == ns) & (a == na) & (b == nb)
                    if hit.any():
                        q = (self.mean_cost[ns, na, nb] - lo) / (hi - lo)
                        u[hit] = np.where(gen.random(int(hit.sum())) < q, hi, lo)
            out.append((s.copy(), a, b, u))
            if h < self.horizon:
                s = next_state[s, a, b]
        return out

    # -------------------------------------------------------------------- dump
    def dump(self) -> str:
        """Plain-text dump, one line per state, for golden-file tests."""
        self._ensure_built()
        lines = [f"H={self.horizon} A={self.n_actions} B={self.n_opp_actions} "
                 f"S={self.n_states} X={self.n_infosets} Y={self.n_opp_infosets}"]
        for s in range(self.n_states):
            parts = [f"s={s}", f"h={self.stage_of[s]}", f"x={self.x_map[s]}",
                     f"y={self.y_map[s]}", f"p0={self.p0[s]:.10g}"]
            if self._succ[s] is not None:
                cells = []
                for a in range(self.n_actions):
                    for b in range(self.n_opp_actions):
                        ids, probs = self._succ[s][a][b]
                        cells.append(",".join(f"{int(i)}:{p:.10g}" for i, p in zip(ids, probs)))
                parts.append("next=" + ";".join(cells))
            costs = ";".join(f"{self.mean_cost[s, a, b]:.10g}"
                             for a in range(self.n_actions)
                             for b in range(self.n_opp_actions))
            parts.append("u=" + costs)
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"


def validate_efg(spec: EfgSpec) -> ValidationReport:
    return spec.validate()


def reachable_infosets(spec: EfgSpec, alice_policy: np.ndarray,
                       bob_policy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks of the infosets each player can actually reach when the
    two policies play (chance included)."""
    spec._ensure_built()
    reach = spec.p0 > 0.0
    order = np.argsort(spec.stage_of, kind="stable")
    for s in order:
        if not reach[s] or spec._succ[s] is None:
            continue
        row_a = alice_policy[int(spec.x_map[s])]
        row_b = bob_policy[int(spec.y_map[s])]
        for a in range(spec.n_actions):
            if row_a[a] <= 0.0:
                continue
            for b in range(spec.n_opp_actions):
                if row_b[b] <= 0.0:
                    continue
                ids, probs = spec._succ[s][a][b]
                for child, prob in zip(ids, probs):
                    if prob > 0.0:
                        reach[int(child)] = True
    x_mask = np.zeros(spec.n_infosets, dtype=bool)
    y_mask = np.zeros(spec.n_opp_infosets, dtype=bool)
    x_mask[spec.x_map[reach]] = True
    y_mask[spec.y_map[reach]] = True
    return x_mask, y_mask


def exploitability(spec: EfgSpec, alice_weights: np.ndarray,
                   bob_weights: np.ndarray) -> float:
    """Certified gap from exact best responses on both sides (raw units)."""
    value = spec.expected_value(alice_weights, bob_weights)
    alice_best, _, _ = best_response(spec.alice, spec.cost_vector(ALICE, bob_weights, rescaled=False))
    bob_best_cost, _, _ = best_response(spec.bob, spec.cost_vector(BOB, alice_weights, rescaled=False))
    bob_best_gain = -bob_best_cost  # Bob's cost is -u; his best gain is the max of u
    return max(bob_best_gain - value, value - alice_best)
