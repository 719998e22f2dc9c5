"""Match runner: plays Alice against Bob for T rounds with bandit feedback,
tracks exact expected values alongside realized play, and emits CSV.

The plotted quantity is never sampled: each round the harness computes the
exact expected value of the current strategy pair, so sampling noise enters
only through the learners' own trajectories. Replicas derive their seeds as
base XOR rep index; reruns with the same config are bit-identical.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import adversaries, kuhn
from .conservative import ConservativeStochastic
from .efg import ALICE, BOB, EfgSpec
from .efg_learners import EfgHyperparams, FixedEfg, OmdEfg, PhasedAggressionEfg
from .ledger import RegretLedger
from .matrix_games import GameMatrix, load_matrix, solve_minmax
from .rng import RngStream, rep_seed
from .selfplay import MarginEquilibrium
from .simplex import sample_action, validate_simplex
from .simplex_learners import Exp3Nfg, FixedNfg, NfgHyperparams, PhasedAggressionNfg
from .treeplex import (
    best_response_value,
    embed_policy,
    flow_residual,
    policy_to_weights,
    weights_to_policy,
)

ALICE_IDS = ("minmax", "omd", "phased", "exp3", "stochastic")
BOB_KUHN_IDS = ("minmax", "omd", "phased", "bluffj", "raisekq", "raisek", "randminmax")
NFG_GAMES = ("rps", "pennies")
ENV_GAMES = ("lowerbound", "bernoulli")
OPPONENT_STREAM_SALT = 0x9E3779B97F4A7C15  # opponents own a derived stream


@dataclass
class MatchConfig:
    game: str
    alice: str
    bob: str = "env"
    rounds: int = 1000
    reps: int = 1
    seed: int = 0
    out: str | None = None
    delta: float | None = None
    epsilon: float = 1e-3
    gamma: float | None = None
    depth: int = 1
    rates: str = "practical"              # practical | theory (EFG tuning)
    final_divergence: str = "balanced"    # balanced | unbalanced
    reward_means: tuple[float, ...] = (0.9, 0.1)

    def __post_init__(self):
        if self.rounds < 1 or self.reps < 1:
            raise ValueError("rounds and reps must be >= 1")
        if self.alice not in ALICE_IDS:
            raise ValueError(f"unknown alice algorithm {self.alice!r}")
        if self.rates not in ("practical", "theory"):
            raise ValueError("rates must be 'practical' or 'theory'")
        if self.final_divergence not in ("balanced", "unbalanced"):
            raise ValueError("final_divergence must be 'balanced' or 'unbalanced'")


@dataclass
class MatchRecord:
    rep: int
    t: int
    realized: float        # Alice's realized cost, game units
    expected: float        # exact expected value V(mu_t, nu_t), game units
    cum_expected: float    # cumulative expected Alice gain = -sum expected
    phase: int
    alpha: float


@dataclass
class RepReport:
    rep: int
    final_gain: float                 # cumulative expected gain, game units
    comparator_regret: float          # rescaled cost units
    worst_case_regret: float          # rescaled cost units, vs best fixed strategy
    phases: int
    max_phases_allowed: int | None
    max_estimator_nonfinal: float
    max_strategy_residual: float
    est_regret_total: float | None    # sum of per-phase estimated regrets
    regret_checkpoints: list[tuple[int, float]]


@dataclass
class MatchResult:
    config: MatchConfig
    records: list[MatchRecord]
    reports: list[RepReport]
    delta: float | None = None
    regret_bound: float | None = None

    def csv(self) -> str:
        return records_to_csv(self.records)


def records_to_csv(records: list[MatchRecord]) -> str:
    """Fixed, versioned column set; validates the prefix-sum invariant."""
    out = io.StringIO()
    out.write("rep,t,realized,expected,cum_expected,phase,alpha\n")
    last: dict[int, float] = {}
    for r in records:
        prev = last.get(r.rep, 0.0)
        if abs((prev - r.expected) - r.cum_expected) > 1e-9 * max(1.0, abs(r.cum_expected)):
            raise ValueError(f"cumulative gain is not a prefix sum at rep {r.rep} t {r.t}")
        last[r.rep] = r.cum_expected
        out.write(f"{r.rep},{r.t},{r.realized:.12g},{r.expected:.12g},"
                  f"{r.cum_expected:.12g},{r.phase},{r.alpha:.12g}\n")
    return out.getvalue()


def records_from_csv(text: str) -> list[MatchRecord]:
    lines = text.strip().splitlines()
    if not lines or lines[0] != "rep,t,realized,expected,cum_expected,phase,alpha":
        raise ValueError("unrecognized CSV header")
    records = []
    for line in lines[1:]:
        rep, t, realized, expected, cum, phase, alpha = line.split(",")
        records.append(MatchRecord(int(rep), int(t), float(realized), float(expected),
                                   float(cum), int(phase), float(alpha)))
    return records


def write_csv(records: list[MatchRecord], path: str) -> None:
    with open(path, "w") as fh:
        fh.write(records_to_csv(records))


def aggregate_reps(records: list[MatchRecord]) -> dict:
    """Per-round mean and standard deviation of cumulative expected gain."""
    by_rep: dict[int, list[float]] = {}
    for r in records:
        by_rep.setdefault(r.rep, []).append(r.cum_expected)
    lengths = {len(v) for v in by_rep.values()}
    if len(lengths) != 1:
        raise ValueError("reps have unequal lengths")
    mat = np.array([by_rep[k] for k in sorted(by_rep)])
    return {
        "t": np.arange(1, mat.shape[1] + 1),
        "mean": mat.mean(axis=0),
        "sd": mat.std(axis=0, ddof=0),
        "reps": mat.shape[0],
    }


def _checkpoints(rounds: int, n: int = 24) -> list[int]:
    grid = sorted({int(round(rounds ** (k / (n - 1)))) for k in range(n)} | {rounds})
    return [t for t in grid if t >= 1]


def slope_fit(checkpoints: list[tuple[int, float]]) -> float | None:
    """Least-squares slope of log(regret) vs log(t); None when degenerate."""
    pts = [(t, r) for t, r in checkpoints if t > 1 and r > 0]
    if len(pts) < 2:
        return None
    xs = np.log([t for t, _ in pts])
    ys = np.log([r for _, r in pts])
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def regret_report(result: MatchResult) -> dict:
    """Comparator and worst-case regret (mean over reps), phase counts, and
    the within-run log-log slope of worst-case regret."""
    comp = [r.comparator_regret for r in result.reports]
    worst = [r.worst_case_regret for r in result.reports]
    phases = [r.phases for r in result.reports]
    merged: dict[int, list[float]] = {}
    for rep in result.reports:
        for t, reg in rep.regret_checkpoints:
            merged.setdefault(t, []).append(reg)
    mean_curve = sorted((t, float(np.mean(v))) for t, v in merged.items())
    return {
        "comparator_regret_mean": float(np.mean(comp)),
        "comparator_regret_se": float(np.std(comp, ddof=0) / math.sqrt(len(comp))),
        "worst_case_regret_mean": float(np.mean(worst)),
        "phases_max": int(max(phases)),
        "max_phases_allowed": result.reports[0].max_phases_allowed,
        "slope": slope_fit(mean_curve),
        "regret_curve": mean_curve,
    }


# --------------------------------------------------------------------------
# shared solution bundles (deterministic; cached per process)

_KUHN_CACHE: dict = {}
_NFG_CACHE: dict = {}


def kuhn_bundle(epsilon: float = 1e-3) -> tuple[kuhn.KuhnGame, MarginEquilibrium]:
    """Symmetrized Kuhn game with its margin-maximizing certified solution.
    Cached per process; treat the returned objects as read-only."""
    key = round(math.log10(epsilon), 6)
    if key not in _KUHN_CACHE:
        game = kuhn.build_kuhn(symmetrize=True)
        _KUHN_CACHE[key] = (game, kuhn.kuhn_solution(game, epsilon))
    return _KUHN_CACHE[key]


def nfg_bundle(game_id: str, epsilon: float):
    key = (game_id, round(math.log10(epsilon), 6))
    if key not in _NFG_CACHE:
        if game_id == "rps":
            game = adversaries.rock_paper_scissors()
        elif game_id == "pennies":
            game = adversaries.matching_pennies()
        else:
            game = load_matrix(game_id)
        _NFG_CACHE[key] = (game, solve_minmax(game, epsilon))
    return _NFG_CACHE[key]


# --------------------------------------------------------------------------
# runners

def run_match(config: MatchConfig) -> MatchResult:
    """Dispatch on the game id; all build errors surface before round 1."""
    if config.game == "kuhn":
        return _run_kuhn(config)
    if config.game == "lowerbound" and config.depth > 1:
        return _run_lowerbound_efg(config)
    if config.game in ENV_GAMES:
        return _run_cost_env(config)
    return _run_nfg(config)


# ----- normal-form matrix games

def _nfg_learner(side: int, algo: str, game: GameMatrix, eq, config: MatchConfig):
    n = game.n_rows if side == ALICE else game.n_cols
    comparator = eq.alice if side == ALICE else eq.bob
    if algo == "minmax":
        return FixedNfg(comparator)
    if algo in ("omd", "exp3"):
        return Exp3Nfg(n, config.rounds)
    if algo == "phased":
        delta = float(np.min(comparator))
        hyper = NfgHyperparams.from_theory(config.rounds, delta, n)
        return PhasedAggressionNfg(hyper, comparator)
    if algo == "stochastic":
        return ConservativeStochastic(comparator, config.rounds)
    if algo.startswith("always:"):
        k = int(algo.split(":", 1)[1])
        strategy = np.zeros(n)
        strategy[k] = 1.0
        return FixedNfg(strategy)
    if algo == "uniform":
        return FixedNfg(np.full(n, 1.0 / n))
    raise ValueError(f"unsupported algorithm {algo!r} for a matrix game")


def _run_nfg(config: MatchConfig) -> MatchResult:
    game, eq = nfg_bundle(config.game, config.epsilon)
    records: list[MatchRecord] = []
    reports: list[RepReport] = []
    checkpoints = set(_checkpoints(config.rounds))
    delta_out = None
    bound_out = None

    for rep in range(config.reps):
        rng = RngStream(rep_seed(config.seed, rep))
        alice = _nfg_learner(ALICE, config.alice, game, eq, config)
        bob = _nfg_learner(BOB, config.bob, game, eq, config)
        if isinstance(alice, PhasedAggressionNfg):
            delta_out = alice.hyper.delta
            bound_out = alice.hyper.regret_bound
        ledger = RegretLedger(game.n_rows)
        cum_gain = 0.0
        max_residual = 0.0
        cps: list[tuple[int, float]] = []
        for t in range(1, config.rounds + 1):
            mu = alice.play()
            nu = bob.play()
            max_residual = max(max_residual,
                               abs(float(mu.sum()) - 1.0), -float(mu.min(initial=0.0)),
                               abs(float(nu.sum()) - 1.0), -float(nu.min(initial=0.0)))
            expected = game.expected_value(mu, nu)
            a = sample_action(mu, rng)
            b = sample_action(nu, rng)
            alice.observe(a, float(game.rescaled[a, b]))
            bob.observe(b, 1.0 - float(game.rescaled[a, b]))
            ledger.record(mu, eq.alice, game.rescaled[:, b])
            cum_gain -= expected
            records.append(MatchRecord(rep, t, float(game.raw[a, b]), expected,
                                       cum_gain, alice.phase, alice.alpha))
            if t in checkpoints:
                cps.append((t, ledger.worst_case_regret))
        reports.append(_close_rep(rep, alice, cum_gain, ledger.comparator_regret,
                                  ledger.worst_case_regret, max_residual, cps))
    result = MatchResult(config, records, reports, delta_out, bound_out)
    _maybe_write(result)
    return result


# ----- scripted cost-process environments (no strategic Bob)

def _env_for(config: MatchConfig):
    if config.game == "lowerbound":
        delta = config.delta if config.delta is not None else 0.1
        return adversaries.LowerBoundEnv(delta=delta, rounds=config.rounds,
                                         gamma=config.gamma)
    if config.game == "bernoulli":
        return adversaries.BernoulliRewardEnv(np.asarray(config.reward_means))
    raise ValueError(f"unknown environment {config.game!r}")


def _env_comparator(config: MatchConfig, env) -> np.ndarray:
    if isinstance(env, adversaries.LowerBoundEnv):
        return env.comparator
    delta = config.delta if config.delta is not None else 0.2
    comp = np.full(env.n_actions, (1.0 - delta) / (env.n_actions - 1))
    comp[-1] = delta
    return comp


def _run_cost_env(config: MatchConfig) -> MatchResult:
    if config.bob != "env":
        raise ValueError("cost environments script the adversary; use bob='env'")
    env = _env_for(config)
    comparator = _env_comparator(config, env)
    validate_simplex(comparator)
    mean_costs = env.mean_costs
    records: list[MatchRecord] = []
    reports: list[RepReport] = []
    checkpoints = set(_checkpoints(config.rounds))
    delta_out = float(np.min(comparator))
    bound_out = None

    for rep in range(config.reps):
        rng = RngStream(rep_seed(config.seed, rep))
        if config.alice == "phased":
            hyper = NfgHyperparams.from_theory(config.rounds, delta_out, env.n_actions)
            alice = PhasedAggressionNfg(hyper, comparator)
            bound_out = hyper.regret_bound
        elif config.alice in ("omd", "exp3"):
            alice = Exp3Nfg(env.n_actions, config.rounds)
        elif config.alice == "stochastic":
            alice = ConservativeStochastic(comparator, config.rounds)
        else:
            raise ValueError(f"{config.alice!r} needs a game, not a cost environment")
        cum_gain = 0.0
        cum_played_mean = 0.0
        cum_comp_mean = 0.0
        max_residual = 0.0
        cps: list[tuple[int, float]] = []
        for t in range(1, config.rounds + 1):
            mu = alice.play()
            max_residual = max(max_residual, abs(float(mu.sum()) - 1.0),
                               -float(mu.min(initial=0.0)))
            costs = env.draw(rng)
            a = sample_action(mu, rng)
            alice.observe(a, float(costs[a]))
            expected = float(mu @ mean_costs)
            cum_played_mean += expected
            cum_comp_mean += float(comparator @ mean_costs)
            cum_gain -= expected
            records.append(MatchRecord(rep, t, float(costs[a]), expected, cum_gain,
                                       alice.phase, alice.alpha))
            if t in checkpoints:
                pseudo = cum_played_mean - t * float(np.min(mean_costs))
                cps.append((t, pseudo))
        worst = cum_played_mean - config.rounds * float(np.min(mean_costs))
        reports.append(_close_rep(rep, alice, cum_gain,
                                  cum_played_mean - cum_comp_mean, worst,
                                  max_residual, cps))
    result = MatchResult(config, records, reports, delta_out, bound_out)
    _maybe_write(result)
    return result


# ----- Kuhn poker (and EFG machinery in general)

def _efg_hyper(config: MatchConfig, tree, delta: float) -> EfgHyperparams:
    if config.rates == "theory":
        max_actions = int(tree.row_size.max())
        return EfgHyperparams.from_theory(config.rounds, delta, tree.n_infosets,
                                          max_actions, tree.horizon)
    return EfgHyperparams.from_practical(config.rounds, delta)


def _omd_rate(config: MatchConfig, tree) -> float:
    if config.rates == "theory":
        max_actions = int(tree.row_size.max())
        return OmdEfg.theory_rate(config.rounds, tree.n_infosets, max_actions,
                                  tree.horizon)
    return 1.0 / math.sqrt(config.rounds)


class _EfgSide:
    """One seat at the table: owns the learner/opponent and translates
    between its (possibly restricted) strategy space and the full tree."""

    def __init__(self, player: int, algo: str, spec: EfgSpec, game, solution,
                 config: MatchConfig, opp_rng: RngStream):
        self.player = player
        self.full = spec.tree(player)
        self.spec = spec
        self.sub = None
        self.learner = None
        self.opponent = None
        eq_weights = solution.equilibrium.alice if player == ALICE else solution.equilibrium.bob
        if algo == "minmax":
            self.learner = FixedEfg(self.full, eq_weights)
        elif algo == "omd":
            self.learner = OmdEfg(self.full, _omd_rate(config, self.full),
                                  divergence=config.final_divergence)
        elif algo == "phased":
            if player == ALICE:
                tree, comp, delta = (solution.alice_tree, solution.alice_comparator,
                                     solution.alice_delta)
            else:
                tree, comp, delta = (solution.bob_tree, solution.bob_comparator,
                                     solution.bob_delta)
            self.sub = tree
            hyper = _efg_hyper(config, tree, delta)
            self.learner = PhasedAggressionEfg(tree, hyper, comp,
                                               final_divergence=config.final_divergence)
        else:
            if player == ALICE:
                raise ValueError(f"unsupported alice algorithm {algo!r} for Kuhn")
            kind, _, arg = algo.partition(":")
            alpha = float(arg) if arg else 0.2
            eq_policy = weights_to_policy(self.full, eq_weights)
            self.opponent = adversaries.KuhnOpponent(kind, game, eq_policy,
                                                     opp_rng, alpha=alpha)

    def play(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Returns (full policy, full weights, strategy residual)."""
        if self.opponent is not None:
            policy = self.opponent.policy()
            weights = policy_to_weights(self.full, policy)
            return policy, weights, flow_residual(self.full, weights)
        emitted = self.learner.play()
        if self.sub is not None:
            residual = flow_residual(self.sub, emitted)
            policy = embed_policy(self.sub, weights_to_policy(self.sub, emitted), self.full)
            weights = policy_to_weights(self.full, policy)
        else:
            residual = flow_residual(self.full, emitted)
            weights = emitted
            policy = weights_to_policy(self.full, weights)
        return policy, weights, residual

    def observe(self, view) -> None:
        if self.opponent is not None:
            self.opponent.observe(view)
        else:
            self.learner.observe(view)

    @property
    def phase(self) -> int:
        return getattr(self.learner, "phase", 0)

    @property
    def alpha(self) -> float:
        return getattr(self.learner, "alpha", 0.0)


def _run_kuhn(config: MatchConfig) -> MatchResult:
    if config.alice in ("exp3", "stochastic"):
        raise ValueError(f"{config.alice!r} runs on simplex games only")
    if config.bob == "env":
        raise ValueError("kuhn needs an explicit bob (algorithm or opponent kind)")
    kind = config.bob.split(":", 1)[0]
    if kind not in BOB_KUHN_IDS:
        raise ValueError(f"unknown bob {config.bob!r} for Kuhn")
    game, solution = kuhn_bundle(config.epsilon)
    spec = game.spec
    scale = spec.unit_scale
    comp_full = policy_to_weights(
        spec.alice, embed_policy(solution.alice_tree,
                                 weights_to_policy(solution.alice_tree,
                                                   solution.alice_comparator),
                                 spec.alice))

    records: list[MatchRecord] = []
    reports: list[RepReport] = []
    checkpoints = set(_checkpoints(config.rounds))
    delta_out = solution.alice_delta if config.alice == "phased" else None
    bound_out = None

    for rep in range(config.reps):
        seed = rep_seed(config.seed, rep)
        rng = RngStream(seed)
        opp_rng = RngStream(seed ^ OPPONENT_STREAM_SALT)
        alice = _EfgSide(ALICE, config.alice, spec, game, solution, config, opp_rng)
        bob = _EfgSide(BOB, config.bob, spec, game, solution, config, opp_rng)
        if isinstance(alice.learner, PhasedAggressionEfg):
            bound_out = alice.learner.hyper.regret_bound
        cum_gain = 0.0
        cum_played_resc = 0.0
        cum_comp_resc = 0.0
        cum_cost_resc = np.zeros(spec.alice.n_pairs)
        max_residual = 0.0
        cps: list[tuple[int, float]] = []
        for t in range(1, config.rounds + 1):
            pol_a, w_a, res_a = alice.play()
            pol_b, w_b, res_b = bob.play()
            max_residual = max(max_residual, res_a, res_b)
            expected = spec.expected_value(w_a, w_b) * scale
            cost_t = spec.cost_vector(ALICE, w_b, rescaled=True)
            cum_cost_resc += cost_t
            cum_played_resc += float(w_a @ cost_t)
            cum_comp_resc += float(comp_full @ cost_t)
            view_a, view_b, raw_cost = spec.sample_trajectory(pol_a, pol_b, rng)
            alice.observe(view_a)
            bob.observe(view_b)
            cum_gain -= expected
            records.append(MatchRecord(rep, t, raw_cost * scale, expected, cum_gain,
                                       alice.phase, alice.alpha))
            if t in checkpoints:
                worst = cum_played_resc - best_response_value(spec.alice, cum_cost_resc)
                cps.append((t, worst))
        worst = cum_played_resc - best_response_value(spec.alice, cum_cost_resc)
        reports.append(_close_rep(rep, alice.learner, cum_gain,
                                  cum_played_resc - cum_comp_resc, worst,
                                  max_residual, cps))
    result = MatchResult(config, records, reports, delta_out, bound_out)
    _maybe_write(result)
    return result


# ----- lower-bound EFG trees (depth >= 2)

def _run_lowerbound_efg(config: MatchConfig) -> MatchResult:
    if config.alice != "phased":
        raise ValueError("the deep lower-bound environment drives the phased learner")
    n_actions = 2
    delta = config.delta if config.delta is not None else n_actions ** (-config.depth)
    spec, designated, comp_policy = adversaries.lower_bound_env_efg(
        n_actions, config.depth, delta, config.rounds, gamma=config.gamma)
    tree = spec.alice
    comparator = policy_to_weights(tree, comp_policy)
    bob_policy = np.ones((spec.n_opp_infosets, 1))
    w_b = policy_to_weights(spec.bob, bob_policy)

    records: list[MatchRecord] = []
    reports: list[RepReport] = []
    checkpoints = set(_checkpoints(config.rounds))
    hyper = _efg_hyper(config, tree, float(comparator.min()))

    for rep in range(config.reps):
        rng = RngStream(rep_seed(config.seed, rep))
        alice = PhasedAggressionEfg(tree, hyper, comparator)
        cum_gain = 0.0
        cum_played_resc = 0.0
        cum_comp_resc = 0.0
        max_residual = 0.0
        cps: list[tuple[int, float]] = []
        cost_mean = spec.cost_vector(ALICE, w_b, rescaled=True)
        br_mean = best_response_value(tree, cost_mean)
        for t in range(1, config.rounds + 1):
            w_a = alice.play()
            max_residual = max(max_residual, flow_residual(tree, w_a))
            pol_a = weights_to_policy(tree, w_a)
            expected = spec.expected_value(w_a, w_b)
            view_a, _, raw_cost = spec.sample_trajectory(pol_a, bob_policy, rng)
            alice.observe(view_a)
            cum_played_resc += float(w_a @ cost_mean)
            cum_comp_resc += float(comparator @ cost_mean)
            cum_gain -= expected
            records.append(MatchRecord(rep, t, raw_cost, expected, cum_gain,
                                       alice.phase, alice.alpha))
            if t in checkpoints:
                cps.append((t, cum_played_resc - t * br_mean))
        worst = cum_played_resc - config.rounds * br_mean
        reports.append(_close_rep(rep, alice, cum_gain,
                                  cum_played_resc - cum_comp_resc, worst,
                                  max_residual, cps))
    result = MatchResult(config, records, reports, float(comparator.min()),
                         hyper.regret_bound)
    _maybe_write(result)
    return result


# ----- shared helpers

def _close_rep(rep: int, learner, cum_gain: float, comparator_regret: float,
               worst: float, max_residual: float,
               cps: list[tuple[int, float]]) -> RepReport:
    phases = getattr(learner, "phase", 0)
    hyper = getattr(learner, "hyper", None)
    est_regrets = getattr(learner, "phase_est_regrets", None)
    return RepReport(
        rep=rep,
        final_gain=cum_gain,
        comparator_regret=comparator_regret,
        worst_case_regret=worst,
        phases=phases,
        max_phases_allowed=hyper.max_phases if hyper is not None else None,
        max_estimator_nonfinal=getattr(learner, "max_est_nonfinal", 0.0),
        max_strategy_residual=max_residual,
        est_regret_total=float(sum(est_regrets)) if est_regrets else None,
        regret_checkpoints=cps,
    )


def _maybe_write(result: MatchResult) -> None:
    if result.config.out:
        write_csv(result.records, result.config.out)
