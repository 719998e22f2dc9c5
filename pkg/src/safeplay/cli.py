"""Command-line interface.

Subcommands:
  run         play a match (any game, any algorithm pair) and emit CSV
  solve       compute and certify a min-max equilibrium
  lowerbound  run the phased learner on the two-point adversarial environment
  report      summarize a CSV produced by `run`

A flat key=value config file can seed any subcommand's flags via --config;
explicit flags override file values. Exit code 0 on success, 2 on any error
(one diagnostic line on stderr).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness
from .efg import exploitability as efg_exploitability
from .harness import MatchConfig, aggregate_reps, regret_report, run_match
from .matrix_games import SolverBudgetError
from .treeplex import weights_to_policy


def _add_run_flags(p: argparse.ArgumentParser, require_game: bool) -> None:
    if require_game:
        p.add_argument("--game", required=True,
                       help="rps | pennies | kuhn | lowerbound | bernoulli | matrix file")
        p.add_argument("--alice", required=True,
                       help="minmax | omd | phased | exp3 | stochastic")
        p.add_argument("--bob", default="env",
                       help="algorithm id, kuhn opponent kind, always:<k>, uniform, or env")
    p.add_argument("--rounds", type=int, default=1000)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--delta", type=float, default=None, help="comparator margin override")
    p.add_argument("--epsilon", type=float, default=1e-3, help="equilibrium tolerance")
    p.add_argument("--gamma", type=float, default=None, help="lower-bound gap scale")
    p.add_argument("--depth", type=int, default=1, help="lower-bound tree depth")
    p.add_argument("--rates", choices=("practical", "theory"), default="practical",
                   help="tuning profile for treeplex learners")
    p.add_argument("--final-divergence", choices=("balanced", "unbalanced"),
                   default="balanced", dest="final_divergence",
                   help="divergence used once the comparator weight reaches zero")
    p.add_argument("--config", default=None, help="flat key=value file; flags override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safeplay")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="play a match and emit CSV")
    _add_run_flags(run_p, require_game=True)

    solve_p = sub.add_parser("solve", help="certified equilibrium computation")
    solve_p.add_argument("--game", required=True, help="rps | pennies | kuhn | matrix file")
    solve_p.add_argument("--epsilon", type=float, default=1e-3)
    solve_p.add_argument("--out", default=None, help="write the strategy dump here")
    solve_p.add_argument("--config", default=None)

    lb_p = sub.add_parser("lowerbound", help="phased learner on the adversarial environment")
    lb_p.add_argument("--delta", type=float, default=0.1)
    lb_p.add_argument("--gamma", type=float, default=None)
    lb_p.add_argument("--depth", type=int, default=1)
    lb_p.add_argument("--rounds", type=int, default=10_000)
    lb_p.add_argument("--reps", type=int, default=1)
    lb_p.add_argument("--seed", type=int, default=0)
    lb_p.add_argument("--out", default=None)
    lb_p.add_argument("--rates", choices=("practical", "theory"), default="theory")
    lb_p.add_argument("--config", default=None)

    rep_p = sub.add_parser("report", help="summarize a run CSV")
    rep_p.add_argument("--csv", required=True)
    rep_p.add_argument("--config", default=None)
    return parser


def parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(args: argparse.Namespace, argv: list[str]) -> argparse.Namespace:
    """File values fill in flags the command line did not set explicitly."""
    if not getattr(args, "config", None):
        return args
    file_values = parse_config_file(args.config)
    explicit = {tok.split("=", 1)[0].lstrip("-").replace("-", "_")
                for tok in argv if tok.startswith("--")}
    for key, raw in file_values.items():
        if key in explicit or not hasattr(args, key):
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, raw.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, key, int(raw))
        elif isinstance(current, float):
            setattr(args, key, float(raw))
        else:
            setattr(args, key, raw)
    return args


def _cmd_run(args) -> int:
    config = MatchConfig(
        game=args.game, alice=args.alice, bob=args.bob, rounds=args.rounds,
        reps=args.reps, seed=args.seed, out=args.out, delta=args.delta,
        epsilon=args.epsilon, gamma=args.gamma, depth=args.depth,
        rates=args.rates, final_divergence=args.final_divergence,
    )
    result = run_match(config)
    agg = aggregate_reps(result.records)
    report = regret_report(result)
    print(f"game={config.game} alice={config.alice} bob={config.bob} "
          f"rounds={config.rounds} reps={config.reps} seed={config.seed}")
    if result.delta is not None:
        print(f"comparator margin delta={result.delta:.6g} "
              f"regret bound R={result.regret_bound:.6g}")
    print(f"final expected gain: mean={agg['mean'][-1]:.6g} sd={agg['sd'][-1]:.6g}")
    print(f"comparator regret (rescaled): mean={report['comparator_regret_mean']:.6g} "
          f"se={report['comparator_regret_se']:.6g}")
    print(f"worst-case regret (rescaled): mean={report['worst_case_regret_mean']:.6g}")
    print(f"phases: max={report['phases_max']}"
          + (f" (allowed {report['max_phases_allowed']})"
             if report["max_phases_allowed"] else ""))
    if report["slope"] is not None:
        print(f"log-log regret slope: {report['slope']:.3f}")
    if config.out:
        print(f"wrote {config.out}")
    return 0


def _solve_dump_nfg(game, eq) -> str:
    lines = [
        f"value: {eq.value:.12g}",
        f"exploitability: {eq.exploitability:.12g}",
        f"iterations: {eq.iterations}",
        "alice: " + " ".join(f"{p:.12g}" for p in eq.alice),
        "bob: " + " ".join(f"{p:.12g}" for p in eq.bob),
    ]
    return "\n".join(lines) + "\n"


def _solve_dump_kuhn(game, solution) -> str:
    eq = solution.equilibrium
    spec = game.spec
    lines = [
        f"value: {eq.value:.12g}",
        f"exploitability: {eq.exploitability:.12g}",
        f"iterations: {eq.iterations}",
        f"alice_delta: {solution.alice_delta:.12g}",
        f"bob_delta: {solution.bob_delta:.12g}",
    ]
    for name, tree, weights, labels in (
            ("alice", spec.alice, eq.alice, spec.x_labels),
            ("bob", spec.bob, eq.bob, spec.y_labels)):
        policy = weights_to_policy(tree, weights)
        for x in range(tree.n_infosets):
            row = " ".join(f"{p:.12g}" for p in policy[x])
            lines.append(f"{name} {x} {labels[x]} {row}")
    return "\n".join(lines) + "\n"


def _cmd_solve(args) -> int:
    if args.game == "kuhn":
        game, solution = harness.kuhn_bundle(args.epsilon)
        gap = efg_exploitability(game.spec, solution.equilibrium.alice,
                                 solution.equilibrium.bob)
        dump = _solve_dump_kuhn(game, solution)
        print(f"kuhn: value={solution.equilibrium.value:.6g} "
              f"certified exploitability={gap:.6g} "
              f"delta={solution.margin:.6g}")
    else:
        game, eq = harness.nfg_bundle(args.game, args.epsilon)
        dump = _solve_dump_nfg(game, eq)
        print(f"{args.game}: value={eq.value:.6g} "
              f"certified exploitability={eq.exploitability:.6g}")
        gap = eq.exploitability
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(dump)
        print(f"wrote {args.out}")
    if gap > args.epsilon:
        print(f"error: certification failed ({gap:.3g} > {args.epsilon:.3g})",
              file=sys.stderr)
        return 2
    return 0


def _cmd_lowerbound(args) -> int:
    run_args = argparse.Namespace(
        game="lowerbound", alice="phased", bob="env", rounds=args.rounds,
        reps=args.reps, seed=args.seed, out=args.out, delta=args.delta,
        epsilon=1e-3, gamma=args.gamma, depth=args.depth, rates=args.rates,
        final_divergence="balanced",
    )
    return _cmd_run(run_args)


def _cmd_report(args) -> int:
    with open(args.csv) as fh:
        records = harness.records_from_csv(fh.read())
    agg = aggregate_reps(records)
    final_phase = max(r.phase for r in records)
    print(f"reps={agg['reps']} rounds={len(agg['t'])}")
    print(f"final expected gain: mean={agg['mean'][-1]:.6g} sd={agg['sd'][-1]:.6g}")
    print(f"phases: max={final_phase}")
    curve = [(int(t), abs(m)) for t, m in zip(agg["t"], agg["mean"])]
    grid = harness._checkpoints(len(agg["t"]))
    slope = harness.slope_fit([curve[t - 1] for t in grid])
    if slope is not None:
        print(f"log-log |gain| slope: {slope:.3f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config(args, argv)
        handler = {
            "run": _cmd_run,
            "solve": _cmd_solve,
            "lowerbound": _cmd_lowerbound,
            "report": _cmd_report,
        }[args.command]
        return handler(args)
    except SolverBudgetError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
