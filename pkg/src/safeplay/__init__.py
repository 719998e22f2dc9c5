"""Safe bandit learning in repeated zero-sum games.

The package provides:

- simplex and treeplex strategy types with validation and sampling;
- normal-form and extensive-form game environments (matrix games, Kuhn
  poker, lower-bound adversary constructions) with exact value computation;
- bandit learners: importance-weighted mirror descent, the phased
  comparator-mixing scheme over both domains, and a conservative learner for
  stochastic rewards;
- equilibrium solvers certified by exact best responses;
- an experiment harness with CSV output and a CLI (`safeplay`).
"""

from .rng import RngStream, rep_seed
from .simplex import mix, min_entry, sample_action, uniform, validate_simplex
from .ledger import RegretLedger
from .matrix_games import (
    GameMatrix,
    NfgEquilibrium,
    SolverBudgetError,
    exploitability as nfg_exploitability,
    load_matrix,
    load_matrix_text,
    solve_minmax,
)
from .simplex_learners import (
    Exp3Nfg,
    FixedNfg,
    NfgHyperparams,
    PhasedAggressionNfg,
    importance_estimate,
    omd_kl_step,
    pow2_ceil,
)
from .conservative import ConservativeStochastic, saddle_step
from .treeplex import (
    TreeIndex,
    balanced_policy,
    balanced_weights,
    best_response,
    embed_policy,
    flow_residual,
    policy_to_weights,
    support_restriction,
    uniform_policy,
    validate_weights,
    weights_to_policy,
)
from .efg import ALICE, BOB, EfgSpec, StageObservation, validate_efg
from .efg import exploitability as efg_exploitability
from .efg_learners import (
    EfgHyperparams,
    FixedEfg,
    OmdEfg,
    PhasedAggressionEfg,
    balanced_omd_step,
    dilated_omd_full,
    dilated_omd_step,
    trajectory_estimate,
)
from .selfplay import EfgEquilibrium, solve_efg

__all__ = [name for name in dir() if not name.startswith("_")]
