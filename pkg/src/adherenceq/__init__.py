"""Adherence-aware Q-learning toolkit for finite MDPs.

Learns both the optimal recommendation policy and the decision-maker's
adherence level online, with an exact planning oracle, benchmark
environments, a seeded experiment harness, and a live session service.
"""

from .adherence import (
    AdherenceEstimate,
    AdherenceObservation,
    ProtocolViolationError,
    classify_action,
    observe,
)
from .envs import (
    InventoryParams,
    build_inventory,
    build_machine_replacement,
    machine_baseline,
    ss_baseline,
)
from .experiments import (
    ExperimentConfig,
    RunRecord,
    paired_bootstrap_ci,
    resolve_env,
    run_comparison,
    run_convergence,
    run_theta_sweep,
    write_csv,
)
from .learner import (
    AdherenceLearner,
    LearnerConfig,
    ScriptedHdm,
    SimulatedHdm,
    load_snapshot,
    run_episode,
    save_snapshot,
)
from .mdp import (
    DeterministicPolicy,
    EvaluationError,
    FiniteMdp,
    MixedLaw,
    evaluate_law_exact,
    greedy_policy,
    load_mdp,
    mix_law,
    rollout_return,
    sample_transition,
    save_mdp,
)
from .oracle import (
    NonConvergenceError,
    OracleSolution,
    apply_operator,
    contraction_modulus,
    value_iteration,
)

__version__ = "0.1.0"

__all__ = [
    "AdherenceEstimate",
    "AdherenceLearner",
    "AdherenceObservation",
    "DeterministicPolicy",
    "EvaluationError",
    "ExperimentConfig",
    "FiniteMdp",
    "InventoryParams",
    "LearnerConfig",
    "MixedLaw",
    "NonConvergenceError",
    "OracleSolution",
    "ProtocolViolationError",
    "RunRecord",
    "ScriptedHdm",
    "SimulatedHdm",
    "apply_operator",
    "build_inventory",
    "build_machine_replacement",
    "classify_action",
    "contraction_modulus",
    "evaluate_law_exact",
    "greedy_policy",
    "load_mdp",
    "load_snapshot",
    "machine_baseline",
    "mix_law",
    "observe",
    "paired_bootstrap_ci",
    "resolve_env",
    "rollout_return",
    "run_comparison",
    "run_convergence",
    "run_episode",
    "run_theta_sweep",
    "sample_transition",
    "save_mdp",
    "save_snapshot",
    "ss_baseline",
    "value_iteration",
    "write_csv",
    "__version__",
]
