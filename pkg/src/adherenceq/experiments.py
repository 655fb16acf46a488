"""Seeded experiment harness: convergence traces, approach comparisons, and
adherence-level sweeps, emitted as deterministic CSV rows plus a manifest."""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .envs import (
    InventoryParams,
    build_inventory,
    build_machine_replacement,
    ss_baseline,
)
from .learner import AdherenceLearner, LearnerConfig, SimulatedHdm, run_episode
from .mdp import (
    DeterministicPolicy,
    FiniteMdp,
    evaluate_law_exact,
    greedy_policy,
    mdp_from_doc,
    mix_law,
    rollout_return,
)
from .oracle import NonConvergenceError, value_iteration

APPROACHES = ("adherence_aware", "classical_q", "baseline_only")
ORACLE_APPROACH = "oracle"

CSV_HEADER = "seed,approach,theta_true,step,tracked_value,actual_return,theta_hat,wall_ms"

EPISODE_STARTS = ("uniform", "initial")


@dataclass(frozen=True)
class EnvBundle:
    """A built environment plus its baseline law and tracked initial state."""

    name: str
    mdp: FiniteMdp
    baseline: DeterministicPolicy
    x0: int


def resolve_env(env: str | dict, discount: float = 0.9) -> EnvBundle:
    """Build an environment from a preset name, a document, or a file path.

    Documents either embed an MDP ({"mdp": <interchange doc>, "baseline":
    [...], "x0": ...}) or inventory parameters ({"inventory": {...}, "x0": ...}).
    """
    if isinstance(env, str) and env == "machine_replacement":
        mdp, baseline = build_machine_replacement(discount=discount)
        return EnvBundle("machine_replacement", mdp, baseline, 0)
    if isinstance(env, str) and env == "inventory":
        params = InventoryParams()
        return EnvBundle("inventory", build_inventory(params, discount), ss_baseline(params), 0)
    if isinstance(env, str) and env == "inventory_small":
        # desk-scale variant: an aggressive refill rule makes partial adherence
        # matter while the 41-state space stays cheap to train
        params = InventoryParams(
            capacity=40, threshold=30, order_quantity=40,
            price=6.0, holding=3.0, ordering=4.0,
        )
        return EnvBundle(
            "inventory_small", build_inventory(params, discount), ss_baseline(params), 0
        )
    if isinstance(env, str):
        doc = json.loads(Path(env).read_text())
        name = doc.get("name", Path(env).stem)
        return _env_from_doc(doc, name, discount)
    if isinstance(env, dict):
        return _env_from_doc(env, env.get("name", "custom"), discount)
    raise ValueError(f"unsupported environment descriptor {env!r}")


def _env_from_doc(doc: dict, name: str, discount: float) -> EnvBundle:
    if "mdp" in doc:
        mdp = mdp_from_doc(doc["mdp"])
        if "baseline" not in doc:
            raise ValueError("custom MDP environments must declare a baseline law")
        baseline = DeterministicPolicy(np.array(doc["baseline"], dtype=int))
        mdp.validate_policy(baseline, role="baseline law")
        return EnvBundle(name, mdp, baseline, int(doc.get("x0", 0)))
    if "inventory" in doc:
        params = InventoryParams.from_doc(doc["inventory"])
        return EnvBundle(
            name, build_inventory(params, discount), ss_baseline(params), int(doc.get("x0", 0))
        )
    raise ValueError("environment document needs an 'mdp' or 'inventory' section")


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment family run."""

    env: str | dict = "machine_replacement"
    theta_true: float = 0.7
    theta_grid: tuple[float, ...] | None = None
    approaches: tuple[str, ...] = APPROACHES
    steps: int = 10_000
    seeds: tuple[int, ...] = (0,)
    discount: float = 0.9
    alpha_mode: str = "polynomial"
    alpha: float = 0.85
    epsilon: float = 0.1
    initial_q: float | None = None  # None picks max(0, R_max) / (1 - discount)
    theta_prior: float = 0.5
    episode_len: int = 100
    episode_start: str = "uniform"
    log_every: int | None = None
    eval_rollouts: int = 30
    rollout_horizon: int = 200
    deterministic_output: bool = True
    workers: int = 1

    def __post_init__(self):
        if not self.approaches:
            raise ValueError("at least one approach is required")
        for approach in self.approaches:
            if approach not in APPROACHES:
                raise ValueError(f"unknown approach {approach!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if not 0.0 <= self.theta_true <= 1.0:
            raise ValueError(f"theta_true must lie in [0, 1], got {self.theta_true}")
        if self.theta_grid is not None:
            if len(self.theta_grid) < 2:
                raise ValueError("theta_grid needs at least two values")
            for value in self.theta_grid:
                if not 0.0 <= value <= 1.0:
                    raise ValueError(f"theta grid value {value} outside [0, 1]")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.episode_len < 1:
            raise ValueError("episode_len must be at least 1")
        if self.episode_start not in EPISODE_STARTS:
            raise ValueError(f"episode_start must be one of {EPISODE_STARTS}")
        if self.eval_rollouts < 0:
            raise ValueError("eval_rollouts must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def effective_log_every(self) -> int:
        return self.log_every if self.log_every else max(1, self.steps // 1000)

    def to_doc(self) -> dict:
        return {
            "env": self.env,
            "theta_true": self.theta_true,
            "theta_grid": list(self.theta_grid) if self.theta_grid else None,
            "approaches": list(self.approaches),
            "steps": self.steps,
            "seeds": list(self.seeds),
            "discount": self.discount,
            "alpha_mode": self.alpha_mode,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "initial_q": self.initial_q,
            "theta_prior": self.theta_prior,
            "episode_len": self.episode_len,
            "episode_start": self.episode_start,
            "log_every": self.log_every,
            "eval_rollouts": self.eval_rollouts,
            "rollout_horizon": self.rollout_horizon,
            "deterministic_output": self.deterministic_output,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_doc(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass(frozen=True)
class RunRecord:
    """One CSV row; reproducible bit-exactly from (config, seed).

    ``wall_ms`` is written as 0 under deterministic output (the default) so
    reruns stay byte-identical; measured timings live in the manifest.
    """

    seed: int
    approach: str
    theta_true: float
    step: int
    tracked_value: float
    actual_return: float
    theta_hat: float
    wall_ms: int

    def csv_row(self) -> str:
        return (
            f"{self.seed},{self.approach},{float(self.theta_true)!r},{self.step},"
            f"{float(self.tracked_value)!r},{float(self.actual_return)!r},"
            f"{float(self.theta_hat)!r},{self.wall_ms}"
        )


def _learner_config(config: ExperimentConfig, bundle: EnvBundle, approach: str) -> LearnerConfig:
    if config.initial_q is None:
        initial_q = max(0.0, float(np.max(bundle.mdp.reward))) / (1.0 - config.discount)
    else:
        initial_q = config.initial_q
    return LearnerConfig(
        discount=config.discount,
        baseline=bundle.baseline,
        mode="classical" if approach == "classical_q" else "adherence_aware",
        alpha_mode=config.alpha_mode,
        alpha=config.alpha,
        epsilon=config.epsilon,
        initial_q=initial_q,
        theta_prior=config.theta_prior,
    )


def _run_rng(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Training and evaluation generators for one seed.

    The derivation deliberately excludes both theta and the approach: a sweep
    cell reproduces the plain comparison run at the same adherence level
    bit-exactly, and approaches sharing a seed share the random stream, which
    pairs their rows and makes the classical-reduction trace equalities hold.
    """
    train_seq, eval_seq = np.random.SeedSequence([seed]).spawn(2)
    return np.random.default_rng(train_seq), np.random.default_rng(eval_seq)


def _train(
    config: ExperimentConfig,
    bundle: EnvBundle,
    approach: str,
    theta_true: float,
    seed: int,
    rng: np.random.Generator,
    on_log=None,
) -> AdherenceLearner:
    learner = AdherenceLearner.for_mdp(bundle.mdp, _learner_config(config, bundle, approach))
    hdm = SimulatedHdm(theta_true, bundle.baseline)
    # without a logging hook, chunks are whole episodes
    log_every = config.effective_log_every if on_log is not None else config.steps
    done = 0
    while done < config.steps:
        if done == 0 or config.episode_start == "initial":
            x = bundle.x0
        else:
            x = int(rng.integers(bundle.mdp.n_states))
        ep_len = min(config.episode_len, config.steps - done)
        ep_done = 0
        ep_return = 0.0
        weight = 1.0
        while ep_done < ep_len:
            until_log = log_every - done % log_every
            chunk = min(until_log, ep_len - ep_done)
            records = run_episode(learner, bundle.mdp, hdm, x, chunk, rng)
            for record in records:
                ep_return += weight * record.reward
                weight *= config.discount
            x = records[-1].x_next
            done += chunk
            ep_done += chunk
            if on_log is not None and done % log_every == 0:
                on_log(done, learner, ep_return)
    return learner


def _actual_law(bundle: EnvBundle, approach: str, theta_true: float, learner):
    if approach == "baseline_only":
        return mix_law(0.0, bundle.baseline, bundle.baseline)
    recommendation = greedy_policy(learner.q, bundle.mdp.action_mask)
    return mix_law(theta_true, recommendation, bundle.baseline)


def run_convergence(config: ExperimentConfig) -> Iterator[RunRecord]:
    """Stream the adherence-mixed initial-state value along training.

    One row per (seed, learner approach, logging step); a final oracle row per
    seed carries the exact optimal value of the tracked initial state.
    Baseline-only is skipped here since it does not learn.
    """
    bundle = resolve_env(config.env, config.discount)
    wall_ms = 0 if config.deterministic_output else None
    oracle_value = None
    try:
        oracle_value = value_iteration(
            bundle.mdp, bundle.baseline, config.theta_true, tol=1e-9
        ).v_star[bundle.x0]
    except NonConvergenceError:
        pass  # recorded by the CLI manifest; the run itself continues
    for seed in config.seeds:
        for approach in config.approaches:
            if approach == "baseline_only":
                continue
            started = time.perf_counter()
            rows: list[RunRecord] = []

            def log(done, learner, ep_return, approach=approach, seed=seed, rows=rows, started=started):
                rows.append(
                    RunRecord(
                        seed=seed,
                        approach=approach,
                        theta_true=config.theta_true,
                        step=done,
                        tracked_value=learner.mixed_value(bundle.x0),
                        actual_return=ep_return,
                        theta_hat=learner.theta_hat,
                        wall_ms=wall_ms
                        if wall_ms is not None
                        else int(1000 * (time.perf_counter() - started)),
                    )
                )

            train_rng, _ = _run_rng(seed)
            _train(config, bundle, approach, config.theta_true, seed, train_rng, on_log=log)
            yield from rows
        if oracle_value is not None:
            yield RunRecord(
                seed=seed,
                approach=ORACLE_APPROACH,
                theta_true=config.theta_true,
                step=config.steps,
                tracked_value=float(oracle_value),
                actual_return=float(oracle_value),
                theta_hat=config.theta_true,
                wall_ms=0,
            )


_BUNDLE_CACHE: dict = {}


def _cached_bundle(env: str | dict, discount: float) -> EnvBundle:
    key = (json.dumps(env, sort_keys=True) if isinstance(env, dict) else env, discount)
    if key not in _BUNDLE_CACHE:
        _BUNDLE_CACHE[key] = resolve_env(env, discount)
    return _BUNDLE_CACHE[key]


def _comparison_cell(
    config: ExperimentConfig, theta_true: float, seed: int, approach: str
) -> RunRecord:
    """Train (if the approach learns) and score one (theta, seed, approach) cell."""
    started = time.perf_counter()
    bundle = _cached_bundle(config.env, config.discount)
    train_rng, eval_rng = _run_rng(seed)
    if approach == "baseline_only":
        learner = None
        step = 0
        theta_hat = config.theta_prior
    else:
        learner = _train(config, bundle, approach, theta_true, seed, train_rng)
        step = config.steps
        theta_hat = learner.theta_hat
    law = _actual_law(bundle, approach, theta_true, learner)
    exact = float(evaluate_law_exact(bundle.mdp, law)[bundle.x0])
    if config.eval_rollouts > 0:
        returns = [
            rollout_return(bundle.mdp, law, bundle.x0, config.rollout_horizon, eval_rng)
            for _ in range(config.eval_rollouts)
        ]
        actual = float(np.mean(returns))
    else:
        actual = exact
    return RunRecord(
        seed=seed,
        approach=approach,
        theta_true=theta_true,
        step=step,
        tracked_value=exact,
        actual_return=actual,
        theta_hat=theta_hat,
        wall_ms=0
        if config.deterministic_output
        else int(1000 * (time.perf_counter() - started)),
    )


def _comparison_cell_star(args) -> RunRecord:
    return _comparison_cell(*args)


def _run_cells(config: ExperimentConfig, thetas: Iterable[float]) -> Iterator[RunRecord]:
    """Emit comparison cells in (theta, seed, approach) order, fanning seeds
    out across workers when asked; the merge order never depends on workers."""
    tasks = [
        (config, float(theta), seed, approach)
        for theta in thetas
        for seed in config.seeds
        for approach in config.approaches
    ]
    if config.workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            yield _comparison_cell(*task)
        return
    with multiprocessing.Pool(config.workers) as pool:
        yield from pool.imap(_comparison_cell_star, tasks, chunksize=1)


def run_comparison(config: ExperimentConfig) -> Iterator[RunRecord]:
    """Train every requested approach per seed, then score the induced actual
    law exactly (tracked_value) and by Monte Carlo rollouts (actual_return)."""
    if len(config.approaches) < 2:
        raise ValueError("a comparison needs at least two approaches")
    _cached_bundle(config.env, config.discount)  # validate before fanning out
    yield from _run_cells(config, [config.theta_true])


def run_theta_sweep(config: ExperimentConfig) -> Iterator[RunRecord]:
    """Run the comparison across the adherence grid; per grid value the rows
    reproduce run_comparison at that theta bit-exactly for the same seeds."""
    if config.theta_grid is None:
        raise ValueError("theta_grid is required for a sweep")
    _cached_bundle(config.env, config.discount)
    yield from _run_cells(config, config.theta_grid)


def write_csv(records: Iterable[RunRecord], path: str | Path) -> list[RunRecord]:
    """Write records as CSV and return them materialised."""
    materialised = list(records)
    lines = [CSV_HEADER]
    lines.extend(record.csv_row() for record in materialised)
    Path(path).write_text("\n".join(lines) + "\n")
    return materialised


def write_manifest(
    config: ExperimentConfig,
    path: str | Path,
    command: str,
    wall_seconds: float | None = None,
    warnings: list[str] | None = None,
) -> dict:
    from . import __version__

    manifest = {
        "command": command,
        "config": config.to_doc(),
        "config_hash": config.config_hash(),
        "seeds": list(config.seeds),
        "code_version": __version__,
        "stepsize_conditions_satisfied": config.alpha_mode == "polynomial",
        "workers": config.workers,
        "wall_seconds": wall_seconds,
        "warnings": warnings or [],
    }
    Path(path).write_text(json.dumps(manifest, indent=1))
    return manifest


def paired_bootstrap_ci(
    differences: np.ndarray,
    n_boot: int = 10_000,
    confidence: float = 0.95,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of paired differences."""
    differences = np.asarray(differences, dtype=float)
    if differences.size == 0:
        raise ValueError("differences must be non-empty")
    if rng is None:
        rng = np.random.default_rng(0)
    draws = rng.choice(differences, size=(n_boot, differences.size), replace=True)
    means = draws.mean(axis=1)
    tail = (1.0 - confidence) / 2.0
    return float(np.quantile(means, tail)), float(np.quantile(means, 1.0 - tail))
