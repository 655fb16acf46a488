"""Adherence-aware tabular Q-learning and the simulated decision-maker."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .adherence import (
    AdherenceEstimate,
    AdherenceObservation,
    classify_action,
    observe,
)
from .mdp import DeterministicPolicy, FiniteMdp, sample_transition

MODES = ("adherence_aware", "classical")
ALPHA_MODES = ("constant", "polynomial")

SNAPSHOT_FORMAT = "learner-snapshot"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class LearnerConfig:
    """Hyper-parameters of a learning session.

    ``alpha`` is the fixed step size in constant mode; in polynomial mode it is
    the decay exponent omega, giving step size 1 / (1 + n)**omega for the
    (n+1)-th visit of a state-action pair. Constant mode keeps its square-sum
    divergent, so runs flag it via ``satisfies_stepsize_conditions``.
    """

    discount: float
    baseline: DeterministicPolicy
    mode: str = "adherence_aware"
    alpha_mode: str = "polynomial"
    alpha: float = 0.85
    epsilon: float = 0.1
    epsilon_decay_steps: int | None = None
    initial_q: float = 0.0
    theta_prior: float = 0.5
    pin_theta_hat: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValueError(
                f"alpha_mode must be one of {ALPHA_MODES}, got {self.alpha_mode!r}"
            )
        if self.alpha_mode == "constant" and not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"constant step size must lie in (0, 1], got {self.alpha}")
        if self.alpha_mode == "polynomial" and not 0.5 < self.alpha <= 1.0:
            raise ValueError(
                f"polynomial decay exponent must lie in (0.5, 1], got {self.alpha}"
            )
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.epsilon_decay_steps is not None and self.epsilon_decay_steps < 1:
            raise ValueError("epsilon_decay_steps must be at least 1")
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie strictly inside (0, 1), got {self.discount}")
        if not 0.0 <= self.theta_prior <= 1.0:
            raise ValueError(f"theta_prior must lie in [0, 1], got {self.theta_prior}")
        if self.pin_theta_hat is not None and not 0.0 <= self.pin_theta_hat <= 1.0:
            raise ValueError(f"pin_theta_hat must lie in [0, 1], got {self.pin_theta_hat}")
        if not math.isfinite(self.initial_q):
            raise ValueError("initial_q must be finite")

    @property
    def satisfies_stepsize_conditions(self) -> bool:
        """True when the step-size sum diverges while its square-sum converges."""
        return self.alpha_mode == "polynomial"

    def epsilon_at(self, step: int) -> float:
        if self.epsilon_decay_steps is None:
            return self.epsilon
        return self.epsilon / (1.0 + step / self.epsilon_decay_steps)

    def to_doc(self) -> dict:
        return {
            "discount": self.discount,
            "baseline": self.baseline.actions.tolist(),
            "mode": self.mode,
            "alpha_mode": self.alpha_mode,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "epsilon_decay_steps": self.epsilon_decay_steps,
            "initial_q": self.initial_q,
            "theta_prior": self.theta_prior,
            "pin_theta_hat": self.pin_theta_hat,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "LearnerConfig":
        data = dict(doc)
        data["baseline"] = DeterministicPolicy(np.array(data["baseline"], dtype=int))
        return cls(**data)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_doc(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


class AdherenceLearner:
    """Tabular learner holding a Q table, visit counts, and the running
    adherence estimate. One learner instance belongs to one session."""

    def __init__(
        self,
        n_states: int,
        n_actions: int,
        config: LearnerConfig,
        action_mask: np.ndarray | None = None,
    ):
        if config.baseline.n_states != n_states:
            raise ValueError(
                f"baseline covers {config.baseline.n_states} states, expected {n_states}"
            )
        if np.any(config.baseline.actions >= n_actions):
            raise ValueError("baseline picks an action outside the action space")
        if action_mask is None:
            admissible = [np.arange(n_actions)] * n_states
        else:
            action_mask = np.asarray(action_mask, dtype=bool)
            admissible = [np.flatnonzero(action_mask[x]) for x in range(n_states)]
            for x, adm in enumerate(admissible):
                if adm.size == 0:
                    raise ValueError(f"state {x} has no admissible action")
                if not action_mask[x, config.baseline(x)]:
                    raise ValueError(f"baseline picks a masked action at state {x}")
        self.config = config
        self.q = np.full((n_states, n_actions), float(config.initial_q))
        self.visits = np.zeros((n_states, n_actions), dtype=np.int64)
        self.adherence = AdherenceEstimate(prior=config.theta_prior)
        self.step = 0
        self._admissible = admissible
        # admissible sets are usually leading prefixes; slices beat fancy indexing
        self._prefix = [
            adm.size if adm.size == adm[-1] + 1 else 0 for adm in admissible
        ]

    @classmethod
    def for_mdp(cls, mdp: FiniteMdp, config: LearnerConfig) -> "AdherenceLearner":
        return cls(mdp.n_states, mdp.n_actions, config, mdp.action_mask)

    @property
    def n_states(self) -> int:
        return self.q.shape[0]

    @property
    def n_actions(self) -> int:
        return self.q.shape[1]

    @property
    def theta_hat(self) -> float:
        return self.adherence.theta_hat

    @property
    def effective_theta_hat(self) -> float:
        """Estimate used in backups; a pinned value overrides the running one."""
        pin = self.config.pin_theta_hat
        return pin if pin is not None else self.adherence.theta_hat

    def admissible_actions(self, x: int) -> np.ndarray:
        return self._admissible[x]

    def greedy(self, x: int) -> int:
        k = self._prefix[x]
        if k:
            return int(self.q[x, :k].argmax())
        adm = self._admissible[x]
        return int(adm[self.q[x, adm].argmax()])

    def recommend(self, x: int, rng: np.random.Generator) -> int:
        """Epsilon-greedy recommendation over the admissible actions at x."""
        if not 0 <= x < self.n_states:
            raise ValueError(f"state index {x} out of range")
        if rng.random() < self.config.epsilon_at(self.step):
            adm = self._admissible[x]
            return int(adm[rng.integers(adm.size)])
        return self.greedy(x)

    def alpha_for(self, x: int, u: int) -> float:
        cfg = self.config
        if cfg.alpha_mode == "constant":
            return cfg.alpha
        return 1.0 / (1.0 + int(self.visits[x, u])) ** cfg.alpha

    def _best_value(self, x: int) -> float:
        k = self._prefix[x]
        if k:
            return float(self.q[x, :k].max())
        return float(self.q[x, self._admissible[x]].max())

    def mixed_value(self, x: int) -> float:
        """Adherence-mixed state value implied by the current table."""
        th = self.effective_theta_hat
        best = self._best_value(x)
        if th == 1.0:
            return best
        base = float(self.q[x, self.config.baseline(x)])
        if th == 0.0:
            return base
        return th * best + (1.0 - th) * base

    def update(
        self,
        x: int,
        u: int,
        reward: float,
        x_next: int,
        obs: AdherenceObservation,
    ) -> None:
        """One temporal-difference update of the implemented action's cell.

        The adherence estimate absorbs the observation first, so the backup
        sees the post-observation value. Classical mode ignores the estimate
        and backs up the plain optimality target.
        """
        if not (0 <= x < self.n_states and 0 <= x_next < self.n_states):
            raise ValueError(f"state index out of range: x={x}, x_next={x_next}")
        if not 0 <= u < self.n_actions:
            raise ValueError(f"action index {u} out of range")
        if not math.isfinite(reward):
            raise ValueError(f"reward must be finite, got {reward}")
        self.adherence = observe(self.adherence, obs)
        cfg = self.config
        best = self._best_value(x_next)
        if cfg.mode == "classical":
            future = best
        else:
            th = self.effective_theta_hat
            if th == 1.0:
                future = best
            elif th == 0.0:
                future = float(self.q[x_next, cfg.baseline(x_next)])
            else:
                base = float(self.q[x_next, cfg.baseline(x_next)])
                future = th * best + (1.0 - th) * base
        target = reward + cfg.discount * future
        step_size = self.alpha_for(x, u)
        self.q[x, u] += step_size * (target - self.q[x, u])
        self.visits[x, u] += 1
        self.step += 1


@dataclass(frozen=True)
class SimulatedHdm:
    """Bernoulli decision-maker: implements the recommendation with
    probability theta_true, the baseline action otherwise."""

    theta_true: float
    baseline: DeterministicPolicy

    def __post_init__(self):
        if not 0.0 <= self.theta_true <= 1.0:
            raise ValueError(f"theta_true must lie in [0, 1], got {self.theta_true}")

    def choose(self, x: int, u_r: int, rng: np.random.Generator) -> int:
        return u_r if rng.random() < self.theta_true else self.baseline(x)


class ScriptedHdm:
    """Plays back a fixed choice script; used by replays and live-session tests.

    Script entries are "adhere", "baseline", or a raw action index.
    """

    def __init__(self, baseline: DeterministicPolicy, script):
        self.baseline = baseline
        self.script = list(script)
        self.cursor = 0

    def choose(self, x: int, u_r: int, rng: np.random.Generator) -> int:
        if self.cursor >= len(self.script):
            raise ValueError("choice script exhausted")
        entry = self.script[self.cursor]
        self.cursor += 1
        if entry == "adhere":
            return u_r
        if entry == "baseline":
            return self.baseline(x)
        return int(entry)


class StepRecord(NamedTuple):
    x: int
    u_r: int
    u: int
    reward: float
    x_next: int
    observation: AdherenceObservation
    theta_hat: float


def run_episode(
    learner: AdherenceLearner,
    mdp: FiniteMdp,
    hdm,
    x0: int,
    steps: int,
    rng: np.random.Generator,
) -> list[StepRecord]:
    """Drive one learning episode and return its trajectory.

    Per step: recommend, let the decision-maker pick the implemented action,
    step the environment, classify adherence, update the learner. The learner
    is mutated in place; records carry the post-update adherence estimate.
    """
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    x = x0
    trajectory: list[StepRecord] = []
    for _ in range(steps):
        u_r = learner.recommend(x, rng)
        u = hdm.choose(x, u_r, rng)
        x_next, r = sample_transition(mdp, x, u, rng)
        obs = classify_action(u, u_r, learner.config.baseline(x))
        learner.update(x, u, r, x_next, obs)
        trajectory.append(StepRecord(x, u_r, u, r, x_next, obs, learner.theta_hat))
        x = x_next
    return trajectory


def snapshot_doc(learner: AdherenceLearner) -> dict:
    """Versioned plain-data snapshot of a learner; round-trips bit-exactly."""
    return {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "config": learner.config.to_doc(),
        "config_hash": learner.config.config_hash(),
        "n_states": learner.n_states,
        "n_actions": learner.n_actions,
        "q": learner.q.tolist(),
        "visits": learner.visits.tolist(),
        "adherence": {
            "adhered": learner.adherence.adhered,
            "n": learner.adherence.n,
            "prior": learner.adherence.prior,
        },
        "step": learner.step,
    }


def learner_from_snapshot(doc: dict, action_mask: np.ndarray | None = None) -> AdherenceLearner:
    if doc.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"unsupported snapshot format {doc.get('format')!r}")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {doc.get('version')!r}")
    config = LearnerConfig.from_doc(doc["config"])
    if doc.get("config_hash") != config.config_hash():
        raise ValueError("snapshot config hash does not match its config")
    learner = AdherenceLearner(
        int(doc["n_states"]), int(doc["n_actions"]), config, action_mask
    )
    q = np.array(doc["q"], dtype=float)
    visits = np.array(doc["visits"], dtype=np.int64)
    if q.shape != learner.q.shape or visits.shape != learner.visits.shape:
        raise ValueError("snapshot table shapes do not match the declared sizes")
    learner.q = q
    learner.visits = visits
    adh = doc["adherence"]
    learner.adherence = AdherenceEstimate(
        adhered=int(adh["adhered"]), n=int(adh["n"]), prior=float(adh["prior"])
    )
    learner.step = int(doc["step"])
    return learner


def save_snapshot(learner: AdherenceLearner, path: str | Path) -> None:
    Path(path).write_text(json.dumps(snapshot_doc(learner)))


def load_snapshot(path: str | Path, action_mask: np.ndarray | None = None) -> AdherenceLearner:
    return learner_from_snapshot(json.loads(Path(path).read_text()), action_mask)
