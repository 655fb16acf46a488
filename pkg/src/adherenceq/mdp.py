"""Finite MDPs, deterministic policies, mixed laws, and policy evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROW_SUM_TOL = 1e-9
EVAL_RESIDUAL_TOL = 1e-9

MDP_FORMAT = "finite-mdp"
MDP_FORMAT_VERSION = 1


class EvaluationError(RuntimeError):
    """Exact policy evaluation failed to reach the residual tolerance."""

    def __init__(self, residual: float):
        super().__init__(
            f"policy evaluation residual {residual:.3e} exceeds {EVAL_RESIDUAL_TOL:.0e}"
        )
        self.residual = residual


def _read_only(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Finite state/action MDP with dense transition and reward tables.

    ``transition[x, u, x']`` is the probability of landing in ``x'`` after
    playing action ``u`` in state ``x``; ``reward[x, u]`` is the immediate
    reward. The optional boolean ``action_mask`` marks which actions are
    admissible in each state: masked actions keep well-formed table rows but
    are excluded from maximisation, sampling, and policies.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    action_mask: np.ndarray | None = None
    state_labels: tuple[str, ...] | None = None
    action_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        transition = _read_only(np.array(self.transition, dtype=float))
        reward = _read_only(np.array(self.reward, dtype=float))
        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise ValueError(
                f"transition must have shape (S, A, S), got {transition.shape}"
            )
        n_states, n_actions, _ = transition.shape
        if reward.shape != (n_states, n_actions):
            raise ValueError(
                f"reward must have shape ({n_states}, {n_actions}), got {reward.shape}"
            )
        if not np.isfinite(reward).all():
            raise ValueError("all rewards must be finite")
        if not np.isfinite(self.discount) or not 0.0 < self.discount < 1.0:
            raise ValueError(
                f"discount must lie strictly inside (0, 1), got {self.discount}"
            )
        if np.any(transition < 0.0):
            x, u, _ = np.argwhere(transition < 0.0)[0]
            raise ValueError(
                f"negative transition probability in row (state {x}, action {u})"
            )
        row_sums = transition.sum(axis=2)
        gap = np.abs(row_sums - 1.0)
        if np.any(gap > ROW_SUM_TOL):
            x, u = np.unravel_index(int(np.argmax(gap)), gap.shape)
            raise ValueError(
                f"transition row (state {x}, action {u}) sums to "
                f"{row_sums[x, u]!r}, expected 1"
            )
        mask = self.action_mask
        if mask is not None:
            mask = _read_only(np.array(mask, dtype=bool))
            if mask.shape != (n_states, n_actions):
                raise ValueError("action_mask shape must match (S, A)")
            if not mask.any(axis=1).all():
                x = int(np.argmin(mask.any(axis=1)))
                raise ValueError(f"state {x} has no admissible action")
        if self.state_labels is not None and len(self.state_labels) != n_states:
            raise ValueError("state_labels length must equal the state count")
        if self.action_labels is not None and len(self.action_labels) != n_actions:
            raise ValueError("action_labels length must equal the action count")
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "action_mask", mask)
        # cumulative rows back inverse-CDF sampling in sample_transition
        object.__setattr__(self, "_cumulative", _read_only(np.cumsum(transition, axis=2)))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def admissible_actions(self, x: int) -> np.ndarray:
        if self.action_mask is None:
            return np.arange(self.n_actions)
        return np.flatnonzero(self.action_mask[x])

    def is_admissible(self, x: int, u: int) -> bool:
        if not (0 <= x < self.n_states and 0 <= u < self.n_actions):
            return False
        return self.action_mask is None or bool(self.action_mask[x, u])

    def validate_policy(self, policy: "DeterministicPolicy", role: str = "policy") -> None:
        """Reject policies that do not cover this MDP or pick masked actions."""
        if policy.n_states != self.n_states:
            raise ValueError(
                f"{role} covers {policy.n_states} states, MDP has {self.n_states}"
            )
        if np.any(policy.actions >= self.n_actions):
            x = int(np.argmax(policy.actions >= self.n_actions))
            raise ValueError(
                f"{role} picks action {policy.actions[x]} at state {x}, "
                f"MDP has only {self.n_actions} actions"
            )
        if self.action_mask is not None:
            chosen = self.action_mask[np.arange(self.n_states), policy.actions]
            if not chosen.all():
                x = int(np.argmin(chosen))
                raise ValueError(
                    f"{role} picks inadmissible action {policy.actions[x]} at state {x}"
                )


@dataclass(frozen=True, eq=False)
class DeterministicPolicy:
    """Total map from state index to action index."""

    actions: np.ndarray

    def __post_init__(self):
        actions = np.array(self.actions, dtype=int)
        if actions.ndim != 1:
            raise ValueError("policy must be a flat state -> action table")
        if actions.size and np.any(actions < 0):
            raise ValueError("action indices must be non-negative")
        object.__setattr__(self, "actions", _read_only(actions))
        # plain-list mirror keeps per-step lookups off the numpy scalar path
        object.__setattr__(self, "_fast", actions.tolist())

    @property
    def n_states(self) -> int:
        return self.actions.shape[0]

    def __call__(self, x: int) -> int:
        return self._fast[x]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DeterministicPolicy):
            return NotImplemented
        return np.array_equal(self.actions, other.actions)

    def __hash__(self) -> int:
        return hash(self.actions.tobytes())


@dataclass(frozen=True, eq=False)
class MixedLaw:
    """Per-state action distribution: the recommended action with probability
    theta, the baseline action otherwise."""

    theta: float
    recommend: DeterministicPolicy
    baseline: DeterministicPolicy

    def action_probs(self, x: int) -> dict[int, float]:
        """Distribution over actions at state x, zero-mass atoms dropped."""
        u_r, u_b = self.recommend(x), self.baseline(x)
        if u_r == u_b:
            return {u_r: 1.0}
        probs = {}
        if self.theta > 0.0:
            probs[u_r] = self.theta
        if self.theta < 1.0:
            probs[u_b] = 1.0 - self.theta
        return probs

    def sample(self, x: int, rng: np.random.Generator) -> int:
        return self.recommend(x) if rng.random() < self.theta else self.baseline(x)


def mix_law(theta: float, g_r: DeterministicPolicy, g_b: DeterministicPolicy) -> MixedLaw:
    """Blend a recommendation policy and a baseline policy into a mixed law."""
    if not np.isfinite(theta) or not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    if g_r.n_states != g_b.n_states:
        raise ValueError(
            f"policies cover different state spaces ({g_r.n_states} vs {g_b.n_states})"
        )
    return MixedLaw(float(theta), g_r, g_b)


def _check_state(mdp: FiniteMdp, x: int) -> None:
    if not 0 <= x < mdp.n_states:
        raise ValueError(f"state index {x} out of range [0, {mdp.n_states})")


def _check_action(mdp: FiniteMdp, x: int, u: int) -> None:
    if not 0 <= u < mdp.n_actions:
        raise ValueError(f"action index {u} out of range [0, {mdp.n_actions})")
    if not mdp.is_admissible(x, u):
        raise ValueError(f"action {u} is not admissible in state {x}")


def sample_transition(
    mdp: FiniteMdp, x: int, u: int, rng: np.random.Generator
) -> tuple[int, float]:
    """Draw the next state for (x, u) and return it with the immediate reward."""
    _check_state(mdp, x)
    _check_action(mdp, x, u)
    cut = rng.random()
    nxt = int(mdp._cumulative[x, u].searchsorted(cut, side="right"))
    return min(nxt, mdp.n_states - 1), float(mdp.reward[x, u])


def law_tables(mdp: FiniteMdp, law: MixedLaw) -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix and reward vector induced by a mixed law."""
    mdp.validate_policy(law.recommend, role="recommendation law")
    mdp.validate_policy(law.baseline, role="baseline law")
    idx = np.arange(mdp.n_states)
    p_r = mdp.transition[idx, law.recommend.actions]
    p_b = mdp.transition[idx, law.baseline.actions]
    r_r = mdp.reward[idx, law.recommend.actions]
    r_b = mdp.reward[idx, law.baseline.actions]
    th = law.theta
    return th * p_r + (1.0 - th) * p_b, th * r_r + (1.0 - th) * r_b


def evaluate_law_exact(mdp: FiniteMdp, law: MixedLaw) -> np.ndarray:
    """Exact discounted value of a mixed law.

    Solves the linear fixed point V = R_law + discount * P_law V directly,
    with iterative refinement until the residual is at most 1e-9. Rewards are
    discounted from weight 1 on the first step.
    """
    p_law, r_law = law_tables(mdp, law)
    system = np.eye(mdp.n_states) - mdp.discount * p_law
    v = np.linalg.solve(system, r_law)
    residual = np.inf
    for _ in range(5):
        defect = r_law - system @ v
        residual = float(np.max(np.abs(defect)))
        if residual <= EVAL_RESIDUAL_TOL:
            return v
        v = v + np.linalg.solve(system, defect)
    raise EvaluationError(residual)


def rollout_return(
    mdp: FiniteMdp,
    law: MixedLaw,
    x0: int,
    horizon: int,
    rng: np.random.Generator,
) -> float:
    """Discounted return of one sampled trajectory truncated at ``horizon`` steps.

    Uses the same discount convention as evaluate_law_exact: the reward of the
    first step enters with weight 1.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    _check_state(mdp, x0)
    total = 0.0
    weight = 1.0
    x = x0
    for _ in range(horizon):
        u = law.sample(x, rng)
        x_next, r = sample_transition(mdp, x, u, rng)
        total += weight * r
        weight *= mdp.discount
        x = x_next
    return total


def greedy_policy(q: np.ndarray, action_mask: np.ndarray | None = None) -> DeterministicPolicy:
    """Arg-max policy of a Q table; ties break toward the lowest action index."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2:
        raise ValueError(f"Q table must be 2-d, got shape {q.shape}")
    if not np.isfinite(q).all():
        raise ValueError("Q table must be finite")
    scores = q if action_mask is None else np.where(action_mask, q, -np.inf)
    return DeterministicPolicy(np.argmax(scores, axis=1))


def mdp_to_doc(mdp: FiniteMdp) -> dict:
    """Plain-data interchange document for an MDP."""
    doc: dict = {
        "format": MDP_FORMAT,
        "version": MDP_FORMAT_VERSION,
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "discount": mdp.discount,
        "reward": mdp.reward.tolist(),
        "transition": mdp.transition.tolist(),
    }
    if mdp.action_mask is not None:
        doc["action_mask"] = mdp.action_mask.tolist()
    if mdp.state_labels is not None:
        doc["state_labels"] = list(mdp.state_labels)
    if mdp.action_labels is not None:
        doc["action_labels"] = list(mdp.action_labels)
    return doc


def mdp_from_doc(doc: dict) -> FiniteMdp:
    """Build and validate an MDP from its interchange document."""
    if not isinstance(doc, dict):
        raise ValueError("MDP document must be a mapping")
    if doc.get("format") != MDP_FORMAT:
        raise ValueError(f"unsupported document format {doc.get('format')!r}")
    if doc.get("version") != MDP_FORMAT_VERSION:
        raise ValueError(f"unsupported document version {doc.get('version')!r}")
    for key in ("n_states", "n_actions", "discount", "reward", "transition"):
        if key not in doc:
            raise ValueError(f"MDP document is missing field {key!r}")
    mdp = FiniteMdp(
        transition=np.array(doc["transition"], dtype=float),
        reward=np.array(doc["reward"], dtype=float),
        discount=float(doc["discount"]),
        action_mask=(
            np.array(doc["action_mask"], dtype=bool) if "action_mask" in doc else None
        ),
        state_labels=tuple(doc["state_labels"]) if "state_labels" in doc else None,
        action_labels=tuple(doc["action_labels"]) if "action_labels" in doc else None,
    )
    if mdp.n_states != int(doc["n_states"]) or mdp.n_actions != int(doc["n_actions"]):
        raise ValueError(
            "declared state/action counts do not match the table shapes "
            f"({doc['n_states']}x{doc['n_actions']} vs "
            f"{mdp.n_states}x{mdp.n_actions})"
        )
    return mdp


def save_mdp(mdp: FiniteMdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mdp_to_doc(mdp)))


def load_mdp(path: str | Path) -> FiniteMdp:
    return mdp_from_doc(json.loads(Path(path).read_text()))
