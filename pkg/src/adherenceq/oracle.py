"""Exact adherence-aware dynamic programming: the mixed backup operator,
value iteration to its fixed point, and an empirical contraction probe."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import DeterministicPolicy, FiniteMdp, greedy_policy


class NonConvergenceError(RuntimeError):
    """Value iteration ran out of sweeps before reaching its tolerance."""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"no convergence within {iterations} sweeps (last change {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True, eq=False)
class OracleSolution:
    """Fixed point of the adherence-aware backup plus derived artefacts.

    ``v_star`` is the optimal mixed state value, ``q_star`` its one-step
    lookahead table (the target the online learner approximates), and
    ``g_r_star`` the greedy recommendation policy of ``q_star``.
    """

    v_star: np.ndarray
    q_star: np.ndarray
    g_r_star: DeterministicPolicy
    iterations: int
    residual: float
    theta: float


def _check_inputs(mdp: FiniteMdp, g_b: DeterministicPolicy, theta: float) -> None:
    mdp.validate_policy(g_b, role="baseline law")
    if not np.isfinite(theta) or not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")


def _mix_states(
    mdp: FiniteMdp, g_b: DeterministicPolicy, theta: float, lookahead: np.ndarray
) -> np.ndarray:
    """Blend the best admissible lookahead with the baseline's at every state."""
    if mdp.action_mask is None:
        best = lookahead.max(axis=1)
    else:
        best = np.where(mdp.action_mask, lookahead, -np.inf).max(axis=1)
    base = lookahead[np.arange(mdp.n_states), g_b.actions]
    return theta * best + (1.0 - theta) * base


def _backup_values(
    mdp: FiniteMdp, g_b: DeterministicPolicy, theta: float, q: np.ndarray
) -> np.ndarray:
    """State values of one adherence-aware backup applied to a full Q table."""
    lookahead = mdp.reward + mdp.discount * np.einsum(
        "xas,sa->xa", mdp.transition, q
    )
    return _mix_states(mdp, g_b, theta, lookahead)


def apply_operator(
    mdp: FiniteMdp, g_b: DeterministicPolicy, theta: float, q: np.ndarray
) -> np.ndarray:
    """One adherence-aware backup of a Q table.

    The backup value depends only on the state, so the result is replicated
    across the action axis to keep the operator a map between Q-shaped tables.
    """
    _check_inputs(mdp, g_b, theta)
    q = np.asarray(q, dtype=float)
    if q.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"Q table shape {q.shape} does not match the MDP")
    if not np.isfinite(q).all():
        raise ValueError("Q table must be finite")
    values = _backup_values(mdp, g_b, theta, q)
    return np.repeat(values[:, None], mdp.n_actions, axis=1)


def value_iteration(
    mdp: FiniteMdp,
    g_b: DeterministicPolicy,
    theta: float,
    tol: float = 1e-9,
    max_iter: int = 100_000,
    q0: np.ndarray | None = None,
) -> OracleSolution:
    """Iterate the adherence-aware backup to its fixed point.

    Stops once the sup-norm change of a sweep drops to
    tol * (1 - discount) / discount, which bounds the distance to the true
    fixed point by tol. Starts from the all-zero table unless ``q0`` is given.
    """
    _check_inputs(mdp, g_b, theta)
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    threshold = tol * (1.0 - mdp.discount) / mdp.discount
    iterations = 0
    if q0 is None:
        v = np.zeros(mdp.n_states)
    else:
        q0 = np.asarray(q0, dtype=float)
        if q0.shape != (mdp.n_states, mdp.n_actions):
            raise ValueError(f"q0 shape {q0.shape} does not match the MDP")
        v = _backup_values(mdp, g_b, theta, q0)
        iterations = 1
    residual = np.inf
    converged = False
    while iterations < max_iter:
        # with replicated tables the backup reduces to a state-value sweep
        lookahead = mdp.reward + mdp.discount * (mdp.transition @ v)
        v_next = _mix_states(mdp, g_b, theta, lookahead)
        residual = float(np.max(np.abs(v_next - v)))
        v = v_next
        iterations += 1
        if residual <= threshold:
            converged = True
            break
    if not converged:
        raise NonConvergenceError(iterations, residual)
    q_star = mdp.reward + mdp.discount * (mdp.transition @ v)
    return OracleSolution(
        v_star=v,
        q_star=q_star,
        g_r_star=greedy_policy(q_star, mdp.action_mask),
        iterations=iterations,
        residual=residual,
        theta=float(theta),
    )


def contraction_modulus(
    mdp: FiniteMdp,
    g_b: DeterministicPolicy,
    theta: float,
    trials: int,
    rng: np.random.Generator,
) -> float:
    """Empirical contraction factor of the backup over random table pairs.

    Samples bounded pairs (q1, q2) and returns the largest observed ratio
    of output to input sup-norm distance; identical pairs contribute nothing.
    """
    _check_inputs(mdp, g_b, theta)
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    bound = 1.0 + float(np.max(np.abs(mdp.reward))) / (1.0 - mdp.discount)
    shape = (mdp.n_states, mdp.n_actions)
    worst = 0.0
    for _ in range(trials):
        q1 = rng.uniform(-bound, bound, size=shape)
        q2 = rng.uniform(-bound, bound, size=shape)
        gap = float(np.max(np.abs(q1 - q2)))
        if gap == 0.0:
            continue
        out = float(
            np.max(
                np.abs(
                    _backup_values(mdp, g_b, theta, q1)
                    - _backup_values(mdp, g_b, theta, q2)
                )
            )
        )
        worst = max(worst, out / gap)
    return worst
