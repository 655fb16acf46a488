import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adherenceq.envs import build_machine_replacement
from adherenceq.mdp import DeterministicPolicy, FiniteMdp, evaluate_law_exact, mix_law
from adherenceq.oracle import (
    NonConvergenceError,
    apply_operator,
    contraction_modulus,
    value_iteration,
)


def random_mdp(seed, n_states=None, n_actions=None, discount=None):
    rng = np.random.default_rng(seed)
    n_states = n_states or int(rng.integers(2, 7))
    n_actions = n_actions or int(rng.integers(2, 5))
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    reward = rng.uniform(-10, 10, size=(n_states, n_actions))
    discount = discount or float(rng.uniform(0.3, 0.97))
    baseline = DeterministicPolicy(rng.integers(0, n_actions, size=n_states))
    return FiniteMdp(transition, reward, discount), baseline


def brute_force_backup(mdp, g_b, theta, q):
    # literal enumeration over next states and candidate recommendations
    out = np.empty((mdp.n_states, mdp.n_actions))
    for x in range(mdp.n_states):
        candidates = []
        for u_r in range(mdp.n_actions):
            total = 0.0
            for x_next in range(mdp.n_states):
                total += mdp.transition[x, u_r, x_next] * (
                    mdp.reward[x, u_r] + mdp.discount * q[x_next, u_r]
                )
            candidates.append(total)
        u_b = g_b(x)
        base = 0.0
        for x_next in range(mdp.n_states):
            base += mdp.transition[x, u_b, x_next] * (
                mdp.reward[x, u_b] + mdp.discount * q[x_next, u_b]
            )
        out[x, :] = theta * max(candidates) + (1 - theta) * base
    return out


def test_operator_matches_brute_force_enumeration():
    mdp, g_b = random_mdp(3, n_states=2, n_actions=2)
    q = np.random.default_rng(5).normal(size=(2, 2))
    expected = brute_force_backup(mdp, g_b, 0.7, q)
    np.testing.assert_allclose(apply_operator(mdp, g_b, 0.7, q), expected, atol=1e-12)


def test_operator_theta_zero_is_the_baseline_evaluation_backup():
    mdp, g_b = random_mdp(11)
    q = np.random.default_rng(2).normal(size=(mdp.n_states, mdp.n_actions))
    idx = np.arange(mdp.n_states)
    backup = mdp.reward[idx, g_b.actions] + mdp.discount * np.einsum(
        "xs,sx->x", mdp.transition[idx, g_b.actions], q[:, g_b.actions]
    )
    got = apply_operator(mdp, g_b, 0.0, q)
    np.testing.assert_allclose(got, np.repeat(backup[:, None], mdp.n_actions, axis=1), atol=1e-12)


def test_operator_theta_one_is_the_optimality_backup():
    mdp, g_b = random_mdp(13)
    q = np.random.default_rng(4).normal(size=(mdp.n_states, mdp.n_actions))
    lookahead = mdp.reward + mdp.discount * np.einsum("xas,sa->xa", mdp.transition, q)
    got = apply_operator(mdp, g_b, 1.0, q)
    np.testing.assert_allclose(got[:, 0], lookahead.max(axis=1), atol=1e-12)


def test_operator_output_constant_across_actions():
    mdp, g_b = random_mdp(8)
    q = np.random.default_rng(1).normal(size=(mdp.n_states, mdp.n_actions))
    out = apply_operator(mdp, g_b, 0.4, q)
    assert np.all(out == out[:, [0]])


def test_operator_rejects_bad_inputs():
    mdp, g_b = random_mdp(6)
    good = np.zeros((mdp.n_states, mdp.n_actions))
    with pytest.raises(ValueError, match="theta"):
        apply_operator(mdp, g_b, 1.2, good)
    with pytest.raises(ValueError, match="shape"):
        apply_operator(mdp, g_b, 0.5, np.zeros((1, 1)))
    with pytest.raises(ValueError, match="finite"):
        apply_operator(mdp, g_b, 0.5, np.full_like(good, np.nan))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), theta=st.floats(0, 1, allow_nan=False))
def test_contraction_property(seed, theta):
    mdp, g_b = random_mdp(seed)
    rng = np.random.default_rng(seed + 1)
    shape = (mdp.n_states, mdp.n_actions)
    q1, q2 = rng.uniform(-50, 50, shape), rng.uniform(-50, 50, shape)
    lhs = np.max(np.abs(apply_operator(mdp, g_b, theta, q1) - apply_operator(mdp, g_b, theta, q2)))
    rhs = mdp.discount * np.max(np.abs(q1 - q2))
    assert lhs <= rhs + 1e-9


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), theta=st.floats(0, 1, allow_nan=False))
def test_monotonicity_property(seed, theta):
    mdp, g_b = random_mdp(seed)
    rng = np.random.default_rng(seed + 2)
    shape = (mdp.n_states, mdp.n_actions)
    q1 = rng.uniform(-20, 20, shape)
    q2 = q1 + rng.uniform(0, 10, shape)
    out1 = apply_operator(mdp, g_b, theta, q1)
    out2 = apply_operator(mdp, g_b, theta, q2)
    assert np.all(out1 <= out2 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 100_000),
    theta=st.floats(0, 1, allow_nan=False),
    shift=st.floats(-100, 100, allow_nan=False),
)
def test_constant_shift_law(seed, theta, shift):
    mdp, g_b = random_mdp(seed)
    q = np.random.default_rng(seed + 3).uniform(-20, 20, (mdp.n_states, mdp.n_actions))
    shifted = apply_operator(mdp, g_b, theta, q + shift)
    expected = apply_operator(mdp, g_b, theta, q) + mdp.discount * shift
    np.testing.assert_allclose(shifted, expected, atol=1e-9)


def test_value_iteration_single_state_geometric():
    mdp = FiniteMdp(np.ones((1, 1, 1)), np.array([[1.0]]), 0.9)
    g_b = DeterministicPolicy([0])
    for theta in (0.0, 0.3, 1.0):
        solution = value_iteration(mdp, g_b, theta, tol=1e-9)
        assert solution.v_star[0] == pytest.approx(10.0, abs=1e-8)


def test_value_iteration_theta_zero_equals_baseline_evaluation():
    mdp, g_b = build_machine_replacement()
    solution = value_iteration(mdp, g_b, 0.0, tol=1e-8)
    exact = evaluate_law_exact(mdp, mix_law(0.0, g_b, g_b))
    np.testing.assert_allclose(solution.v_star, exact, atol=1e-6)


def test_more_adherence_cannot_hurt():
    mdp, g_b = build_machine_replacement()
    v_full = value_iteration(mdp, g_b, 1.0, tol=1e-8).v_star
    v_none = value_iteration(mdp, g_b, 0.0, tol=1e-8).v_star
    assert np.all(v_full >= v_none - 1e-8)


def test_value_iteration_solution_invariants():
    mdp, g_b = build_machine_replacement()
    solution = value_iteration(mdp, g_b, 0.7, tol=1e-9)
    # greedy policy of q_star is the stored recommendation
    assert solution.g_r_star == DeterministicPolicy(np.argmax(solution.q_star, axis=1))
    # q_star is the one-step lookahead of v_star
    lookahead = mdp.reward + mdp.discount * (mdp.transition @ solution.v_star)
    np.testing.assert_allclose(solution.q_star, lookahead, atol=1e-12)
    # and v_star is the theta-mix of q_star
    mixed = 0.7 * solution.q_star.max(axis=1) + 0.3 * solution.q_star[
        np.arange(10), g_b.actions
    ]
    np.testing.assert_allclose(solution.v_star, mixed, atol=1e-6)


def test_value_iteration_non_convergence_error():
    mdp, g_b = build_machine_replacement()
    with pytest.raises(NonConvergenceError) as info:
        value_iteration(mdp, g_b, 0.7, tol=1e-9, max_iter=3)
    assert info.value.residual > 0


def test_fixed_point_independent_of_initialization():
    mdp, g_b = build_machine_replacement()
    tol = 1e-6
    from_zero = value_iteration(mdp, g_b, 0.7, tol=tol)
    q0 = np.random.default_rng(11).uniform(-100, 100, size=(10, 2))
    from_random = value_iteration(mdp, g_b, 0.7, tol=tol, q0=q0)
    assert np.max(np.abs(from_zero.q_star - from_random.q_star)) <= 2 * tol


def test_contraction_modulus_constant_shift_pair_reaches_discount():
    # a constant-shift pair realizes the modulus exactly, so the empirical
    # value over random pairs must stay at or below the discount
    mdp, g_b = build_machine_replacement()
    q = np.zeros((10, 2))
    shifted = apply_operator(mdp, g_b, 0.7, q + 5.0) - apply_operator(mdp, g_b, 0.7, q)
    np.testing.assert_allclose(shifted, 0.9 * 5.0, atol=1e-9)
    modulus = contraction_modulus(mdp, g_b, 0.7, 200, np.random.default_rng(0))
    assert modulus <= 0.9 + 1e-9


def test_contraction_modulus_needs_trials():
    mdp, g_b = build_machine_replacement()
    with pytest.raises(ValueError, match="trials"):
        contraction_modulus(mdp, g_b, 0.7, 0, np.random.default_rng(0))
