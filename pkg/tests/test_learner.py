import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adherenceq.adherence import AdherenceObservation
from adherenceq.envs import build_machine_replacement
from adherenceq.learner import (
    AdherenceLearner,
    LearnerConfig,
    ScriptedHdm,
    SimulatedHdm,
    learner_from_snapshot,
    load_snapshot,
    run_episode,
    save_snapshot,
    snapshot_doc,
)
from adherenceq.mdp import DeterministicPolicy

ADHERED = AdherenceObservation.ADHERED
DEVIATED = AdherenceObservation.DEVIATED
UNINFORMATIVE = AdherenceObservation.UNINFORMATIVE


def config(n_states=3, **overrides):
    fields = dict(
        discount=0.9,
        baseline=DeterministicPolicy(np.zeros(n_states, dtype=int)),
        alpha_mode="constant",
        alpha=0.9,
        epsilon=0.1,
    )
    fields.update(overrides)
    return LearnerConfig(**fields)


def learner(n_states=3, n_actions=4, **overrides):
    return AdherenceLearner(n_states, n_actions, config(n_states, **overrides))


def test_config_validation():
    with pytest.raises(ValueError, match="mode"):
        config(mode="other")
    with pytest.raises(ValueError, match="constant step size"):
        config(alpha_mode="constant", alpha=1.5)
    with pytest.raises(ValueError, match="decay exponent"):
        config(alpha_mode="polynomial", alpha=0.4)
    with pytest.raises(ValueError, match="epsilon"):
        config(epsilon=-0.2)


def test_stepsize_conditions_flag():
    assert config(alpha_mode="polynomial", alpha=0.85).satisfies_stepsize_conditions
    assert not config(alpha_mode="constant", alpha=0.9).satisfies_stepsize_conditions


def test_recommend_greedy_when_epsilon_zero():
    lrn = learner(epsilon=0.0)
    lrn.q[1] = [0.0, 7.0, 0.0, 0.0]
    rng = np.random.default_rng(0)
    assert all(lrn.recommend(1, rng) == 1 for _ in range(20))


def test_recommend_uniform_when_epsilon_one():
    lrn = AdherenceLearner(
        1, 2, config(n_states=1, epsilon=1.0, baseline=DeterministicPolicy([0]))
    )
    rng = np.random.default_rng(31)
    draws = 10_000
    picks = np.array([lrn.recommend(0, rng) for _ in range(draws)])
    freq = np.bincount(picks, minlength=2) / draws
    assert np.all(np.abs(freq - 0.5) < 0.02)


def test_recommend_explores_admissible_actions_only():
    cfg = config(n_states=2, epsilon=1.0, baseline=DeterministicPolicy([0, 0]))
    lrn = AdherenceLearner(2, 3, cfg, action_mask=[[True, True, False], [True, False, False]])
    rng = np.random.default_rng(5)
    assert all(lrn.recommend(1, rng) == 0 for _ in range(20))
    assert set(lrn.recommend(0, rng) for _ in range(200)) == {0, 1}


def test_alpha_schedules():
    constant = learner(alpha_mode="constant", alpha=0.9)
    assert constant.alpha_for(0, 0) == 0.9

    poly = learner(alpha_mode="polynomial", alpha=1.0)
    assert poly.alpha_for(0, 0) == 1.0

    poly85 = learner(alpha_mode="polynomial", alpha=0.85)
    poly85.visits[0, 0] = 3
    assert poly85.alpha_for(0, 0) == pytest.approx(4.0**-0.85)


def test_update_from_zero_init_takes_alpha_fraction_of_reward():
    lrn = learner()
    lrn.update(0, 2, 20.0, 1, ADHERED)
    assert lrn.q[0, 2] == pytest.approx(0.9 * 20.0)
    assert lrn.visits[0, 2] == 1
    assert lrn.step == 1


def test_update_applies_observation_before_backup():
    lrn = learner(n_actions=2)
    # next-state values that distinguish max (u=1) from the baseline cell (u=0)
    lrn.q[1] = [0.0, 10.0]
    lrn.update(0, 1, 0.0, 1, ADHERED)
    # estimate becomes 1/1, so the target is the pure optimality backup
    assert lrn.q[0, 1] == pytest.approx(0.9 * (0.0 + 0.9 * 10.0))


def test_pinned_theta_matches_classical_target():
    pinned = learner(pin_theta_hat=1.0)
    classical = learner(mode="classical")
    for lrn in (pinned, classical):
        lrn.q[2] = [1.0, 5.0, 2.0, 0.0]
        lrn.update(0, 1, 3.0, 2, DEVIATED)
    assert pinned.q[0, 1] == classical.q[0, 1]


def test_pinned_zero_backs_up_the_baseline_cell():
    lrn = learner(pin_theta_hat=0.0)
    lrn.q[2] = [1.0, 5.0, 2.0, 0.0]
    lrn.update(0, 1, 3.0, 2, DEVIATED)
    # baseline action is 0, so the target is r + discount * q[2, 0]
    assert lrn.q[0, 1] == pytest.approx(0.9 * (3.0 + 0.9 * 1.0))


def test_update_rejects_bad_inputs():
    lrn = learner()
    with pytest.raises(ValueError, match="reward"):
        lrn.update(0, 0, np.nan, 1, ADHERED)
    with pytest.raises(ValueError, match="state index"):
        lrn.update(9, 0, 0.0, 1, ADHERED)
    with pytest.raises(ValueError, match="action index"):
        lrn.update(0, 9, 0.0, 1, ADHERED)


@settings(max_examples=120, deadline=None)
@given(
    theta=st.floats(0, 1, allow_nan=False),
    reward=st.floats(-50, 50, allow_nan=False),
    seed=st.integers(0, 9999),
)
def test_target_algebra_three_term_vs_simplified(theta, reward, seed):
    rng = np.random.default_rng(seed)
    q_next = rng.uniform(-100, 100, size=4)
    best = q_next.max()
    base = q_next[0]
    lam = 0.9
    three_term = theta * (reward + lam * best) + (1 - theta) * (reward + lam * base)
    simplified = reward + lam * (theta * best + (1 - theta) * base)
    assert three_term == pytest.approx(simplified, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 9999))
def test_updates_stay_inside_reward_bounds(seed):
    rng = np.random.default_rng(seed)
    r_min, r_max = -5.0, 20.0
    lam = 0.9
    lo, hi = r_min / (1 - lam), r_max / (1 - lam)
    lrn = learner(n_states=3, n_actions=4, initial_q=float(rng.uniform(lo, hi)))
    for _ in range(60):
        x, u, x_next = rng.integers(3), rng.integers(4), rng.integers(3)
        r = float(rng.uniform(r_min, r_max))
        obs = [ADHERED, DEVIATED, UNINFORMATIVE][rng.integers(3)]
        lrn.update(int(x), int(u), r, int(x_next), obs)
        assert np.all((lrn.q >= lo - 1e-9) & (lrn.q <= hi + 1e-9))
        assert np.isfinite(lrn.q).all()


def test_visit_counts_sum_equals_steps():
    lrn = learner()
    rng = np.random.default_rng(0)
    for _ in range(37):
        lrn.update(int(rng.integers(3)), int(rng.integers(4)), 1.0, int(rng.integers(3)), ADHERED)
    assert lrn.visits.sum() == lrn.step == 37


def test_run_episode_full_adherence_implements_recommendations():
    mdp, g_b = build_machine_replacement()
    lrn = AdherenceLearner.for_mdp(mdp, config(n_states=10, baseline=g_b))
    hdm = SimulatedHdm(1.0, g_b)
    trajectory = run_episode(lrn, mdp, hdm, 0, 200, np.random.default_rng(3))
    assert all(record.u == record.u_r for record in trajectory)


def test_run_episode_zero_adherence_sticks_to_baseline():
    mdp, g_b = build_machine_replacement()
    lrn = AdherenceLearner.for_mdp(mdp, config(n_states=10, baseline=g_b))
    hdm = SimulatedHdm(0.0, g_b)
    trajectory = run_episode(lrn, mdp, hdm, 0, 200, np.random.default_rng(3))
    informative = 0
    for record in trajectory:
        assert record.u == g_b(record.x)
        if record.u_r != g_b(record.x):
            assert record.observation is DEVIATED
            informative += 1
        else:
            assert record.observation is UNINFORMATIVE
    assert lrn.adherence.n == informative


def test_run_episode_is_seed_deterministic():
    mdp, g_b = build_machine_replacement()
    runs = []
    for _ in range(2):
        lrn = AdherenceLearner.for_mdp(mdp, config(n_states=10, baseline=g_b))
        hdm = SimulatedHdm(0.7, g_b)
        runs.append(run_episode(lrn, mdp, hdm, 0, 300, np.random.default_rng(11)))
    assert runs[0] == runs[1]


def test_classical_reduction_shares_q_trajectory_bitwise():
    mdp, g_b = build_machine_replacement()
    tables = {}
    for mode, pin in (("adherence_aware", 1.0), ("classical", None)):
        lrn = AdherenceLearner.for_mdp(
            mdp, config(n_states=10, baseline=g_b, mode=mode, pin_theta_hat=pin)
        )
        hdm = SimulatedHdm(0.7, g_b)
        run_episode(lrn, mdp, hdm, 0, 1000, np.random.default_rng(21))
        tables[mode] = lrn.q.copy()
    assert np.array_equal(tables["adherence_aware"], tables["classical"])


def test_scripted_hdm_plays_back_choices():
    baseline = DeterministicPolicy([1, 1])
    hdm = ScriptedHdm(baseline, ["adhere", "baseline", 0])
    rng = np.random.default_rng(0)
    assert hdm.choose(0, 0, rng) == 0
    assert hdm.choose(0, 0, rng) == 1
    assert hdm.choose(1, 0, rng) == 0
    with pytest.raises(ValueError, match="exhausted"):
        hdm.choose(0, 0, rng)


def test_snapshot_round_trips_bit_exactly(tmp_path):
    mdp, g_b = build_machine_replacement()
    lrn = AdherenceLearner.for_mdp(
        mdp, config(n_states=10, baseline=g_b, alpha_mode="polynomial", alpha=0.85)
    )
    run_episode(lrn, mdp, SimulatedHdm(0.7, g_b), 0, 500, np.random.default_rng(9))
    path = tmp_path / "snapshot.json"
    save_snapshot(lrn, path)
    restored = load_snapshot(path)
    assert np.array_equal(restored.q, lrn.q)
    assert np.array_equal(restored.visits, lrn.visits)
    assert restored.adherence == lrn.adherence
    assert restored.step == lrn.step
    assert restored.config == lrn.config


def test_snapshot_rejects_tampered_config():
    lrn = learner()
    doc = snapshot_doc(lrn)
    doc["config"]["alpha"] = 0.123
    with pytest.raises(ValueError, match="hash"):
        learner_from_snapshot(doc)


def test_learner_rejects_baseline_outside_action_space():
    cfg = config(n_states=2, baseline=DeterministicPolicy([5, 0]))
    with pytest.raises(ValueError, match="outside the action space"):
        AdherenceLearner(2, 3, cfg)


def test_learner_rejects_masked_baseline():
    cfg = config(n_states=1, baseline=DeterministicPolicy([1]))
    with pytest.raises(ValueError, match="masked action"):
        AdherenceLearner(1, 2, cfg, action_mask=[[True, False]])
