import numpy as np
import pytest

from ccmarl.particle_env import (
    ScenarioConfig,
    WorldState,
    dump_trajectory,
    global_state,
    make_config,
    n_landmarks,
    obs_dim,
    observe,
    observe_all,
    prey_candidates,
    prey_policy,
    reset,
    scenario_reward,
    state_dim,
    step,
)


def far_apart_state(cfg, positions):
    """Hand-built state with agents at given positions, everything else out of
    the way so contact forces underflow to exact zero."""
    n = cfg.n_agents
    state = reset(cfg, np.random.default_rng(0))
    state.agent_pos = np.array(positions, dtype=float)
    state.agent_vel = np.zeros((n, 2))
    state.landmarks = np.full((n_landmarks(cfg), 2), 50.0)
    if cfg.scenario == "tag":
        state.prey_pos = np.array([60.0, 60.0])
        state.prey_vel = np.zeros(2)
    return state


def test_reset_deterministic():
    cfg = make_config("tag")
    a = reset(cfg, np.random.default_rng(5))
    b = reset(cfg, np.random.default_rng(5))
    np.testing.assert_array_equal(a.agent_pos, b.agent_pos)
    np.testing.assert_array_equal(a.landmarks, b.landmarks)
    np.testing.assert_array_equal(a.prey_pos, b.prey_pos)


def test_reset_spread_counts():
    cfg = make_config("spread")
    state = reset(cfg, np.random.default_rng(0))
    assert state.agent_pos.shape == (3, 2)
    assert state.landmarks.shape == (3, 2)
    assert state.prey_pos is None and state.targets is None


def test_reset_zero_velocity_and_t():
    for scenario in ("spread", "tag", "reference"):
        state = reset(make_config(scenario), np.random.default_rng(1))
        assert state.t == 0
        np.testing.assert_array_equal(state.agent_vel, 0.0)


def test_reset_spawn_box():
    cfg = make_config("spread", world_half_extent=1.0)
    state = reset(cfg, np.random.default_rng(2))
    assert np.abs(state.agent_pos).max() <= 1.0
    assert np.abs(state.landmarks).max() <= 1.0


def test_step_zero_force_fixed_point():
    cfg = make_config("spread")
    state = far_apart_state(cfg, [[-40.0, 0.0], [0.0, 40.0], [40.0, 0.0]])
    new, _, _ = step(state, cfg, np.zeros((3, 2)), np.random.default_rng(0))
    np.testing.assert_array_equal(new.agent_pos, state.agent_pos)


def test_step_unit_force_from_rest():
    cfg = make_config("spread")
    state = far_apart_state(cfg, [[-40.0, 0.0], [0.0, 40.0], [40.0, 0.0]])
    actions = np.zeros((3, 2))
    actions[0] = [1.0, 0.0]
    new, _, _ = step(state, cfg, actions, np.random.default_rng(0))
    np.testing.assert_allclose(new.agent_vel[0], [0.1, 0.0])
    np.testing.assert_allclose(new.agent_pos[0] - state.agent_pos[0], [0.01, 0.0])


def test_velocity_decays_geometrically():
    cfg = make_config("spread")
    state = far_apart_state(cfg, [[-40.0, 0.0], [0.0, 40.0], [40.0, 0.0]])
    state.agent_vel[0] = [0.8, -0.4]
    v = np.array([0.8, -0.4])
    for _ in range(5):
        state, _, _ = step(state, cfg, np.zeros((3, 2)), np.random.default_rng(0))
        v = v * 0.75
        np.testing.assert_array_equal(state.agent_vel[0], v)


def test_done_exactly_at_episode_end():
    cfg = make_config("spread")
    state = reset(cfg, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    for t in range(25):
        state, _, done = step(state, cfg, np.zeros((3, 2)), rng)
        assert done == (t == 24)
    with pytest.raises(RuntimeError, match="done"):
        step(state, cfg, np.zeros((3, 2)), rng)


def test_actions_clamped():
    cfg = make_config("spread")
    base = far_apart_state(cfg, [[-40.0, 0.0], [0.0, 40.0], [40.0, 0.0]])
    wild = np.zeros((3, 2))
    wild[0] = [5.0, -7.0]
    tame = np.zeros((3, 2))
    tame[0] = [1.0, -1.0]
    a, _, _ = step(base.copy(), cfg, wild, np.random.default_rng(0))
    b, _, _ = step(base.copy(), cfg, tame, np.random.default_rng(0))
    np.testing.assert_array_equal(a.agent_pos, b.agent_pos)


def test_step_rejects_bad_shape():
    cfg = make_config("spread")
    state = reset(cfg, np.random.default_rng(0))
    with pytest.raises(ValueError, match="shape"):
        step(state, cfg, np.zeros((2, 2)), np.random.default_rng(0))


def test_contact_force_pushes_overlapping_agents_apart():
    cfg = make_config("spread")
    state = far_apart_state(cfg, [[0.0, 0.0], [0.2, 0.0], [40.0, 40.0]])
    new, _, _ = step(state, cfg, np.zeros((3, 2)), np.random.default_rng(0))
    assert new.agent_vel[0][0] < 0.0  # pushed west
    assert new.agent_vel[1][0] > 0.0  # pushed east


def test_trajectory_deterministic():
    cfg = make_config("tag")
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(9)
        state = reset(cfg, rng)
        act_rng = np.random.default_rng(10)
        traj = []
        for _ in range(25):
            state, r, _ = step(state, cfg, act_rng.uniform(-1, 1, (3, 2)), rng)
            traj.append((state.agent_pos.copy(), state.prey_pos.copy(), r))
        runs.append(traj)
    for (pa, qa, ra), (pb, qb, rb) in zip(*runs):
        np.testing.assert_array_equal(pa, pb)
        np.testing.assert_array_equal(qa, qb)
        assert ra == rb


def test_spread_reward_zero_when_covered():
    cfg = make_config("spread")
    state = far_apart_state(cfg, [[-40.0, 0.0], [0.0, 40.0], [40.0, 0.0]])
    state.landmarks = state.agent_pos.copy()
    assert scenario_reward(state, cfg) == 0.0


def test_spread_reward_single_uncovered_landmark():
    cfg = make_config("spread")
    state = far_apart_state(cfg, [[-40.0, 0.0], [0.0, 40.0], [40.0, 0.0]])
    state.landmarks = state.agent_pos.copy()
    state.landmarks[2] = state.agent_pos[2] + [0.0, 1.0]
    assert scenario_reward(state, cfg) == pytest.approx(-1.0)


def test_spread_reward_counts_collision_pairs():
    cfg = make_config("spread")
    state = far_apart_state(cfg, [[0.0, 0.0], [0.1, 0.0], [40.0, 0.0]])
    state.landmarks = state.agent_pos.copy()
    assert scenario_reward(state, cfg) == pytest.approx(-1.0)  # one pair overlap


def test_spread_reward_nonpositive():
    cfg = make_config("spread")
    rng = np.random.default_rng(11)
    for _ in range(50):
        state = reset(cfg, rng)
        assert scenario_reward(state, cfg) <= 0.0


def test_tag_reward_no_contact_zero():
    cfg = make_config("tag")
    state = far_apart_state(cfg, [[-40.0, 0.0], [0.0, 40.0], [40.0, 0.0]])
    assert scenario_reward(state, cfg) == 0.0


def test_tag_reward_per_contacting_predator():
    cfg = make_config("tag")
    state = far_apart_state(cfg, [[0.0, 0.0], [0.05, 0.0], [40.0, 0.0]])
    state.prey_pos = np.array([0.02, 0.0])
    assert scenario_reward(state, cfg) == pytest.approx(20.0)


def test_reference_reward_arrivals():
    cfg = make_config("reference")
    state = reset(cfg, np.random.default_rng(12))
    state.targets = np.array([0, 1])
    state.agent_pos = np.array([state.landmarks[0] + [0.05, 0.0],
                                state.landmarks[1] + [5.0, 0.0]])
    assert scenario_reward(state, cfg) == pytest.approx(1.0)
    state.agent_pos[1] = state.landmarks[1]
    assert scenario_reward(state, cfg) == pytest.approx(2.0)


def test_observe_masks_far_entities():
    cfg = make_config("spread", fov_radius=1.5)
    state = far_apart_state(cfg, [[0.0, 0.0], [1.0, 0.0], [40.0, 0.0]])
    state.landmarks = np.array([[0.5, 0.0], [3.0, 0.0], [41.0, 0.0]])
    obs = observe(state, cfg, 0)
    # layout: own pos 2, own vel 2, landmarks 6, others 4
    np.testing.assert_allclose(obs[4:6], [0.5, 0.0])   # visible landmark
    np.testing.assert_array_equal(obs[6:8], [0.0, 0.0])  # masked landmark
    np.testing.assert_allclose(obs[10:12], [1.0, 0.0])  # visible neighbor
    np.testing.assert_array_equal(obs[12:14], [0.0, 0.0])  # masked neighbor


def test_observe_boundary_at_fov_visible():
    cfg = make_config("spread", fov_radius=1.5)
    state = far_apart_state(cfg, [[0.0, 0.0], [1.5, 0.0], [40.0, 0.0]])
    obs = observe(state, cfg, 0)
    np.testing.assert_allclose(obs[10:12], [1.5, 0.0])


def test_observe_reference_carries_partners_target():
    cfg = make_config("reference")
    state = reset(cfg, np.random.default_rng(13))
    state.targets = np.array([2, 0])
    a0 = observe(state, cfg, 0)
    a1 = observe(state, cfg, 1)
    np.testing.assert_array_equal(a0[-3:], [1.0, 0.0, 0.0])  # agent 1's target
    np.testing.assert_array_equal(a1[-3:], [0.0, 0.0, 1.0])  # agent 0's target


def test_observation_dims_stable():
    for scenario, n in [("spread", 3), ("tag", 3), ("tag", 6), ("tag", 9),
                        ("reference", 2)]:
        cfg = make_config(scenario) if scenario == "reference" else \
            make_config(scenario, n_agents=n)
        state = reset(cfg, np.random.default_rng(14))
        obs = observe_all(state, cfg)
        assert obs.shape == (cfg.n_agents, obs_dim(cfg))
        rng = np.random.default_rng(15)
        state, _, _ = step(state, cfg, np.zeros((cfg.n_agents, 2)), rng)
        assert observe_all(state, cfg).shape == (cfg.n_agents, obs_dim(cfg))
        assert global_state(state, cfg).shape == (state_dim(cfg),)


def test_observe_all_matches_observe():
    cfg = make_config("tag")
    state = reset(cfg, np.random.default_rng(16))
    all_obs = observe_all(state, cfg)
    for i in range(3):
        np.testing.assert_array_equal(all_obs[i], observe(state, cfg, i))
    with pytest.raises(ValueError, match="agent_id"):
        observe(state, cfg, 7)


def test_prey_policy_requires_tag():
    cfg = make_config("spread")
    state = reset(cfg, np.random.default_rng(17))
    with pytest.raises(ValueError, match="tag"):
        prey_policy(state, cfg, np.random.default_rng(0))


def test_prey_policy_no_predators_first_candidate():
    cfg = make_config("tag")
    state = far_apart_state(cfg, [[-40.0, 0.0], [0.0, 40.0], [40.0, 0.0]])
    state.prey_pos = np.array([0.0, 0.0])
    force = prey_policy(state, cfg, np.random.default_rng(21))
    cands = prey_candidates(np.array([0.0, 0.0]), cfg, np.random.default_rng(21))
    want = cands[0] / np.linalg.norm(cands[0])
    np.testing.assert_allclose(force, np.clip(want, -1, 1))


def test_prey_flees_single_predator():
    # enumerate the same 100 candidates and check the argmax lands away from
    # the predator sitting due east
    cfg = make_config("tag")
    state = far_apart_state(cfg, [[0.5, 0.0], [50.0, 50.0], [50.0, -50.0]])
    state.prey_pos = np.array([0.0, 0.0])
    for seed in range(5):
        force = prey_policy(state, cfg, np.random.default_rng(seed))
        cands = prey_candidates(np.array([0.0, 0.0]), cfg,
                                np.random.default_rng(seed))
        d = np.linalg.norm(cands - np.array([0.5, 0.0]), axis=1)
        best = cands[np.argmax(d)]
        np.testing.assert_allclose(force, np.clip(best / np.linalg.norm(best), -1, 1))
        assert force[0] < 0.0  # western half-plane


def test_prey_outruns_predator_under_equal_force():
    cfg = make_config("tag")
    state = far_apart_state(cfg, [[-40.0, 0.0], [0.0, 40.0], [40.0, 0.0]])
    state.prey_pos = np.array([0.0, -40.0])
    actions = np.zeros((3, 2))
    actions[0] = [1.0, 0.0]
    new, _, _ = step(state, cfg, actions, np.random.default_rng(22))
    prey_speed = np.linalg.norm(new.prey_vel)
    pred_speed = np.linalg.norm(new.agent_vel[0])
    assert prey_speed == pytest.approx(1.3 * pred_speed, rel=1e-9)


def test_config_validation():
    with pytest.raises(ValueError, match="scenario"):
        ScenarioConfig(scenario="chase")
    with pytest.raises(ValueError, match="2-agent"):
        make_config("reference", n_agents=3)
    with pytest.raises(ValueError, match="at least 2"):
        make_config("spread", n_agents=1)
    with pytest.raises(ValueError, match="episode_length"):
        make_config("spread", episode_length=0)
    with pytest.raises(ValueError, match="dt"):
        make_config("spread", dt=0.0)
    with pytest.raises(ValueError, match="damping"):
        make_config("spread", damping=1.0)


def test_reference_defaults():
    cfg = make_config("reference")
    assert cfg.n_agents == 2
    assert np.isinf(cfg.fov_radius)
    assert n_landmarks(cfg) == 3


def test_trajectory_dump(tmp_path):
    cfg = make_config("spread")
    rng = np.random.default_rng(23)
    state = reset(cfg, rng)
    traj = []
    for _ in range(3):
        state, r, _ = step(state, cfg, np.zeros((3, 2)), rng)
        traj.append((state, r))
    path = tmp_path / "traj.csv"
    dump_trajectory(path, traj, cfg)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "t,agent,px,py,vx,vy,reward"
    assert len(lines) == 1 + 3 * 3
    assert lines[1].startswith("1,0,")
