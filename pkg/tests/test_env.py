import numpy as np
import pytest
from scipy import stats as scipy_stats

from condor import quat
from condor.conditioning import ConditioningSignal, ConditioningSpec
from condor.dynamics import GRAVITY, CtbrCommand, QuadParams, QuadState
from condor.env import (CORE_OBS_DIM, EnvConfig, EnvState, Observation, RaceEnv, RewardParams,
                        SteppedDoneEnv, build_observation, camera_error, compute_reward,
                        raw_thrust_action, squash_action, thrust_limit)


def make_env(track, seed=0, cond=None, cfg=None):
    return RaceEnv(QuadParams(), track, cond or ConditioningSpec(), cfg=cfg, seed=seed)


def hover_action(params, cfg=None):
    # raw action whose tanh-squash lands exactly on hover thrust, zero bodyrates
    raw0 = raw_thrust_action(GRAVITY, params, cfg or EnvConfig())
    return np.array([raw0, 0.0, 0.0, 0.0])


# ----------------------------------------------------------------- observation

def test_observation_identity_attitude(square_track, twr_spec):
    params = QuadParams()
    s = QuadState.hover(params, p=(1.0, 0.0, 1.5))
    s.v = np.array([1.0, 0.0, 0.0])
    obs = build_observation(s, square_track, 0, ConditioningSignal(twr_spec, 2.0))
    assert np.allclose(obs.v_body, [1.0, 0.0, 0.0])
    assert np.allclose(obs.delta_gate, square_track.gates[0].center - s.p)


def test_observation_yawed_attitude(square_track, twr_spec):
    params = QuadParams()
    s = QuadState.hover(params)
    s.q = quat.from_yaw(np.pi / 2)
    s.v = np.array([1.0, 0.0, 0.0])
    obs = build_observation(s, square_track, 0, ConditioningSignal(twr_spec, 2.0))
    assert np.allclose(obs.v_body, [0.0, -1.0, 0.0], atol=1e-12)


def test_observation_zeta_upper_bound(square_track, twr_spec):
    s = QuadState.hover(QuadParams())
    obs = build_observation(s, square_track, 0, ConditioningSignal(twr_spec, 4.5))
    assert np.array_equal(obs.zeta_enc, [1.0])


def test_observation_rotation_matrix_valid(square_track, twr_spec):
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = QuadState.hover(QuadParams())
        s.q = quat.normalize(rng.normal(size=4))
        obs = build_observation(s, square_track, 0, ConditioningSignal(twr_spec, 3.0))
        r = obs.rotmat
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-9)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)


def test_core_vector_scales(square_track, twr_spec):
    cfg = EnvConfig()
    s = QuadState.hover(QuadParams(), p=(5.0, 0.0, 2.0))
    s.v = np.array([10.0, 0.0, 0.0])
    obs = build_observation(s, square_track, 0, ConditioningSignal(twr_spec, 2.0))
    core = obs.core_vector(cfg)
    assert core.shape == (CORE_OBS_DIM,)
    assert core[0] == pytest.approx(0.5)      # p/10
    assert core[12] == pytest.approx(0.5)     # v_body/20


# ---------------------------------------------------------------------- reward

def _state_at(p, track_next_gate=0, zeta=2.0, crashed=False, q=None):
    s = QuadState.hover(QuadParams(), p=p)
    if q is not None:
        s.q = q
    return EnvState(quad=s, next_gate=track_next_gate, t=0.0, zeta=zeta, done=False,
                    crashed=crashed)


def test_progress_reward_definition(square_track, twr_spec):
    params = RewardParams()
    g0 = square_track.gates[0].center
    prev = _state_at(g0 - np.array([5.0, 0.0, 0.0]))
    curr = _state_at(g0 - np.array([4.5, 0.0, 0.0]))
    cmd = CtbrCommand(c=GRAVITY, omega_ref=np.zeros(3))
    r = compute_reward(prev, curr, cmd, params, QuadParams(), square_track, twr_spec)
    assert r.prog == pytest.approx(0.5, abs=1e-12)


def test_perception_reward_peak(square_track, twr_spec):
    params = RewardParams()
    g0 = square_track.gates[0].center
    p = g0 - np.array([4.0, 0.0, 0.0])  # gate straight ahead along +x
    prev = _state_at(p)
    curr = _state_at(p)
    cmd = CtbrCommand(c=GRAVITY, omega_ref=np.zeros(3))
    r = compute_reward(prev, curr, cmd, params, QuadParams(), square_track, twr_spec)
    assert r.perc == pytest.approx(params.lambda2)


def test_twr_penalty_zero_at_limit(square_track, twr_spec):
    params = RewardParams()
    quad = QuadParams()
    zeta = 2.0
    prev = _state_at([0.0, 0.0, 1.5], zeta=zeta)
    curr = _state_at([0.0, 0.0, 1.5], zeta=zeta)
    cmd = CtbrCommand(c=thrust_limit(zeta, "twr", quad), omega_ref=np.zeros(3))
    r = compute_reward(prev, curr, cmd, params, quad, square_track, twr_spec)
    assert r.twr == 0.0


def test_twr_penalty_inactive_below_limit(square_track, twr_spec):
    rng = np.random.default_rng(1)
    params = RewardParams()
    quad = QuadParams()
    for _ in range(50):
        zeta = rng.uniform(1.6, 4.5)
        c = rng.uniform(0.0, zeta * GRAVITY)
        prev = _state_at([0.0, 0.0, 1.5], zeta=zeta)
        curr = _state_at([0.0, 0.0, 1.5], zeta=zeta)
        r = compute_reward(prev, curr, CtbrCommand(c=c, omega_ref=np.zeros(3)), params, quad,
                           square_track, twr_spec)
        assert r.twr == 0.0


def test_twr_penalty_active_above_limit(square_track, twr_spec):
    params = RewardParams()
    quad = QuadParams()
    zeta = 1.6
    prev = _state_at([0.0, 0.0, 1.5], zeta=zeta)
    curr = _state_at([0.0, 0.0, 1.5], zeta=zeta)
    c = zeta * GRAVITY + 0.1 * quad.c_max
    r = compute_reward(prev, curr, CtbrCommand(c=c, omega_ref=np.zeros(3)), params, quad,
                       square_track, twr_spec)
    assert r.twr == pytest.approx(np.exp(params.lambda5 * 0.1) - 1.0)


def test_reward_total_is_signed_sum(square_track, twr_spec):
    rng = np.random.default_rng(2)
    params = RewardParams()
    quad = QuadParams()
    for _ in range(100):
        prev = _state_at(rng.uniform(-5, 5, 3) + [0, 0, 6], zeta=rng.uniform(1.6, 4.5))
        curr = _state_at(rng.uniform(-5, 5, 3) + [0, 0, 6], zeta=prev.zeta,
                         crashed=rng.random() < 0.3,
                         q=quat.normalize(rng.normal(size=4)))
        cmd = CtbrCommand(c=rng.uniform(0, quad.c_max), omega_ref=np.zeros(3))
        r = compute_reward(prev, curr, cmd, params, quad, square_track, twr_spec)
        assert r.total == r.prog + r.perc - r.twr - r.crash
        # strictly positive up to float64 underflow of exp at extreme angles
        assert 0.0 <= r.perc <= params.lambda2
        delta = camera_error(curr.quad.q, curr.quad.p,
                             square_track.gates[curr.next_gate].center)
        if abs(params.lambda3) * delta**4 < 700.0:
            assert r.perc > 0.0


def test_perception_monotone_in_angle(square_track, twr_spec):
    params = RewardParams()
    quad = QuadParams()
    g0 = square_track.gates[0].center
    p = g0 - np.array([4.0, 0.0, 0.0])
    last = np.inf
    for yaw in np.linspace(0.0, np.pi, 12):
        st = _state_at(p, q=quat.from_yaw(yaw))
        r = compute_reward(st, st, CtbrCommand(c=GRAVITY, omega_ref=np.zeros(3)), params, quad,
                           square_track, twr_spec)
        assert r.perc <= last + 1e-15
        last = r.perc


def test_camera_error_with_view_offset():
    # camera on +x, target on +x: offset rotates the desired direction
    q = np.array([1.0, 0.0, 0.0, 0.0])
    err = camera_error(q, np.zeros(3), np.array([5.0, 0.0, 0.0]), view_offset=np.deg2rad(30))
    assert err == pytest.approx(np.deg2rad(30), abs=1e-12)


# ------------------------------------------------------------------ env stepping

def test_action_squash_bounds():
    params = QuadParams()
    cfg = EnvConfig()
    cmd = squash_action(np.array([100.0, 100.0, -100.0, 100.0]), params, cfg)
    assert 0.0 <= cmd.c <= params.c_max
    assert np.all(np.abs(cmd.omega_ref) <= cfg.action_bodyrate_max)
    cmd_lo = squash_action(np.array([-100.0, 0.0, 0.0, 0.0]), params, cfg)
    assert cmd_lo.c == pytest.approx(0.0, abs=1e-12)


def test_action_squash_hover_centered():
    # zero raw action commands (close to) hover thrust
    params = QuadParams()
    cfg = EnvConfig()
    cmd = squash_action(np.zeros(4), params, cfg)
    assert cmd.c == pytest.approx(GRAVITY, abs=1e-9)
    assert raw_thrust_action(GRAVITY, params, cfg) == pytest.approx(0.0, abs=1e-6)
    # explicit bias override is honored
    cfg0 = EnvConfig(action_thrust_bias=0.0)
    assert squash_action(np.zeros(4), params, cfg0).c == pytest.approx(params.c_max / 2)


def test_hover_step_reward_mostly_perception(square_track):
    env = make_env(square_track, seed=1)
    env.reset(zeta=3.0, gate_index=0, canonical=True)
    # hold position: hover thrust, zero bodyrates (canonical start has small v)
    obs, r, done, info = env.step(hover_action(env.quad_params))
    assert not done
    assert r.crash == 0.0 and r.twr == 0.0
    assert abs(r.prog) < 0.1
    assert 0.0 < r.perc <= env.reward_params.lambda2


def test_ground_crash_terminates(square_track):
    cfg = EnvConfig()
    env = make_env(square_track, seed=2, cfg=cfg)
    env.reset(zeta=3.0, gate_index=0, canonical=True)
    env.state.quad.p[2] = 0.05
    env.state.quad.v = np.array([0.0, 0.0, -8.0])
    obs, r, done, info = env.step(np.array([-10.0, 0.0, 0.0, 0.0]))  # thrust ~ 0
    assert done and info["crash"] == "ground"
    assert r.crash == env.reward_params.crash_penalty
    assert r.total == r.prog + r.perc - r.twr - r.crash


def test_bbox_exit_terminates(square_track):
    env = make_env(square_track, seed=3)
    env.reset(zeta=4.5, gate_index=0, canonical=True)
    top = float(square_track.bbox.hi[2])
    env.state.quad.p = np.array([0.0, 0.0, top - 0.1])
    env.state.quad.v = np.array([0.0, 0.0, 20.0])
    _, r, done, info = env.step(np.array([5.0, 0.0, 0.0, 0.0]))
    assert done and info["crash"] == "bbox"


def test_gate_pass_updates_next_gate_and_buffer(square_track):
    env = make_env(square_track, seed=4)
    env.reset(zeta=3.0, gate_index=3, canonical=True)  # next gate: 0 at (6, 0, 1.5), yaw pi/2
    g = square_track.gates[0]
    env.state.quad.p = g.center - np.array([0.0, 0.05, 0.0])
    env.state.quad.q = quat.from_yaw(np.pi / 2)
    env.state.quad.v = np.array([0.0, 8.0, 0.0])
    before = len(env._buffers[0])
    obs, r, done, info = env.step(hover_action(env.quad_params))
    assert info["gates_passed"] == [0]
    assert env.state.next_gate == 1
    assert len(env._buffers[0]) == before + 1
    assert info["lap_completed"]  # gate 0 is the start gate


def test_stepping_done_env_raises(square_track):
    env = make_env(square_track, seed=5)
    env.reset(zeta=3.0, gate_index=0, canonical=True)
    env.state.quad.p[2] = 0.01
    env.state.quad.v = np.array([0.0, 0.0, -5.0])
    _, _, done, _ = env.step(np.array([-10.0, 0.0, 0.0, 0.0]))
    assert done
    with pytest.raises(SteppedDoneEnv):
        env.step(np.zeros(4))


def test_timeout_without_crash(square_track):
    cfg = EnvConfig(timeout=0.05)
    env = make_env(square_track, seed=6, cfg=cfg)
    env.reset(zeta=3.0, gate_index=0, canonical=True)
    done = False
    steps = 0
    while not done:
        _, r, done, info = env.step(hover_action(env.quad_params))
        steps += 1
    assert steps == 5
    assert info["timeout"] and info["crash"] is None
    assert r.crash == 0.0


def test_telescoping_progress(square_track):
    env = make_env(square_track, seed=7)
    obs = env.reset(zeta=4.5, gate_index=0, canonical=True)
    d0 = np.linalg.norm(obs.delta_gate)
    total_prog = 0.0
    rng = np.random.default_rng(8)
    for _ in range(30):
        a = hover_action(env.quad_params) + rng.normal(0, 0.05, 4)
        obs, r, done, info = env.step(a)
        assert not info["gates_passed"] and not done
        total_prog += r.prog
    d1 = np.linalg.norm(obs.delta_gate)
    assert total_prog == pytest.approx(env.reward_params.lambda1 * (d0 - d1), abs=1e-9)


def test_applied_thrust_never_exceeds_physical_max(square_track):
    env = make_env(square_track, seed=9)
    env.reset(zeta=1.6, gate_index=0, canonical=True)
    rng = np.random.default_rng(10)
    for _ in range(50):
        if env.state.done:
            env.reset(zeta=1.6)
        _, _, _, info = env.step(rng.normal(0, 3, 4))
        assert info["c_cmd"] <= env.quad_params.c_max + 1e-12


# ---------------------------------------------------------------------- resets

def test_cold_start_canonical_state(square_track):
    env = make_env(square_track, seed=11)
    obs = env.reset(zeta=3.0, gate_index=0, canonical=True)
    st = env.state
    assert np.array_equal(st.quad.p, square_track.gates[0].center)
    assert np.linalg.norm(st.quad.v) == pytest.approx(env.cfg.canonical_speed)
    to_next = square_track.gates[1].center - square_track.gates[0].center
    vdir = st.quad.v / np.linalg.norm(st.quad.v)
    assert np.allclose(vdir, to_next / np.linalg.norm(to_next), atol=1e-12)
    assert st.next_gate == 1


def test_seeded_reset_bitwise_reproducible(square_track):
    a = make_env(square_track, seed=42)
    b = make_env(square_track, seed=42)
    oa = a.reset()
    ob = b.reset()
    assert np.array_equal(a.state.quad.as_vector(), b.state.quad.as_vector())
    assert a.state.zeta == b.state.zeta and a.state.next_gate == b.state.next_gate
    assert np.array_equal(oa.core_vector(a.cfg), ob.core_vector(b.cfg))


def test_episode_determinism(square_track):
    acts = np.random.default_rng(12).normal(0, 0.3, (40, 4))
    trajs = []
    for _ in range(2):
        env = make_env(square_track, seed=13)
        env.reset(zeta=3.0, gate_index=0, canonical=True)
        rows = []
        for a in acts:
            if env.state.done:
                break
            _, _, _, _ = env.step(a)
            rows.append(env.state.quad.as_vector())
        trajs.append(np.stack(rows))
    assert np.array_equal(trajs[0], trajs[1])


def test_perturbed_reset_uniformity(square_track):
    env = make_env(square_track, seed=14)
    stored = QuadState.hover(QuadParams(), p=tuple(square_track.gates[0].center)).as_vector()
    env._buffers[0].append(stored)
    offsets = np.empty((10000, 3))
    for i in range(10000):
        env.reset(zeta=3.0, gate_index=0)
        offsets[i] = env.state.quad.p - stored[0:3]
    j = env.cfg.reset_pos_jitter
    assert np.all(np.abs(offsets) <= j)
    for axis in range(3):
        p = scipy_stats.kstest(offsets[:, axis], scipy_stats.uniform(loc=-j, scale=2 * j).cdf).pvalue
        assert p > 0.01


def test_reset_uses_buffer_when_available(square_track):
    env = make_env(square_track, seed=15)
    marker = QuadState.hover(QuadParams(), p=(5.5, 0.5, 2.5)).as_vector()
    env._buffers[2].append(marker)
    env.reset(zeta=3.0, gate_index=2)
    assert np.linalg.norm(env.state.quad.p - marker[0:3]) <= np.sqrt(3) * env.cfg.reset_pos_jitter
    assert env.state.next_gate == 3


def test_fresh_zeta_sampled_per_episode(square_track):
    env = make_env(square_track, seed=16)
    zetas = {env.reset().zeta_enc[0] for _ in range(20)}
    assert len(zetas) > 10  # continuous resampling
