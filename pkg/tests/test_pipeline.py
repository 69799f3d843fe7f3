import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_inputs, tiny_bundle
from imucap.errors import BadThresholds, DimensionMismatch, UntrainedNetwork
from imucap.nets import Network, NetworkSpec
from imucap.pipeline import (FUTURE_FRAMES, VARIANTS, NetworkBundle, OnlineSession, PipelineOptions,
                             assemble_pose, estimate_pose_offline, foot_velocities, fuse_velocity,
                             root_frame_positions, run_offline, run_online, trans_b1_velocity,
                             window_replica)
from imucap.procedural import generate_motion
from imucap.rotmath import matrix_to_rot6d, random_rotation
from imucap.skeleton import forward_kinematics, root_relative_rotations

vec3 = st.tuples(*[st.floats(-1, 1)] * 3).map(np.array)


def test_fusion_endpoints_exact():
    vf, ve = np.array([0.1, 0.2, 0.3]), np.array([-0.4, 0.5, 0.6])
    assert np.array_equal(fuse_velocity(vf, ve, 0.5), ve)
    assert np.array_equal(fuse_velocity(vf, ve, 0.9), vf)
    assert np.array_equal(fuse_velocity(vf, ve, 0.2), ve)
    assert np.array_equal(fuse_velocity(vf, ve, 1.0), vf)
    assert np.allclose(fuse_velocity(vf, ve, 0.7), 0.5 * (vf + ve))


@settings(max_examples=100)
@given(vec3, vec3, st.floats(0, 1))
def test_fusion_is_continuous_and_bounded(vf, ve, s):
    v = fuse_velocity(vf, ve, s)
    tol = 1e-6 * (np.linalg.norm(vf) + np.linalg.norm(ve)) + 1e-15
    for ds in (1e-9, -1e-9):
        assert np.linalg.norm(fuse_velocity(vf, ve, min(max(s + ds, 0), 1)) - v) <= tol
    lo, hi = np.minimum(vf, ve) - 1e-12, np.maximum(vf, ve) + 1e-12
    assert np.all((v >= lo) & (v <= hi))


def test_fusion_vectorized_and_thresholds():
    s = np.array([0.1, 0.5, 0.7, 0.9, 0.95])
    vf, ve = np.ones((5, 3)), np.zeros((5, 3))
    assert np.allclose(fuse_velocity(vf, ve, s)[:, 0], [0, 0, 0.5, 1, 1])
    with pytest.raises(BadThresholds):
        fuse_velocity(vf, ve, s, 0.9, 0.5)
    with pytest.raises(BadThresholds):
        PipelineOptions(s_lower=0.6, s_upper=0.6)


def test_foot_velocity_picks_supporting_foot(model, rng):
    prev, cur = random_rotation(rng, (2, model.n_joints))
    fk_prev, fk_cur = forward_kinematics(model, prev), forward_kinematics(model, cur)
    lf, rf = model.feet
    v, s = trans_b1_velocity(model, prev, cur, [0.7, 0.2], vg=0.0)
    assert np.allclose(v, fk_prev[lf] - fk_cur[lf]) and s == 0.7
    v, _ = trans_b1_velocity(model, prev, cur, [0.1, 0.2], vg=0.018)
    assert np.allclose(v, fk_prev[rf] - fk_cur[rf] - [0, 0.018, 0])
    v_tie, _ = trans_b1_velocity(model, prev, cur, [0.5, 0.5], vg=0.0)
    assert np.allclose(v_tie, fk_prev[lf] - fk_cur[lf])


def test_vectorized_foot_velocity_matches_per_frame(model, rng):
    G = random_rotation(rng, (6, model.n_joints))
    probs = rng.uniform(size=(6, 2))
    v, s = foot_velocities(model, G, probs, 0.01)
    assert np.array_equal(v[0], np.zeros(3))
    for t in range(1, 6):
        vt, st_ = trans_b1_velocity(model, G[t - 1], G[t], probs[t], 0.01)
        assert np.allclose(v[t], vt) and s[t] == st_


def test_pinned_foot_walk_is_reproduced(model):
    motion = generate_motion(20.0, seed=5, model=model, kinds=("walk",))
    seq = motion.sequence
    v, _ = foot_velocities(model, seq.rotations, motion.contact_onehot(), 0.0)
    err = np.linalg.norm(np.cumsum(v, axis=0) - (seq.translation - seq.translation[0]), axis=1)
    assert err.max() < 1e-9


def test_assemble_pose_inverts_rotation_targets(model, rng):
    G = random_rotation(rng, (3, model.n_joints))
    rel = root_relative_rotations(G)[:, list(model.predicted_joints)]
    out = assemble_pose(model, G[:, 0], matrix_to_rot6d(rel).reshape(3, -1))
    pred = list(model.predicted_joints)
    assert np.abs(out[:, pred] - G[:, pred]).max() < 1e-12
    for j in set(range(1, model.n_joints)) - set(pred):
        assert np.array_equal(out[:, j], out[:, model.parents[j]])
    with pytest.raises(DimensionMismatch):
        assemble_pose(model, G[:, 0], np.zeros((3, 12)))


def test_root_frame_positions_are_heading_invariant(model, rng):
    G = random_rotation(rng, model.n_joints)
    Q = random_rotation(rng)
    assert np.allclose(root_frame_positions(model, Q @ G), root_frame_positions(model, G), atol=1e-12)


def test_bundle_checks(model, tmp_path):
    nets = tiny_bundle()
    assert nets.check(model) is nets
    assert nets.variant == VARIANTS["full"]
    with pytest.raises(UntrainedNetwork):
        NetworkBundle({"pose-s1": nets["pose-s1"]})["pose-s2"]
    bad = dict(nets.nets)
    bad["trans-b1"] = Network.create(NetworkSpec(80, 4, 2, "sigmoid"))
    with pytest.raises(DimensionMismatch):
        NetworkBundle(bad).check(model)
    nets.save(tmp_path)
    again = NetworkBundle.load(tmp_path)
    x = random_inputs(30)
    assert np.array_equal(run_offline(again, model, x).trajectory, run_offline(nets, model, x).trajectory)
    with pytest.raises(FileNotFoundError):
        NetworkBundle.load(tmp_path / "missing")


@pytest.mark.parametrize("variant", sorted(VARIANTS))
def test_every_variant_runs(model, variant):
    nets = tiny_bundle(variant)
    assert nets.variant == VARIANTS[variant]
    G, p_leaf, p_all = estimate_pose_offline(nets, model, random_inputs(40))
    assert G.shape == (40, model.n_joints, 3, 3)
    assert p_leaf.shape == (40, 15) and p_all.shape == (40, 69)


def test_offline_result_consistency(model):
    nets = tiny_bundle()
    x = random_inputs(50, seed=3)
    res = run_offline(nets, model, x)
    assert np.array_equal(res.velocity[0], np.zeros(3))
    assert np.allclose(np.cumsum(res.velocity, axis=0), res.trajectory)
    assert np.all((res.contacts >= 0) & (res.contacts <= 1))
    foot = run_offline(nets, model, x, PipelineOptions(translation="foot"))
    assert np.allclose(foot.velocity[1:], foot.v_foot[1:])
    net_only = run_offline(nets, model, x, PipelineOptions(translation="network"))
    assert np.allclose(net_only.velocity[1:], net_only.v_net[1:])
    gt = run_offline(nets, model, x, contacts=np.tile([1.0, 0.0], (50, 1)))
    assert np.array_equal(gt.contacts[:, 0], np.ones(50))
    with pytest.raises(DimensionMismatch):
        run_offline(nets, model, x[:, :70])


def test_online_emits_with_five_frame_delay(model):
    session = OnlineSession(tiny_bundle(), model)
    x = random_inputs(12)
    out = [session.push(f) for f in x]
    assert out[:FUTURE_FRAMES] == [None] * FUTURE_FRAMES
    assert [r.index for r in out[FUTURE_FRAMES:]] == list(range(12 - FUTURE_FRAMES))
    assert [r.index for r in session.finish()] == list(range(12 - FUTURE_FRAMES, 12))
    with pytest.raises(DimensionMismatch):
        session.push(np.zeros(10))


@pytest.mark.parametrize("b2_bidirectional", [False, True])
def test_online_equals_window_replica(model, b2_bidirectional):
    nets = tiny_bundle(b2_bidirectional=b2_bidirectional)
    x = random_inputs(60, seed=8)
    online = run_online(nets, model, x)
    replica = window_replica(nets, model, x)
    for name in ("poses", "contacts", "v_net", "velocity", "trajectory"):
        assert np.array_equal(getattr(online, name), getattr(replica, name)), name


def test_online_is_causal_beyond_lookahead(model):
    nets = tiny_bundle()
    x = random_inputs(40, seed=9)
    base = run_online(nets, model, x)
    t = 20
    x2 = x.copy()
    x2[t + FUTURE_FRAMES + 1] += 0.5
    pert = run_online(nets, model, x2)
    assert np.array_equal(base.poses[:t + 1], pert.poses[:t + 1])
    assert np.array_equal(base.trajectory[:t + 1], pert.trajectory[:t + 1])
    assert not np.array_equal(base.poses[t + 1:], pert.poses[t + 1:])


def test_online_with_short_sequence(model):
    res = run_online(tiny_bundle(), model, random_inputs(3))
    assert len(res) == 3
