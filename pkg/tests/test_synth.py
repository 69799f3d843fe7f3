import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imucap.errors import DimensionMismatch, SequenceTooShort
from imucap.metrics import accel_pck
from imucap.rotmath import random_rotation, rot_y
from imucap.skeleton import MotionSequence
from imucap.synth import (MountConfig, accelerations_from_positions, airborne_clips, augment_noise,
                          default_mount, gt_root_velocity, label_contacts, select_airborne_clips,
                          sensor_positions, synthesize_imu)


def static_sequence(model, T=50, translation=None):
    G = np.tile(np.eye(3), (T, model.n_joints, 1, 1))
    trans = np.zeros((T, 3)) if translation is None else translation
    return MotionSequence(G, trans, 60.0)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_exact_on_quadratic(n):
    t = np.arange(100) / 60.0
    a = np.array([1.5, -2.0, 0.25])
    x = 0.5 * a * t[:, None] ** 2 + np.array([0.1, 0.0, 3.0]) * t[:, None]
    acc = accelerations_from_positions(x, 60.0, n)
    assert np.abs(acc - a).max() < 1e-9


def test_boundary_frames_copy_nearest():
    x = np.random.default_rng(0).normal(size=(30, 3))
    acc = accelerations_from_positions(x, 60.0, 4)
    assert np.array_equal(acc[0], acc[4]) and np.array_equal(acc[-1], acc[-5])
    with pytest.raises(SequenceTooShort):
        accelerations_from_positions(x[:8], 60.0, 4)


def test_smoothing_beats_noise_on_sinusoid():
    t = np.arange(600) / 60.0
    clean = np.stack([np.sin(2 * np.pi * t), np.cos(2 * np.pi * t), 0 * t], axis=1)
    truth = -(2 * np.pi) ** 2 * clean
    noisy = augment_noise(clean, 0.005, seed=3)
    thresholds = [0.5, 1, 2, 4, 8]
    p1 = accel_pck(accelerations_from_positions(noisy, 60.0, 1)[4:-4], truth[4:-4], thresholds)
    p4 = accel_pck(accelerations_from_positions(noisy, 60.0, 4)[4:-4], truth[4:-4], thresholds)
    assert np.all(p4 >= p1)


def test_static_body_has_zero_acceleration(model):
    acc, ori = synthesize_imu(static_sequence(model), model)
    assert np.abs(acc).max() < 1e-9
    assert np.allclose(ori, np.eye(3))


def test_sensor_positions_follow_mount(model, rng):
    seq = static_sequence(model, 12)
    seq.rotations[:] = random_rotation(rng, model.n_joints)
    mount = default_mount(model)
    pos = sensor_positions(seq, model, mount)
    from imucap.skeleton import forward_kinematics
    fk = forward_kinematics(model, seq.rotations[0])
    for s, b in enumerate(mount.bones):
        assert np.allclose(pos[0, s], fk[b] + seq.rotations[0, b] @ mount.points[s])


def test_mount_rotation_applies(model, rng):
    R = random_rotation(rng, 6)
    base = default_mount(model)
    mount = MountConfig(base.bones, R, base.points)
    _, ori = synthesize_imu(static_sequence(model, 12), model, mount)
    assert np.allclose(ori[0], R)
    with pytest.raises(ValueError):
        MountConfig((0, 0, 1, 2, 3, 4), R, base.points)


def test_contact_labels_threshold(model):
    T = 40
    trans = np.zeros((T, 3))
    trans[20:, 0] = np.arange(T - 20) * 0.01     # 1 cm/frame after frame 20
    labels = label_contacts(static_sequence(model, T, trans), model, 0.008)
    assert labels[:20].min() == 1.0
    assert labels[21:].max() == 0.0
    assert np.array_equal(labels[0], labels[1])


def test_root_velocity_in_root_frame(model):
    T = 10
    seq = static_sequence(model, T, np.outer(np.arange(T), [0.01, 0, 0]))
    seq.rotations[:] = rot_y(np.pi / 2)
    v = gt_root_velocity(seq)
    assert np.allclose(v[0], 0)
    assert np.allclose(v[1:], rot_y(np.pi / 2).T @ [0.01, 0, 0])


def test_noise_is_seeded_and_zero_sigma_passthrough():
    x = np.zeros((5, 3))
    assert augment_noise(x, 0.0) is x
    assert np.array_equal(augment_noise(x, 0.1, seed=4), augment_noise(x, 0.1, seed=4))
    with pytest.raises(ValueError):
        augment_noise(x, -1.0)


def test_airborne_clips_basic():
    probs = np.ones((100, 2))
    probs[40:50] = 0.2
    assert airborne_clips(probs, 0.9) == [(40, 50)]
    assert airborne_clips(probs, 0.9, context=5) == [(35, 55)]
    assert airborne_clips(probs, 0.9, max_len=4) == [(40, 44), (44, 48), (48, 50)]
    assert select_airborne_clips([probs, np.ones((10, 2))]) == [(0, 40, 50)]
    with pytest.raises(DimensionMismatch):
        airborne_clips(np.ones(5))


@settings(max_examples=60)
@given(st.lists(st.booleans(), min_size=1, max_size=200), st.integers(1, 50), st.integers(0, 10))
def test_airborne_clip_properties(air, max_len, context):
    air = np.array(air)
    probs = np.where(air[:, None], 0.1, 0.95) * np.ones((1, 2))
    clips = airborne_clips(probs, 0.9, max_len, context)
    covered = np.zeros(len(air), bool)
    prev_stop = -1
    for s, e in clips:
        assert 0 <= s < e <= len(air) and e - s <= max_len
        assert s >= prev_stop
        covered[s:e] = True
        prev_stop = e
    assert np.all(covered[air])
