import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imucap.calibration import (CalibrationState, apply_calibration, calibrate_t_pose,
                                estimate_global_alignment, identity_state, normalize, root_rotation,
                                split_input)
from imucap.errors import DimensionMismatch, EmptyInput, FormatError
from imucap.rotmath import geodesic_angle_deg, random_rotation


def fabricate(rng, bones, accels, gravity):
    """Raw readings from a known calibration, written out independently of the package."""
    pim = random_rotation(rng)
    offsets = random_rotation(rng, 6)
    r_sensor = pim @ bones @ np.swapaxes(offsets, -1, -2)
    a_sensor = np.einsum("...sji,jk,...sk->...si", r_sensor, pim, accels + gravity)
    return pim, offsets, r_sensor, a_sensor


def test_apply_inverts_fabricated_readings(rng):
    g = np.array([0.0, 9.81, 0.0])
    for _ in range(10):
        bones = random_rotation(rng, (30, 6))
        accels = rng.normal(0, 5, (30, 6, 3))
        pim, offsets, r_s, a_s = fabricate(rng, bones, accels, g)
        state = CalibrationState(pim, offsets, np.tile(g, (6, 1)))
        a, r = apply_calibration(state, a_s, r_s)
        assert geodesic_angle_deg(r, bones).max() < 1e-9
        assert np.abs(a - accels).max() < 1e-9


def test_t_pose_calibration_recovers_offsets(rng):
    g = np.array([0.0, 9.81, 0.0])
    still = np.tile(np.eye(3), (40, 6, 1, 1))
    pim, offsets, r_s, a_s = fabricate(rng, still, np.zeros((40, 6, 3)), g)
    state = calibrate_t_pose(pim, a_s, r_s)
    assert np.abs(state.rot_offsets - offsets).max() < 1e-12
    assert np.abs(state.accel_offsets - g).max() < 1e-12


def test_known_pose_calibration(rng):
    bones = random_rotation(rng, 6)
    g = np.array([0.0, 9.81, 0.0])
    pim, offsets, r_s, a_s = fabricate(rng, np.broadcast_to(bones, (5, 6, 3, 3)), np.zeros((5, 6, 3)), g)
    state = calibrate_t_pose(pim, a_s, r_s, bones)
    assert np.abs(state.rot_offsets - offsets).max() < 1e-12


def test_global_alignment_is_chordal_mean(rng):
    R = random_rotation(rng)
    assert np.allclose(estimate_global_alignment(np.stack([R, R, R])), R)
    with pytest.raises(EmptyInput):
        estimate_global_alignment(np.zeros((0, 3, 3)))


def test_calibration_input_validation():
    with pytest.raises(EmptyInput):
        calibrate_t_pose(np.eye(3), np.zeros((0, 6, 3)), np.zeros((0, 6, 3, 3)))
    with pytest.raises(DimensionMismatch):
        calibrate_t_pose(np.eye(3), np.zeros((2, 5, 3)), np.zeros((2, 5, 3, 3)))


def test_state_json_round_trip(tmp_path, rng):
    state = CalibrationState(random_rotation(rng), random_rotation(rng, 6), rng.normal(size=(6, 3)), 25.0)
    path = tmp_path / "cal.json"
    state.save(path)
    again = CalibrationState.load(path)
    assert np.array_equal(again.rot_offsets, state.rot_offsets)
    assert again.accel_scale == 25.0
    with pytest.raises(FormatError):
        CalibrationState.from_dict({"pim": [1] * 9, "sensors": []})


def test_normalize_layout(rng):
    ori = random_rotation(rng, (4, 6))
    acc = rng.normal(size=(4, 6, 3))
    x = normalize(acc, ori, 30.0)
    assert x.shape == (4, 72)
    a, r = split_input(x)
    assert np.allclose(root_rotation(x), ori[:, 0])
    for t in range(4):
        inv = ori[t, 0].T
        assert np.allclose(a[t, 0] * 30.0, inv @ acc[t, 0])
        for s in range(1, 6):
            assert np.allclose(a[t, s] * 30.0, inv @ (acc[t, s] - acc[t, 0]))
            assert np.allclose(r[t, s], inv @ ori[t, s])


@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1))
def test_normalize_invariant_to_global_heading_of_leaves(seed):
    """Leaf entries are root-relative, so a common rotation of every sensor leaves them unchanged."""
    rng = np.random.default_rng(seed)
    ori = random_rotation(rng, (3, 6))
    acc = rng.normal(size=(3, 6, 3))
    Q = random_rotation(rng)
    x1 = normalize(acc, ori)
    x2 = normalize(acc @ Q.T, Q @ ori)
    assert np.allclose(x1[:, :18], x2[:, :18], atol=1e-12)
    assert np.allclose(x1[:, 27:], x2[:, 27:], atol=1e-12)


def test_identity_state_is_noop(rng):
    acc = rng.normal(size=(6, 3))
    ori = random_rotation(rng, 6)
    a, r = apply_calibration(identity_state(), acc, ori)
    assert np.allclose(r, ori)
    assert np.allclose(a, np.einsum("sij,sj->si", ori, acc))
