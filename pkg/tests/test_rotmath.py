import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from imucap.errors import DegenerateInput
from imucap.rotmath import (axis_angle_to_matrix, chordal_mean, geodesic_angle_deg, is_rotation,
                            matrix_to_axis_angle, matrix_to_rot6d, project_to_rotation, random_rotation,
                            rot6d_to_matrix, rot_x, rot_y, rot_z)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec6 = arrays(np.float64, (6,), elements=finite)


def test_rot6d_layout_is_first_two_columns():
    R = Rotation.from_euler("xyz", [0.3, -0.7, 1.1]).as_matrix()
    assert np.array_equal(matrix_to_rot6d(R), np.r_[R[:, 0], R[:, 1]])


def test_round_trip_against_scipy(rng):
    R = Rotation.random(500, random_state=3).as_matrix()
    assert np.abs(rot6d_to_matrix(matrix_to_rot6d(R)) - R).max() < 1e-12


def test_gram_schmidt_matches_qr_oracle(rng):
    r6 = rng.normal(size=(200, 6))
    A = np.stack([r6[:, :3], r6[:, 3:]], axis=-1)
    Q, Rr = np.linalg.qr(A)
    Q = Q * np.sign(np.diagonal(Rr, axis1=1, axis2=2))[:, None, :]
    out = rot6d_to_matrix(r6)
    assert np.abs(out[..., :2] - Q).max() < 1e-12
    assert np.abs(out[..., 2] - np.cross(Q[..., 0], Q[..., 1])).max() < 1e-12


def test_strict_rejects_degenerate():
    with pytest.raises(DegenerateInput):
        rot6d_to_matrix(np.zeros(6))
    with pytest.raises(DegenerateInput):
        rot6d_to_matrix([1, 2, 3, 2, 4, 6])


@given(vec6)
def test_non_strict_always_returns_rotation(r6):
    assert is_rotation(rot6d_to_matrix(r6, strict=False), tol=1e-9)


@given(vec6.filter(lambda v: np.linalg.norm(v[:3]) > 1e-3
                   and np.linalg.norm(np.cross(v[:3], v[3:])) > 1e-3 * np.linalg.norm(v[:3]) * max(np.linalg.norm(v[3:]), 1)))
def test_conversion_is_idempotent(r6):
    R = rot6d_to_matrix(r6)
    assert np.abs(rot6d_to_matrix(matrix_to_rot6d(R)) - R).max() < 1e-12


def test_geodesic_matches_scipy():
    a = Rotation.random(300, random_state=5)
    b = Rotation.random(300, random_state=6)
    oracle = np.degrees((a.inv() * b).magnitude())
    assert np.abs(geodesic_angle_deg(a.as_matrix(), b.as_matrix()) - oracle).max() < 1e-6


@settings(max_examples=50)
@given(st.integers(0, 2 ** 32 - 1))
def test_geodesic_is_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    A, B = random_rotation(rng, 2)
    d = geodesic_angle_deg(A, B)
    assert 0.0 <= d <= 180.0
    assert d == pytest.approx(geodesic_angle_deg(B, A), abs=1e-9)
    assert geodesic_angle_deg(A, A) < 1e-9


def test_axis_angle_against_scipy(rng):
    aa = rng.normal(size=(100, 3))
    aa *= (rng.uniform(0, np.pi - 1e-3, 100) / np.linalg.norm(aa, axis=1))[:, None]
    assert np.abs(axis_angle_to_matrix(aa) - Rotation.from_rotvec(aa).as_matrix()).max() < 1e-12
    assert np.abs(matrix_to_axis_angle(axis_angle_to_matrix(aa)) - aa).max() < 1e-9


def test_axis_angle_edge_cases():
    assert np.array_equal(axis_angle_to_matrix(np.zeros(3)), np.eye(3))
    R = axis_angle_to_matrix([0, np.pi, 0])
    back = matrix_to_axis_angle(R)
    assert np.abs(axis_angle_to_matrix(back) - R).max() < 1e-9


def test_elementary_rotations_follow_right_hand_rule():
    assert np.allclose(rot_x(np.pi / 2) @ [0, 1, 0], [0, 0, 1])
    assert np.allclose(rot_y(np.pi / 2) @ [0, 0, 1], [1, 0, 0])
    assert np.allclose(rot_z(np.pi / 2) @ [1, 0, 0], [0, 1, 0])
    assert rot_x(np.zeros(4)).shape == (4, 3, 3)


def test_projection_and_chordal_mean():
    R = Rotation.random(random_state=2).as_matrix()
    assert np.allclose(project_to_rotation(2.0 * R), R)
    reflected = project_to_rotation(-np.eye(3))
    assert np.linalg.det(reflected) == pytest.approx(1.0)
    jitter = Rotation.from_rotvec(np.array([[0.01, 0, 0], [-0.01, 0, 0]])).as_matrix()
    assert np.allclose(chordal_mean(R @ jitter), R, atol=1e-12)


def test_random_rotation_is_valid(rng):
    R = random_rotation(rng, (7, 3))
    assert R.shape == (7, 3, 3, 3)
    assert is_rotation(R)
