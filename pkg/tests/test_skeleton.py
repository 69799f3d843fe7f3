import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imucap.errors import DimensionMismatch, FormatError
from imucap.rotmath import random_rotation
from imucap.skeleton import (MotionSequence, forward_kinematics, from_dict, global_from_local,
                             load_skeleton, local_from_global, root_relative_rotations, save_skeleton,
                             skin_markers, to_dict)


def recursive_fk(parents, offsets, G):
    """Independent oracle: walk from each joint up to the root."""
    J = len(parents)
    out = np.zeros((J, 3))
    for j in range(J):
        p, k = np.zeros(3), j
        while parents[k] >= 0:
            p = p + G[parents[k]] @ offsets[k]
            k = parents[k]
        out[j] = p
    return out


def test_default_skeleton_layout(model):
    assert model.n_joints == 24
    assert model.feet == (10, 11)
    assert model.leaf_joints == (7, 8, 15, 20, 21)
    assert len(model.predicted_joints) == 15
    assert model.parents[0] == -1


def test_fk_matches_recursive_oracle(model, rng):
    G = random_rotation(rng, (20, model.n_joints))
    got = forward_kinematics(model, G)
    for t in range(20):
        assert np.abs(got[t] - recursive_fk(model.parents, model.offsets, G[t])).max() < 1e-12


def test_rest_pose_feet_below_root(model):
    rest = model.rest_positions()
    assert np.all(rest[list(model.feet), 1] < -0.5)
    assert rest[model.leaf_joints[2], 1] > 0.3  # head


def test_local_global_inverse(model, rng):
    G = random_rotation(rng, (5, model.n_joints))
    assert np.abs(global_from_local(model, local_from_global(model, G)) - G).max() < 1e-12


def test_root_relative_root_is_identity(model, rng):
    G = random_rotation(rng, (3, model.n_joints))
    assert np.allclose(root_relative_rotations(G)[:, 0], np.eye(3))


def test_rigid_rotation_of_whole_body_rotates_positions(model, rng):
    G = random_rotation(rng, model.n_joints)
    Q = random_rotation(rng)
    assert np.allclose(forward_kinematics(model, Q @ G), forward_kinematics(model, G) @ Q.T, atol=1e-12)


def test_markers_at_rest_and_translation(model):
    I = np.tile(np.eye(3), (model.n_joints, 1, 1))
    assert np.allclose(skin_markers(model, I), model.marker_rest)
    shifted = skin_markers(model, I, root_translation=np.array([1.0, 2.0, 3.0]))
    assert np.allclose(shifted - model.marker_rest, [1, 2, 3])


def test_leg_length_scaling(model):
    longer = model.with_leg_length(1.2)
    foot = model.feet[0]
    assert longer.rest_positions()[foot, 1] < model.rest_positions()[foot, 1]
    with pytest.raises(FormatError):
        model.with_leg_length(0.0)


def test_json_round_trip(model, tmp_path):
    path = tmp_path / "sk.json"
    save_skeleton(model, path)
    again = load_skeleton(path)
    assert again.names == model.names
    assert np.array_equal(again.offsets, model.offsets)
    assert np.allclose(again.marker_weights, model.marker_weights)


def test_bad_documents_rejected(model):
    doc = to_dict(model)
    doc["joints"][3]["parent"] = 5
    with pytest.raises(FormatError):
        from_dict(doc)
    with pytest.raises(FormatError):
        from_dict({"joints": []})


def test_pose_shape_checked(model):
    with pytest.raises(DimensionMismatch):
        forward_kinematics(model, np.tile(np.eye(3), (10, 1, 1)))
    with pytest.raises(DimensionMismatch):
        MotionSequence(np.zeros((3, 24, 3, 3)), np.zeros((2, 3)), 60.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2 ** 32 - 1))
def test_fk_random_trees(n_joints, seed):
    """FK matches the recursive oracle on random topologically sorted trees."""
    from imucap.skeleton import SkeletonModel
    rng = np.random.default_rng(seed)
    parents = np.array([-1] + [int(rng.integers(0, j)) for j in range(1, n_joints)])
    offsets = rng.normal(size=(n_joints, 3))
    sk = SkeletonModel(names=tuple(f"j{i}" for i in range(n_joints)), parents=parents, offsets=offsets,
                       sensor_bones={}, leaf_joints=(), feet=(0, 0), predicted_joints=(), sip_joints=(),
                       leg_joints=(), marker_rest=np.zeros((0, 3)), marker_joints=np.zeros((0, 1), int),
                       marker_weights=np.zeros((0, 1)))
    G = random_rotation(rng, n_joints)
    assert np.abs(forward_kinematics(sk, G) - recursive_fk(parents, offsets, G)).max() < 1e-12
