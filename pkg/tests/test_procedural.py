import numpy as np
import pytest

from imucap.procedural import KINDS, generate_dataset, generate_motion
from imucap.rotmath import is_rotation
from imucap.synth import foot_positions, label_contacts


@pytest.fixture(scope="module")
def mixed(model):
    return generate_motion(60.0, seed=11, model=model)


def test_deterministic(model):
    a = generate_motion(5.0, seed=3, model=model)
    b = generate_motion(5.0, seed=3, model=model)
    assert np.array_equal(a.sequence.rotations, b.sequence.rotations)
    assert np.array_equal(a.sequence.translation, b.sequence.translation)
    c = generate_motion(5.0, seed=4, model=model)
    assert not np.array_equal(a.sequence.translation, c.sequence.translation)


def test_shapes_and_valid_rotations(mixed, model):
    seq = mixed.sequence
    assert len(seq) == 3600 and seq.rotations.shape[1] == model.n_joints
    assert is_rotation(seq.rotations[::50], tol=1e-9)
    assert set(np.unique(mixed.kinds)) <= set(range(len(KINDS)))


def test_pinned_foot_does_not_move(mixed, model):
    feet = foot_positions(mixed.sequence, model)
    stance = mixed.stance
    for t in range(1, len(stance)):
        if stance[t] >= 0:
            assert np.linalg.norm(feet[t, stance[t]] - feet[t - 1, stance[t]]) < 1e-9


def test_feet_stay_near_ground(mixed, model):
    feet = foot_positions(mixed.sequence, model)
    lowest = feet[:, :, 1].min(axis=1)
    grounded = mixed.stance >= 0
    assert np.abs(lowest[grounded]).max() < 0.05
    assert lowest.min() > -0.05


def test_stance_foot_is_labelled_in_contact(mixed, model):
    labels = label_contacts(mixed.sequence, model)
    onehot = mixed.contact_onehot()
    assert np.all(labels[onehot == 1.0] == 1.0)


def test_jumps_leave_the_ground(model):
    motion = generate_motion(40.0, seed=2, model=model, kinds=("jump",))
    assert (motion.stance < 0).any()
    assert motion.contact_onehot()[motion.stance < 0].sum() == 0


def test_walk_has_no_flight(model):
    assert (generate_motion(30.0, seed=1, model=model, kinds=("walk",)).stance >= 0).all()


def test_dataset_split(model):
    clips = generate_dataset(25.0, 10.0, seed=0, model=model)
    assert [len(c.sequence) for c in clips] == [600, 600, 300]
    again = generate_dataset(25.0, 10.0, seed=0, model=model)
    assert np.array_equal(clips[2].sequence.translation, again[2].sequence.translation)
    with pytest.raises(ValueError):
        generate_motion(0.0, model=model)
