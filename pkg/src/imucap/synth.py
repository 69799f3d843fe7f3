"""
Training-data synthesis from motion sequences: virtual IMU readings,
foot-contact labels, root-velocity targets, noise augmentation and
airborne-clip mining.
"""

from dataclasses import dataclass

import numpy as np

from .calibration import N_SENSORS
from .errors import DimensionMismatch, SequenceTooShort
from .skeleton import forward_kinematics

CONTACT_THRESHOLD = 0.008   # meters per frame
SMOOTHING_N = 4
MAX_CLIP = 300


@dataclass(frozen=True)
class MountConfig:
    """
    Where each virtual sensor sits.

    bones : joint index per sensor (root, lleg, rleg, head, larm, rarm)
    rotations : fixed sensor rotation on the bone, ``(6, 3, 3)``
    points : sensor position in the bone frame relative to the joint, ``(6, 3)``
    """

    bones: tuple
    rotations: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        if len(set(self.bones)) != N_SENSORS:
            raise ValueError("mount bones must be 6 distinct joints")
        object.__setattr__(self, "rotations", np.asarray(self.rotations, dtype=np.float64).reshape(N_SENSORS, 3, 3))
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64).reshape(N_SENSORS, 3))


def default_mount(model):
    """Sensors on pelvis (back), shins, head, forearms; no extra rotation."""
    b = model.sensor_joint_list
    points = np.array([
        [0.0, 0.05, -0.10],
        [0.0, -0.20, 0.05],
        [0.0, -0.20, 0.05],
        [0.0, 0.10, 0.08],
        [0.13, 0.0, 0.03],
        [-0.13, 0.0, 0.03],
    ])
    return MountConfig(tuple(b), np.tile(np.eye(3), (N_SENSORS, 1, 1)), points)


def sensor_positions(seq, model, mount):
    """World positions of the virtual sensors, ``(T, 6, 3)``."""
    pos = forward_kinematics(model, seq.rotations)
    bones = list(mount.bones)
    G = seq.rotations[:, bones]
    return (pos[:, bones] + np.einsum("tsij,sj->tsi", G, mount.points)
            + seq.translation[:, None, :])


def accelerations_from_positions(x, fps, n=SMOOTHING_N):
    """
    Central second difference over ``n`` frames, ``(x[t-n] + x[t+n] - 2 x[t]) / (n dt)^2``.

    The first and last ``n`` frames copy the nearest computable value.
    """
    x = np.asarray(x, dtype=np.float64)
    T = len(x)
    if n < 1:
        raise ValueError("smoothing factor must be >= 1")
    if T <= 2 * n:
        raise SequenceTooShort(f"need more than {2 * n} frames, got {T}")
    dt = 1.0 / fps
    a = np.empty_like(x)
    a[n:T - n] = (x[:T - 2 * n] + x[2 * n:] - 2.0 * x[n:T - n]) / (n * dt) ** 2
    a[:n] = a[n]
    a[T - n:] = a[T - n - 1]
    return a


def synthesize_imu(seq, model, mount=None, n=SMOOTHING_N):
    """
    Calibrated-space virtual IMU readings.

    Returns
    -------
    accelerations : (T, 6, 3), model frame, gravity-free
    orientations : (T, 6, 3, 3), bone global rotation times mount rotation
    """
    mount = mount or default_mount(model)
    x = sensor_positions(seq, model, mount)
    acc = accelerations_from_positions(x, seq.fps, n)
    ori = seq.rotations[:, list(mount.bones)] @ mount.rotations
    return acc, ori


def synthesize_raw(accelerations, orientations, pim, rot_offsets, gravity):
    """
    Raw sensor readings that calibrate back to the given bone states.

    Inverts the calibration model: ``R_sensor = P R_bone R_offset^-1`` and
    ``a_sensor = R_sensor^-1 P (a_bone + g)`` where ``g`` is the model-frame
    reading of a sensor at rest (e.g. ``(0, 9.81, 0)``).
    """
    acc = np.asarray(accelerations, dtype=np.float64)
    ori = np.asarray(orientations, dtype=np.float64)
    pim = np.asarray(pim, dtype=np.float64)
    offs = np.asarray(rot_offsets, dtype=np.float64)
    g = np.asarray(gravity, dtype=np.float64)
    r_sensor = pim @ ori @ np.swapaxes(offs, -1, -2)
    a_model = acc + g
    a_sensor = np.einsum("...sji,jk,...sk->...si", r_sensor, pim, a_model)
    return a_sensor, r_sensor


def foot_positions(seq, model):
    """World positions of (left, right) foot, ``(T, 2, 3)``."""
    pos = forward_kinematics(model, seq.rotations)
    return pos[:, list(model.feet)] + seq.translation[:, None, :]


def label_contacts(seq, model, u=CONTACT_THRESHOLD):
    """
    Binary (left, right) contact labels, ``(T, 2)``.

    A foot is in contact at frame t when it moved less than ``u`` meters since
    frame t-1; frame 0 copies frame 1.
    """
    if len(seq) < 2:
        raise SequenceTooShort("contact labels need at least 2 frames")
    feet = foot_positions(seq, model)
    step = np.linalg.norm(np.diff(feet, axis=0), axis=-1)
    labels = (step < u).astype(np.float64)
    return np.concatenate([labels[:1], labels], axis=0)


def gt_root_velocity(seq):
    """Per-frame root displacement in the root frame (m/frame), ``(T, 3)``; frame 0 is zero."""
    if len(seq) < 2:
        raise SequenceTooShort("velocity needs at least 2 frames")
    d = np.diff(seq.translation, axis=0)
    R = seq.rotations[1:, 0]
    v = np.einsum("tji,tj->ti", R, d)
    return np.concatenate([np.zeros((1, 3)), v], axis=0)


def augment_noise(x, sigma, seed=None, rng=None):
    """Add i.i.d. zero-mean Gaussian noise; ``sigma == 0`` returns the input unchanged."""
    x = np.asarray(x)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return x
    rng = rng if rng is not None else np.random.default_rng(seed)
    return x + rng.normal(0.0, sigma, size=x.shape).astype(x.dtype, copy=False)


def airborne_clips(probs, sbar=0.9, max_len=MAX_CLIP, context=0):
    """
    Frame ranges ``[start, stop)`` around airborne spans.

    A frame is airborne when ``max(s_l, s_r) < sbar``. Each maximal airborne
    span (optionally widened by ``context`` frames on both sides, merging
    overlaps) is tiled by consecutive clips of at most ``max_len`` frames.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != 2:
        raise DimensionMismatch("contact probabilities must be (T, 2)")
    T = len(probs)
    air = probs.max(axis=1) < sbar
    spans = []
    t = 0
    while t < T:
        if not air[t]:
            t += 1
            continue
        start = t
        while t < T and air[t]:
            t += 1
        lo, hi = max(0, start - context), min(T, t + context)
        if spans and lo <= spans[-1][1]:
            spans[-1] = (spans[-1][0], hi)
        else:
            spans.append((lo, hi))
    clips = []
    for lo, hi in spans:
        for s in range(lo, hi, max_len):
            clips.append((s, min(s + max_len, hi)))
    return clips


def select_airborne_clips(prob_sequences, sbar=0.9, max_len=MAX_CLIP, context=0):
    """
    Airborne clips across a dataset.

    ``prob_sequences`` are the contact probabilities a trained contact network
    produced for each sequence; returns ``(sequence index, start, stop)`` triples.
    """
    out = []
    for i, probs in enumerate(prob_sequences):
        out.extend((i, s, e) for s, e in airborne_clips(probs, sbar, max_len, context))
    return out
