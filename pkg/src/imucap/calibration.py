"""
Sensor calibration (raw sensor readings -> model-frame bone states) and
normalization into the 72-wide network input.

Array conventions for the six sensors (order root, lleg, rleg, head, larm, rarm):
accelerations ``(*, 6, 3)``, orientations ``(*, 6, 3, 3)``.

Raw accelerations include gravity (specific force). The per-sensor
acceleration offset captured while the subject stands still absorbs gravity
together with any constant bias, so calibrated accelerations are ~0 at rest.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, FormatError
from .rotmath import chordal_mean

N_SENSORS = 6
INPUT_WIDTH = 72
DEFAULT_ACCEL_SCALE = 30.0


@dataclass(frozen=True)
class CalibrationState:
    pim: np.ndarray              # inertial -> model transition, (3, 3)
    rot_offsets: np.ndarray      # sensor -> bone rotation offsets, (6, 3, 3)
    accel_offsets: np.ndarray    # model-frame acceleration offsets, (6, 3)
    accel_scale: float = DEFAULT_ACCEL_SCALE

    def to_dict(self):
        return {
            "pim": self.pim.reshape(9).tolist(),
            "sensors": [{"rotOffset": r.reshape(9).tolist(), "accelOffset": a.tolist()}
                        for r, a in zip(self.rot_offsets, self.accel_offsets)],
            "accelScale": self.accel_scale,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            sensors = doc["sensors"]
            if len(sensors) != N_SENSORS:
                raise FormatError(f"expected {N_SENSORS} sensors, got {len(sensors)}")
            return cls(
                pim=np.asarray(doc["pim"], dtype=np.float64).reshape(3, 3),
                rot_offsets=np.array([np.reshape(s["rotOffset"], (3, 3)) for s in sensors], dtype=np.float64),
                accel_offsets=np.array([s["accelOffset"] for s in sensors], dtype=np.float64),
                accel_scale=float(doc.get("accelScale", DEFAULT_ACCEL_SCALE)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(f"malformed calibration document: {exc!r}") from exc

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def identity_state(accel_scale=DEFAULT_ACCEL_SCALE):
    return CalibrationState(np.eye(3), np.tile(np.eye(3), (N_SENSORS, 1, 1)),
                            np.zeros((N_SENSORS, 3)), accel_scale)


def estimate_global_alignment(orientations):
    """
    Inertial-to-model transition from an axis-aligned sensor held still.

    Parameters
    ----------
    orientations : array_like, shape (T, 3, 3)
        Orientation readings of the single aligned sensor.
    """
    R = np.asarray(orientations, dtype=np.float64)
    if R.ndim == 2:
        R = R[None]
    if len(R) == 0:
        raise EmptyInput("no alignment frames")
    return chordal_mean(R, axis=0)


def calibrate_t_pose(pim, accelerations, orientations, bone_rotations=None,
                     accel_scale=DEFAULT_ACCEL_SCALE):
    """
    Per-sensor offsets from still frames in a known pose.

    ``R_offset = R_sensor^-1 P R_bone`` and ``a_offset = P^-1 R_sensor a_sensor``,
    using chordal-mean orientations and mean accelerations over the frames.
    ``bone_rotations`` defaults to identity (T-pose).
    """
    acc = np.asarray(accelerations, dtype=np.float64)
    ori = np.asarray(orientations, dtype=np.float64)
    if acc.ndim == 2:
        acc, ori = acc[None], ori[None]
    if len(acc) == 0 or len(ori) == 0:
        raise EmptyInput("no calibration frames")
    if acc.shape[1:] != (N_SENSORS, 3) or ori.shape[1:] != (N_SENSORS, 3, 3):
        raise DimensionMismatch("calibration frames must be (T, 6, 3) and (T, 6, 3, 3)")
    pim = np.asarray(pim, dtype=np.float64)
    if bone_rotations is None:
        bone_rotations = np.tile(np.eye(3), (N_SENSORS, 1, 1))
    bones = np.asarray(bone_rotations, dtype=np.float64)

    r_sensor = chordal_mean(ori, axis=0)
    a_sensor = acc.mean(axis=0)
    rot_offsets = np.swapaxes(r_sensor, -1, -2) @ pim @ bones
    accel_offsets = np.einsum("ij,sjk,sk->si", pim.T, r_sensor, a_sensor)
    return CalibrationState(pim, rot_offsets, accel_offsets, float(accel_scale))


def apply_calibration(state, accelerations, orientations):
    """
    Raw readings to model-frame bone rotations and accelerations.

    ``R = P^-1 R_sensor R_offset``; ``a = P^-1 R_sensor a_sensor - a_offset``.
    Works on single frames ``(6, 3)/(6, 3, 3)`` or sequences.
    """
    acc = np.asarray(accelerations, dtype=np.float64)
    ori = np.asarray(orientations, dtype=np.float64)
    pinv = state.pim.T
    rot = pinv @ ori @ state.rot_offsets
    a = np.einsum("ij,...sjk,...sk->...si", pinv, ori, acc) - state.accel_offsets
    return a, rot


def normalize(accelerations, orientations, accel_scale=DEFAULT_ACCEL_SCALE):
    """
    Calibrated bone states to the network input vector ``(*, 72)``.

    Leaf readings are expressed relative to the root sensor, the root
    acceleration is rotated into the root frame, the root rotation is kept
    global, and all accelerations are divided by ``accel_scale``.
    Layout: 6 x 3 accelerations, then 6 x 9 row-major rotations.
    """
    acc = np.asarray(accelerations, dtype=np.float64)
    ori = np.asarray(orientations, dtype=np.float64)
    if acc.shape[-2:] != (N_SENSORS, 3) or ori.shape[-3:] != (N_SENSORS, 3, 3):
        raise DimensionMismatch("expected (*, 6, 3) accelerations and (*, 6, 3, 3) rotations")
    r_root = ori[..., 0, :, :]
    r_root_inv = np.swapaxes(r_root, -1, -2)
    a = np.empty_like(acc)
    a[..., 0, :] = np.einsum("...ij,...j->...i", r_root_inv, acc[..., 0, :])
    a[..., 1:, :] = np.einsum("...ij,...sj->...si", r_root_inv, acc[..., 1:, :] - acc[..., :1, :])
    r = np.empty_like(ori)
    r[..., 0, :, :] = r_root
    r[..., 1:, :, :] = r_root_inv[..., None, :, :] @ ori[..., 1:, :, :]
    lead = acc.shape[:-2]
    return np.concatenate([(a / accel_scale).reshape(lead + (18,)), r.reshape(lead + (54,))], axis=-1)


def split_input(x0):
    """Inverse layout of :func:`normalize`: ``(*, 72) -> (*, 6, 3), (*, 6, 3, 3)`` (still scaled)."""
    x0 = np.asarray(x0)
    lead = x0.shape[:-1]
    return x0[..., :18].reshape(lead + (6, 3)), x0[..., 18:].reshape(lead + (6, 3, 3))


def root_rotation(x0):
    """Global root rotation carried in the input vector."""
    return np.asarray(x0)[..., 18:27].reshape(np.shape(x0)[:-1] + (3, 3))
