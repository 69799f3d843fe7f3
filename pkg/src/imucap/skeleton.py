"""
Kinematic body model: forward kinematics, sparse-marker skinning and
local/global rotation conversion.

Poses are stored as *global* (model-frame) joint rotations, shape
``(*, J, 3, 3)``; parent-relative ("local") rotations are only used at file
boundaries. Axis convention: x left, y up, z forward.
"""

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import DimensionMismatch, FormatError

SENSORS = ("root", "lleg", "rleg", "head", "larm", "rarm")
LEAVES = SENSORS[1:]


@dataclass(frozen=True)
class SkeletonModel:
    names: tuple
    parents: np.ndarray
    offsets: np.ndarray
    sensor_bones: dict
    leaf_joints: tuple
    feet: tuple
    predicted_joints: tuple
    sip_joints: tuple
    leg_joints: tuple
    marker_rest: np.ndarray
    marker_joints: np.ndarray
    marker_weights: np.ndarray
    leg_length: float = 1.0
    name: str = "skeleton"
    _scaled: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=np.int64)
        offsets = np.asarray(self.offsets, dtype=np.float64)
        J = len(parents)
        if J < 2:
            raise FormatError("skeleton needs at least 2 joints")
        if parents[0] != -1 or np.any(parents[1:] < 0):
            raise FormatError("joint 0 must be the only root")
        if np.any(parents[1:] >= np.arange(1, J)):
            raise FormatError("joints must be topologically sorted (parent < child)")
        if offsets.shape != (J, 3):
            raise FormatError(f"offsets must have shape ({J}, 3)")
        w = np.asarray(self.marker_weights, dtype=np.float64)
        if w.ndim == 1:
            w = w[:, None]
        if np.any(w < 0) or (len(w) and not np.allclose(w.sum(axis=1), 1.0, atol=1e-9)):
            raise FormatError("marker weights must be >= 0 and sum to 1")
        if self.leg_length <= 0:
            raise FormatError("leg length scale must be positive")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "marker_rest", np.asarray(self.marker_rest, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "marker_joints", np.asarray(self.marker_joints, dtype=np.int64).reshape(w.shape))
        object.__setattr__(self, "marker_weights", w)
        scaled = offsets.copy()
        scaled[list(self.leg_joints)] *= self.leg_length
        object.__setattr__(self, "_scaled", scaled)

    @property
    def n_joints(self):
        return len(self.parents)

    @property
    def scaled_offsets(self):
        return self._scaled

    @property
    def sensor_joint_list(self):
        return [self.sensor_bones[s] for s in SENSORS]

    def with_leg_length(self, leg_length):
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "_scaled"}
        kw["leg_length"] = float(leg_length)
        return SkeletonModel(**kw)

    def rest_positions(self):
        """Joint positions of the identity pose (root at the origin)."""
        return forward_kinematics(self, np.broadcast_to(np.eye(3), (self.n_joints, 3, 3)))


@dataclass
class MotionSequence:
    """Global joint rotations ``(T, J, 3, 3)`` plus root translation ``(T, 3)`` in meters."""

    rotations: np.ndarray
    translation: np.ndarray
    fps: float = 60.0

    def __post_init__(self):
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.rotations.ndim != 4 or self.rotations.shape[-2:] != (3, 3):
            raise DimensionMismatch("rotations must have shape (T, J, 3, 3)")
        if self.translation.shape != (len(self.rotations), 3):
            raise DimensionMismatch("translation must have shape (T, 3)")

    def __len__(self):
        return len(self.rotations)

    def slice(self, start, stop):
        return MotionSequence(self.rotations[start:stop], self.translation[start:stop], self.fps)


def _check_pose(model, rotations):
    rotations = np.asarray(rotations, dtype=np.float64)
    if rotations.shape[-3:] != (model.n_joints, 3, 3):
        raise DimensionMismatch(
            f"pose has shape {rotations.shape[-3:]}, model expects ({model.n_joints}, 3, 3)")
    return rotations


def forward_kinematics(model, rotations):
    """
    Root-relative joint positions from global joint rotations.

    ``p[root] = 0``, ``p[j] = p[parent] + G[parent] @ (scaled offset j)``.

    Parameters
    ----------
    rotations : array_like, shape (*, J, 3, 3)

    Returns
    -------
    ndarray, shape (*, J, 3)
    """
    G = _check_pose(model, rotations)
    offsets = model.scaled_offsets
    pos = np.zeros(G.shape[:-2] + (3,))
    for j in range(1, model.n_joints):
        p = model.parents[j]
        pos[..., j, :] = pos[..., p, :] + G[..., p, :, :] @ offsets[j]
    return pos


def skin_markers(model, rotations, root_translation=None):
    """
    Linear blend skinning of the sparse marker set.

    marker = sum_k w_k (G[j_k] (rest - rest_joint[j_k]) + p[j_k]) + translation
    """
    G = _check_pose(model, rotations)
    pos = forward_kinematics(model, G)
    rest_joint = model.rest_positions()
    mj, mw = model.marker_joints, model.marker_weights
    local = model.marker_rest[:, None, :] - rest_joint[mj]            # (M, K, 3)
    Gk = G[..., mj, :, :]                                             # (*, M, K, 3, 3)
    moved = np.einsum("...mkab,mkb->...mka", Gk, local) + pos[..., mj, :]
    out = np.einsum("...mka,mk->...ma", moved, mw)
    if root_translation is not None:
        out = out + np.asarray(root_translation, dtype=np.float64)[..., None, :]
    return out


def local_from_global(model, rotations):
    """Parent-relative rotations ``L[j] = G[parent]^T G[j]``; the root keeps its global rotation."""
    G = _check_pose(model, rotations)
    L = np.empty_like(G)
    L[..., 0, :, :] = G[..., 0, :, :]
    par = model.parents[1:]
    L[..., 1:, :, :] = np.swapaxes(G[..., par, :, :], -1, -2) @ G[..., 1:, :, :]
    return L


def global_from_local(model, local):
    L = _check_pose(model, local)
    G = np.empty_like(L)
    G[..., 0, :, :] = L[..., 0, :, :]
    for j in range(1, model.n_joints):
        G[..., j, :, :] = G[..., model.parents[j], :, :] @ L[..., j, :, :]
    return G


def root_relative_rotations(rotations):
    """Express every joint rotation in the root frame: ``G[root]^T G[j]``."""
    G = np.asarray(rotations, dtype=np.float64)
    return np.swapaxes(G[..., :1, :, :], -1, -2) @ G


# --------------------------------------------------------------------------
# file I/O

def to_dict(model):
    return {
        "name": model.name,
        "joints": [{"name": n, "parent": int(p), "offset": [float(v) for v in o]}
                   for n, p, o in zip(model.names, model.parents, model.offsets)],
        "leafBones": {k: int(v) for k, v in model.sensor_bones.items()},
        "leafJoints": [int(j) for j in model.leaf_joints],
        "feet": {"left": int(model.feet[0]), "right": int(model.feet[1])},
        "predictedJoints": [int(j) for j in model.predicted_joints],
        "sipJoints": [int(j) for j in model.sip_joints],
        "legJoints": [int(j) for j in model.leg_joints],
        "legLength": model.leg_length,
        "markers": [{"rest": [float(v) for v in r],
                     "weights": [[int(j), float(w)] for j, w in zip(js, ws) if w > 0]}
                    for r, js, ws in zip(model.marker_rest, model.marker_joints, model.marker_weights)],
    }


def from_dict(doc):
    try:
        joints = doc["joints"]
        names = tuple(j["name"] for j in joints)
        index = {n: i for i, n in enumerate(names)}

        def ref(v):
            return index[v] if isinstance(v, str) else int(v)

        parents = [(-1 if j["parent"] in (-1, None) else ref(j["parent"])) for j in joints]
        offsets = [j["offset"] for j in joints]
        markers = doc.get("markers", [])
        K = max((len(m["weights"]) for m in markers), default=1)
        if K > 4:
            raise FormatError("markers may reference at most 4 joints")
        mj = np.zeros((len(markers), K), dtype=np.int64)
        mw = np.zeros((len(markers), K))
        for i, m in enumerate(markers):
            for k, (j, w) in enumerate(m["weights"]):
                mj[i, k], mw[i, k] = ref(j), w
        bones = {k: ref(doc["leafBones"][k]) for k in SENSORS}
        return SkeletonModel(
            names=names,
            parents=np.array(parents),
            offsets=np.array(offsets, dtype=np.float64),
            sensor_bones=bones,
            leaf_joints=tuple(ref(j) for j in doc["leafJoints"]),
            feet=(ref(doc["feet"]["left"]), ref(doc["feet"]["right"])),
            predicted_joints=tuple(ref(j) for j in doc["predictedJoints"]),
            sip_joints=tuple(ref(j) for j in doc.get("sipJoints", [])),
            leg_joints=tuple(ref(j) for j in doc.get("legJoints", [])),
            marker_rest=np.array([m["rest"] for m in markers], dtype=np.float64).reshape(-1, 3),
            marker_joints=mj,
            marker_weights=mw,
            leg_length=float(doc.get("legLength", 1.0)),
            name=doc.get("name", "skeleton"),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise FormatError(f"malformed skeleton document: {exc!r}") from exc


def load_skeleton(path=None):
    """Load a skeleton JSON file; ``None`` loads the packaged 24-joint default."""
    if path is None:
        text = resources.files("imucap.data").joinpath("skeleton24.json").read_text()
    else:
        with open(path) as f:
            text = f.read()
    return from_dict(json.loads(text))


def save_skeleton(model, path):
    with open(path, "w") as f:
        json.dump(to_dict(model), f, indent=1)


def default_skeleton():
    return load_skeleton(None)


# --------------------------------------------------------------------------
# default 24-joint model (SMPL topology, hand-authored offsets)

_JOINTS = [
    ("pelvis", -1, (0.0, 0.0, 0.0)),
    ("l_hip", 0, (0.070, -0.091, -0.009)),
    ("r_hip", 0, (-0.068, -0.091, -0.004)),
    ("spine1", 0, (-0.003, 0.109, -0.027)),
    ("l_knee", 1, (0.034, -0.375, -0.005)),
    ("r_knee", 2, (-0.038, -0.383, -0.009)),
    ("spine2", 3, (0.006, 0.135, 0.001)),
    ("l_ankle", 4, (-0.014, -0.398, -0.044)),
    ("r_ankle", 5, (0.016, -0.398, -0.042)),
    ("spine3", 6, (0.002, 0.053, 0.025)),
    ("l_foot", 7, (0.026, -0.056, 0.119)),
    ("r_foot", 8, (-0.025, -0.048, 0.123)),
    ("neck", 9, (-0.003, 0.214, -0.043)),
    ("l_collar", 9, (0.079, 0.122, -0.034)),
    ("r_collar", 9, (-0.082, 0.119, -0.039)),
    ("head", 12, (0.005, 0.065, 0.051)),
    ("l_shoulder", 13, (0.091, 0.031, -0.009)),
    ("r_shoulder", 14, (-0.096, 0.033, -0.009)),
    ("l_elbow", 16, (0.260, -0.013, -0.028)),
    ("r_elbow", 17, (-0.254, -0.013, -0.022)),
    ("l_wrist", 18, (0.249, 0.009, -0.001)),
    ("r_wrist", 19, (-0.255, 0.008, -0.006)),
    ("l_hand", 20, (0.084, -0.008, -0.015)),
    ("r_hand", 21, (-0.085, -0.006, -0.010)),
]


def build_default_skeleton():
    """Construct the default model from the table above plus a generated marker set."""
    names = tuple(n for n, _, _ in _JOINTS)
    parents = np.array([p for _, p, _ in _JOINTS])
    offsets = np.array([o for _, _, o in _JOINTS], dtype=np.float64)
    rest = np.zeros((len(names), 3))
    for j in range(1, len(names)):
        rest[j] = rest[parents[j]] + offsets[j]

    marker_rest, marker_joints, marker_weights = [], [], []
    for j in range(1, len(names)):
        p = parents[j]
        seg = rest[j] - rest[p]
        length = np.linalg.norm(seg)
        d = seg / length
        ref = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        a = np.cross(d, ref)
        a /= np.linalg.norm(a)
        b = np.cross(d, a)
        radius = float(np.clip(0.25 * length, 0.03, 0.08))
        for k, frac in enumerate((0.2, 0.5, 0.8)):
            ang = 2.0 * np.pi * k / 3.0
            marker_rest.append(rest[p] + frac * seg + radius * (np.cos(ang) * a + np.sin(ang) * b))
            if frac < 0.5 and parents[p] >= 0:
                js, ws = [p, parents[p]], [0.85, 0.15]
            elif frac > 0.5:
                js, ws = [p, j], [0.75, 0.25]
            else:
                js, ws = [p, p], [1.0, 0.0]
            marker_joints.append(js)
            marker_weights.append(ws)

    return SkeletonModel(
        names=names,
        parents=parents,
        offsets=offsets,
        sensor_bones={"root": 0, "lleg": 4, "rleg": 5, "head": 15, "larm": 18, "rarm": 19},
        leaf_joints=(7, 8, 15, 20, 21),
        feet=(10, 11),
        predicted_joints=(1, 2, 3, 4, 5, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19),
        sip_joints=(16, 17, 1, 2),
        leg_joints=(4, 5, 7, 8),
        marker_rest=np.array(marker_rest),
        marker_joints=np.array(marker_joints),
        marker_weights=np.array(marker_weights),
        name="default24",
    )
