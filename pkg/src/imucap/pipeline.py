"""
End-to-end capture: three pose stages with inertial skip connections, the
two translation branches and their fusion, in offline and online form.

Stage vectors (all positions root-relative, in the root frame):

==========  =====================================  =====
x0          normalized inertial input              72
p_leaf      leaf joint positions                   15
x1          ``[p_leaf, x0]``                       87
p_all       all non-root joint positions           69
x2          ``[p_all, x0]``                        141
==========  =====================================  =====
"""

import os
from collections import deque
from dataclasses import dataclass

import numpy as np

from .calibration import INPUT_WIDTH, root_rotation
from .errors import BadThresholds, DimensionMismatch, UntrainedNetwork
from .nets import Network
from .rotmath import rot6d_to_matrix
from .skeleton import forward_kinematics

NET_NAMES = ("pose-s1", "pose-s2", "pose-s3", "trans-b1", "trans-b2")
GRAVITY_VELOCITY = 0.018      # meters per frame, applied downward to the foot branch
S_LOWER = 0.5
S_UPPER = 0.9
PAST_FRAMES = 20
FUTURE_FRAMES = 5
WINDOW = PAST_FRAMES + 1 + FUTURE_FRAMES


# --------------------------------------------------------------------------
# network bundle and pose-stage variants

@dataclass(frozen=True)
class PoseVariant:
    """Which intermediate stages exist and whether the later stages see the inertial input."""

    leaf_stage: bool = True
    all_stage: bool = True
    s2_imu: bool = True
    s3_imu: bool = True

    def __post_init__(self):
        if not self.leaf_stage and not self.s2_imu and self.all_stage:
            raise ValueError("the joint-position stage needs leaf positions or inertial input")
        if not self.leaf_stage and not self.all_stage and not self.s3_imu:
            raise ValueError("the rotation stage needs positions or inertial input")

    def input_widths(self, n_predicted=15, n_joints=24):
        """Input width of each pose network, keyed by name (absent stages omitted)."""
        n_leaf, n_all = 15, 3 * (n_joints - 1)
        out = {}
        if self.leaf_stage:
            out["pose-s1"] = INPUT_WIDTH
        if self.all_stage:
            out["pose-s2"] = (n_leaf if self.leaf_stage else 0) + (INPUT_WIDTH if self.s2_imu else 0)
        prior = n_all if self.all_stage else n_leaf if self.leaf_stage else 0
        out["pose-s3"] = prior + (INPUT_WIDTH if self.s3_imu else 0)
        return out

    @property
    def label(self):
        chain = "I"
        if self.leaf_stage:
            chain += "-LJ"
        if self.all_stage:
            chain += "-AJ"
        chain += "-P"
        if not self.s2_imu:
            chain += " (S2 w/o IMU)"
        if not self.s3_imu:
            chain += " (S3 w/o IMU)"
        return chain


VARIANTS = {
    "full": PoseVariant(),
    "leaf": PoseVariant(all_stage=False),
    "all": PoseVariant(leaf_stage=False),
    "direct": PoseVariant(leaf_stage=False, all_stage=False),
    "s2-no-imu": PoseVariant(s2_imu=False),
    "s3-no-imu": PoseVariant(s3_imu=False),
}


class NetworkBundle:
    """
    The networks of one capture pipeline, keyed by name.

    The pose-stage variant is read off which networks are present and their
    input widths, so ablation pipelines need no extra configuration.
    """

    def __init__(self, nets):
        unknown = set(nets) - set(NET_NAMES)
        if unknown:
            raise ValueError(f"unknown network names {sorted(unknown)}")
        self.nets = dict(nets)

    def __getitem__(self, name):
        net = self.nets.get(name)
        if net is None:
            raise UntrainedNetwork(f"network {name!r} is not available")
        return net

    def __contains__(self, name):
        return self.nets.get(name) is not None

    @property
    def variant(self):
        s2 = self.nets.get("pose-s2")
        s3 = self.nets.get("pose-s3")
        if s3 is None:
            raise UntrainedNetwork("network 'pose-s3' is not available")
        leaf = "pose-s1" in self
        return PoseVariant(
            leaf_stage=leaf,
            all_stage=s2 is not None,
            s2_imu=s2 is None or s2.spec.input_width != 15,
            s3_imu=s3.spec.input_width >= INPUT_WIDTH,
        )

    def check(self, model):
        """Raise :class:`DimensionMismatch` if any network does not fit its slot."""
        n_all = 3 * (model.n_joints - 1)
        widths = self.variant.input_widths(len(model.predicted_joints), model.n_joints)
        outputs = {"pose-s1": 15, "pose-s2": n_all, "pose-s3": 6 * len(model.predicted_joints),
                   "trans-b1": 2, "trans-b2": 3}
        widths.update({"trans-b1": 15 + INPUT_WIDTH, "trans-b2": n_all + INPUT_WIDTH})
        for name, net in self.nets.items():
            if net is None:
                continue
            if name in widths and net.spec.input_width != widths[name]:
                raise DimensionMismatch(
                    f"{name} takes {net.spec.input_width} inputs, pipeline provides {widths[name]}")
            if net.spec.output_width != outputs[name]:
                raise DimensionMismatch(
                    f"{name} emits {net.spec.output_width} outputs, pipeline expects {outputs[name]}")
        return self

    def astype(self, dtype):
        return NetworkBundle({k: v.astype(dtype) for k, v in self.nets.items() if v is not None})

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        for name, net in self.nets.items():
            if net is not None:
                net.save(os.path.join(directory, f"{name}.json"))

    @classmethod
    def load(cls, directory, dtype=np.float64, names=NET_NAMES):
        nets = {}
        for name in names:
            path = os.path.join(directory, f"{name}.json")
            if os.path.exists(path):
                nets[name] = Network.load(path, dtype=dtype)
        if not nets:
            raise FileNotFoundError(f"no network weights found in {directory}")
        return cls(nets)


# --------------------------------------------------------------------------
# pose estimation

def root_frame_positions(model, rotations):
    """Non-root joint positions relative to the root, in the root frame: ``(*, J-1, 3)``."""
    G = np.asarray(rotations, dtype=np.float64)
    pos = forward_kinematics(model, G)[..., 1:, :]
    return np.einsum("...ji,...kj->...ki", G[..., 0, :, :], pos)


def assemble_pose(model, root_rot, rot6d):
    """
    Global joint rotations from the measured root and the rotation-stage output.

    Predicted joints get ``R_root @ gram_schmidt(6d)``; every other joint
    copies its parent's global rotation (identity local rotation).
    """
    root_rot = np.asarray(root_rot, dtype=np.float64)
    lead = root_rot.shape[:-2]
    rel = rot6d_to_matrix(np.asarray(rot6d, dtype=np.float64).reshape(lead + (-1, 6)), strict=False)
    if rel.shape[-3] != len(model.predicted_joints):
        raise DimensionMismatch(
            f"rotation stage produced {rel.shape[-3]} joints, model predicts {len(model.predicted_joints)}")
    G = np.empty(lead + (model.n_joints, 3, 3))
    G[..., 0, :, :] = root_rot
    slot = {j: k for k, j in enumerate(model.predicted_joints)}
    for j in range(1, model.n_joints):
        if j in slot:
            G[..., j, :, :] = root_rot @ rel[..., slot[j], :, :]
        else:
            G[..., j, :, :] = G[..., model.parents[j], :, :]
    return G


def stage_inputs(*parts):
    """Concatenate stage vectors in order, e.g. ``stage_inputs(p_leaf, x0)`` gives x1."""
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts], axis=-1)


def _leaf_columns(model):
    return np.concatenate([np.arange(3 * (j - 1), 3 * j) for j in model.leaf_joints])


def _run(net, x):
    return np.asarray(net.forward(x), dtype=np.float64)


def _pose_stages(nets, model, x0, at=None):
    """
    Pose stages on a ``(T, 72)`` window; returns (rotations, p_leaf, p_all).

    With ``at`` set and a joint-position stage present, the rotation stage
    is read out only at frame ``at`` and the rotations have shape ``(J, 3, 3)``.
    """
    variant = nets.variant
    p_leaf = p_all = None
    if variant.leaf_stage:
        p_leaf = _run(nets["pose-s1"], x0)
    if variant.all_stage:
        parts = ([p_leaf] if variant.leaf_stage else []) + ([x0] if variant.s2_imu else [])
        p_all = _run(nets["pose-s2"], stage_inputs(*parts))
    prior = p_all if p_all is not None else p_leaf
    parts = ([prior] if prior is not None else []) + ([x0] if variant.s3_imu else [])
    s3_in = stage_inputs(*parts)
    if at is not None and p_all is not None:
        r6d = np.asarray(nets["pose-s3"].forward_at(s3_in, at), dtype=np.float64)
        G = assemble_pose(model, root_rotation(x0[at]), r6d)
    else:
        G = assemble_pose(model, root_rotation(x0), _run(nets["pose-s3"], s3_in))
        if p_all is None:
            p_all = root_frame_positions(model, G).reshape(len(x0), -1)
        if at is not None:
            G = G[at]
    if p_leaf is None:
        p_leaf = p_all[:, _leaf_columns(model)]
    return G, p_leaf, p_all


def _check_input(x0):
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 2 or x0.shape[1] != INPUT_WIDTH:
        raise DimensionMismatch(f"expected a (T, {INPUT_WIDTH}) input sequence, got {x0.shape}")
    return x0


def estimate_pose_offline(nets, model, x0):
    """
    Full-sequence pose estimation.

    Returns
    -------
    rotations : (T, J, 3, 3) global joint rotations
    p_leaf : (T, 15)
    p_all : (T, 3 (J-1))
    """
    x0 = _check_input(x0)
    nets.check(model)
    return _pose_stages(nets, model, x0)


# --------------------------------------------------------------------------
# translation

def trans_b1_velocity(model, pose_prev, pose_cur, contact_probs, vg=GRAVITY_VELOCITY):
    """
    Root velocity from the supporting foot between two poses.

    The supporting foot is the one with the larger contact probability (left
    on ties); returns ``(v_f, s)`` with ``s = max(s_l, s_r)``.
    """
    probs = np.asarray(contact_probs, dtype=np.float64)
    foot = model.feet[0] if probs[0] >= probs[1] else model.feet[1]
    prev = forward_kinematics(model, pose_prev)[foot]
    cur = forward_kinematics(model, pose_cur)[foot]
    v = prev - cur
    v[1] -= vg
    return v, float(probs.max())


def foot_velocities(model, poses, contact_probs, vg=GRAVITY_VELOCITY):
    """Vectorized :func:`trans_b1_velocity` over a sequence; frame 0 is zero."""
    probs = np.asarray(contact_probs, dtype=np.float64)
    feet = forward_kinematics(model, poses)[:, list(model.feet)]
    support = np.where(probs[:, 0] >= probs[:, 1], 0, 1)
    T = len(feet)
    v = np.zeros((T, 3))
    idx = np.arange(1, T)
    v[1:] = feet[idx - 1, support[1:]] - feet[idx, support[1:]]
    v[1:, 1] -= vg
    return v, probs.max(axis=1)


def trans_b2_velocity(net, state, x2, root_rot):
    """
    One streaming step of the velocity network, rotated into the world frame.

    Returns ``(new_state, v_e)``.
    """
    state, v_local = net.step(state, x2)
    return state, np.asarray(root_rot, dtype=np.float64) @ np.asarray(v_local, dtype=np.float64)


def fuse_velocity(v_f, v_e, s, lower=S_LOWER, upper=S_UPPER):
    """
    Blend foot-based and network-based velocities by contact confidence.

    ``v_e`` below ``lower``, ``v_f`` at or above ``upper``, linear in between.
    Works per frame (``s`` scalar) or over sequences (``s`` shape ``(T,)``).
    """
    if not (0.0 <= lower < upper <= 1.0):
        raise BadThresholds(f"need 0 <= lower < upper <= 1, got ({lower}, {upper})")
    v_f = np.asarray(v_f, dtype=np.float64)
    v_e = np.asarray(v_e, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    w = ((s - lower) / (upper - lower))[..., None]
    blend = (1.0 - w) * v_e + w * v_f
    return np.where((s >= upper)[..., None], v_f, np.where((s < lower)[..., None], v_e, blend))


# --------------------------------------------------------------------------
# offline run

@dataclass(frozen=True)
class PipelineOptions:
    vg: float = GRAVITY_VELOCITY
    s_lower: float = S_LOWER
    s_upper: float = S_UPPER
    translation: str = "fusion"      # fusion | foot | network

    def __post_init__(self):
        if not (0.0 <= self.s_lower < self.s_upper <= 1.0):
            raise BadThresholds(f"need 0 <= s_lower < s_upper <= 1, got ({self.s_lower}, {self.s_upper})")
        if self.translation not in ("fusion", "foot", "network"):
            raise ValueError(f"unknown translation mode {self.translation!r}")


@dataclass
class CaptureResult:
    """Per-frame pipeline outputs; velocities in meters per frame, world frame."""

    poses: np.ndarray          # (T, J, 3, 3) global rotations
    contacts: np.ndarray       # (T, 2)
    v_foot: np.ndarray         # (T, 3)
    v_net: np.ndarray          # (T, 3)
    velocity: np.ndarray       # (T, 3)
    trajectory: np.ndarray     # (T, 3)
    p_leaf: np.ndarray = None
    p_all: np.ndarray = None
    fps: float = 60.0

    def __len__(self):
        return len(self.poses)

    def to_motion(self):
        from .skeleton import MotionSequence
        return MotionSequence(self.poses, self.trajectory, self.fps)


def _select_velocity(options, v_f, v_e, s):
    if options.translation == "foot":
        return v_f
    if options.translation == "network":
        return v_e
    return fuse_velocity(v_f, v_e, s, options.s_lower, options.s_upper)


def run_offline(nets, model, x0, options=None, contacts=None, fps=60.0):
    """
    Whole-sequence capture.

    ``contacts`` optionally replaces the contact network's probabilities
    (e.g. with ground truth). The first frame defines the origin and has zero
    velocity.
    """
    options = options or PipelineOptions()
    x0 = _check_input(x0)
    nets.check(model)
    G, p_leaf, p_all = _pose_stages(nets, model, x0)
    T = len(x0)
    if contacts is None:
        probs = _run(nets["trans-b1"], stage_inputs(p_leaf, x0))
    else:
        probs = np.asarray(contacts, dtype=np.float64)
        if probs.shape != (T, 2):
            raise DimensionMismatch(f"contacts must be ({T}, 2), got {probs.shape}")
    v_f, s = foot_velocities(model, G, probs, options.vg)
    if options.translation == "foot":
        v_e = np.zeros((T, 3))
    else:
        v_local = _run(nets["trans-b2"], stage_inputs(p_all, x0))
        v_e = np.einsum("tij,tj->ti", G[:, 0], v_local)
    v = _select_velocity(options, v_f, v_e, s)
    v[0] = 0.0
    return CaptureResult(G, probs, v_f, v_e, v, np.cumsum(v, axis=0), p_leaf, p_all, fps)


# --------------------------------------------------------------------------
# online (sliding window) run

@dataclass
class FrameResult:
    index: int
    pose: np.ndarray           # (J, 3, 3)
    contacts: np.ndarray       # (2,)
    v_foot: np.ndarray
    v_net: np.ndarray
    velocity: np.ndarray
    position: np.ndarray


def _window_outputs(nets, model, window):
    """Pose, contacts and p_all at the current-frame slot of a 26-frame window."""
    k = PAST_FRAMES
    pose, p_leaf, p_all = _pose_stages(nets, model, window, at=k)
    probs = np.asarray(nets["trans-b1"].forward_at(stage_inputs(p_leaf, window), k), dtype=np.float64)
    return pose, probs, p_all, root_rotation(window)


class _Tracker:
    """Per-frame translation bookkeeping shared by the online session and its replica."""

    def __init__(self, nets, model, options):
        self.nets, self.model, self.options = nets, model, options
        self.b2 = nets["trans-b2"] if options.translation != "foot" else None
        self.b2_state = self.b2.initial_state() if self.b2 is not None and not self.b2.spec.bidirectional else None
        self.prev_pose = None
        self.position = np.zeros(3)
        self.index = 0

    def advance(self, window, pose, probs, p_all, root_rots):
        k = PAST_FRAMES
        if self.b2 is None:
            v_e = np.zeros(3)
        elif self.b2.spec.bidirectional:
            v_local = self.b2.forward_at(stage_inputs(p_all, window), k)
            v_e = root_rots[k] @ np.asarray(v_local, dtype=np.float64)
        else:
            x2 = stage_inputs(p_all[k], window[k])
            self.b2_state, v_e = trans_b2_velocity(self.b2, self.b2_state, x2, root_rots[k])
        if self.prev_pose is None:
            v_f = np.zeros(3)
            v = np.zeros(3)
        else:
            v_f, s = trans_b1_velocity(self.model, self.prev_pose, pose, probs, self.options.vg)
            v = _select_velocity(self.options, v_f, v_e, s)
        self.position = self.position + v
        out = FrameResult(self.index, pose, probs, v_f, v_e, v, self.position)
        self.prev_pose = pose
        self.index += 1
        return out


class OnlineSession:
    """
    Sliding-window capture with 20 past and 5 future frames.

    Frame ``t`` is emitted once frame ``t + 5`` has been pushed. Missing past
    context at start-up is filled by repeating the first frame; :meth:`finish`
    flushes the last five frames by repeating the final frame.
    """

    def __init__(self, nets, model, options=None):
        self.nets = nets.check(model)
        self.model = model
        self.options = options or PipelineOptions()
        self._buf = deque(maxlen=WINDOW)
        self._first = None
        self._pushed = 0
        self._tracker = _Tracker(nets, model, self.options)

    @property
    def latency(self):
        return FUTURE_FRAMES

    def _window(self, t, last):
        """Frames ``t-20 .. t+5`` from the buffer, edge-padded; ``last`` is the newest index."""
        rows = []
        oldest = last - len(self._buf) + 1
        for i in range(t - PAST_FRAMES, t + FUTURE_FRAMES + 1):
            i = min(max(i, 0), last)
            rows.append(self._first if i == 0 else self._buf[i - oldest])
        return np.stack(rows)

    def _emit(self, t, last):
        window = self._window(t, last)
        pose, probs, p_all, roots = _window_outputs(self.nets, self.model, window)
        return self._tracker.advance(window, pose, probs, p_all, roots)

    def push(self, frame):
        """Add one normalized frame; returns the result for frame ``t - 5`` or ``None``."""
        frame = np.asarray(frame, dtype=np.float64)
        if frame.shape != (INPUT_WIDTH,):
            raise DimensionMismatch(f"expected a {INPUT_WIDTH}-vector frame, got {frame.shape}")
        frame = frame.copy()
        if self._first is None:
            self._first = frame
        self._buf.append(frame)
        last = self._pushed
        self._pushed += 1
        t = last - FUTURE_FRAMES
        return self._emit(t, last) if t >= 0 else None

    def finish(self):
        """Results for the frames still waiting on future context."""
        last = self._pushed - 1
        start = max(0, self._pushed - FUTURE_FRAMES)
        return [self._emit(t, last) for t in range(start, self._pushed)]


def online_step(session, frame):
    return session.push(frame)


def run_online(nets, model, x0, options=None):
    """Feed a sequence through an :class:`OnlineSession`; returns a :class:`CaptureResult`."""
    session = OnlineSession(nets, model, options)
    out = [r for r in (session.push(f) for f in _check_input(x0)) if r is not None]
    out.extend(session.finish())
    return _collect(out)


def window_replica(nets, model, x0, options=None):
    """
    Offline replica of the online session: for every frame the same
    edge-padded 26-frame window is cut from the full sequence and pushed
    through the same per-frame code.
    """
    options = options or PipelineOptions()
    x0 = _check_input(x0)
    nets.check(model)
    tracker = _Tracker(nets, model, options)
    T = len(x0)
    out = []
    for t in range(T):
        idx = np.clip(np.arange(t - PAST_FRAMES, t + FUTURE_FRAMES + 1), 0, T - 1)
        window = np.stack([x0[i].copy() for i in idx])
        pose, probs, p_all, roots = _window_outputs(nets, model, window)
        out.append(tracker.advance(window, pose, probs, p_all, roots))
    return _collect(out)


def _collect(frames, fps=60.0):
    if not frames:
        raise DimensionMismatch("no frames were produced")
    return CaptureResult(
        poses=np.stack([f.pose for f in frames]),
        contacts=np.stack([f.contacts for f in frames]),
        v_foot=np.stack([f.v_foot for f in frames]),
        v_net=np.stack([f.v_net for f in frames]),
        velocity=np.stack([f.velocity for f in frames]),
        trajectory=np.stack([f.position for f in frames]),
        fps=fps,
    )
