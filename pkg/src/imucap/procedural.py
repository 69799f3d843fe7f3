"""
Seeded procedural motion: walking, running, arm swinging, jumping, idling
and turning, stitched from randomly parameterized segments.

Joint angles are driven by a shared gait phase and smoothly blended parameter
tracks. The root translation is derived from the pose by keeping the lower
foot fixed in the world (so foot-contact odometry is exact on grounded
frames); during flight phases the root follows a ballistic arc and keeps its
horizontal momentum.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .rotmath import rot_x, rot_y, rot_z
from .skeleton import MotionSequence, default_skeleton, forward_kinematics, global_from_local

GRAVITY = 9.81
KINDS = ("walk", "run", "armswing", "jump", "idle", "turn")

# parameter tracks, in this order
_TRACKS = ("freq", "hip", "knee_swing", "knee_stance", "arm", "arm_sym", "arm_lower",
           "elbow", "turn", "lean", "sway", "flight", "jump")


def _segment_params(kind, rng):
    u = rng.uniform
    p = dict(freq=0.8, hip=0.0, knee_swing=0.0, knee_stance=0.0, arm=0.05, arm_sym=0.0,
             arm_lower=1.3, elbow=0.15, turn=0.0, lean=0.0, sway=0.02, flight=0.0, jump=0.0)
    if kind == "walk":
        p.update(freq=u(0.8, 1.1), hip=u(0.3, 0.5), knee_swing=u(0.6, 0.9), knee_stance=0.05,
                 arm=u(0.2, 0.45), elbow=u(0.2, 0.5), turn=u(-0.3, 0.3), lean=u(0.0, 0.08),
                 sway=0.04)
    elif kind == "run":
        p.update(freq=u(1.3, 1.6), hip=u(0.55, 0.75), knee_swing=u(1.2, 1.6),
                 knee_stance=u(0.15, 0.3), arm=u(0.5, 0.8), elbow=u(1.2, 1.5),
                 turn=u(-0.3, 0.3), lean=u(0.12, 0.25), sway=0.05, flight=u(0.2, 0.35))
    elif kind == "armswing":
        p.update(freq=u(0.5, 1.2), arm=u(0.8, 1.4), arm_sym=float(rng.integers(0, 2)),
                 arm_lower=u(0.3, 1.3), elbow=u(0.2, 1.5), sway=0.03)
    elif kind == "jump":
        p.update(freq=0.8, arm=0.1, elbow=0.3, jump=1.0)
    elif kind == "idle":
        p.update(freq=u(0.2, 0.4), arm=u(0.0, 0.1), sway=u(0.02, 0.06))
    elif kind == "turn":
        p.update(freq=u(0.6, 0.8), hip=u(0.15, 0.25), knee_swing=u(0.4, 0.6), arm=0.15,
                 elbow=0.3, turn=u(1.0, 2.0) * rng.choice([-1.0, 1.0]), sway=0.03)
    else:
        raise ValueError(f"unknown motion kind {kind!r}")
    return p


@dataclass
class ProceduralMotion:
    """A generated sequence with its ground-truth bookkeeping.

    ``stance`` holds the pinned foot per frame (0 left, 1 right, -1 airborne);
    ``kinds`` the segment kind index into :data:`KINDS` per frame.
    """

    sequence: MotionSequence
    stance: np.ndarray
    kinds: np.ndarray

    def contact_onehot(self):
        """``(T, 2)`` contact probabilities that are 1 on the pinned foot only."""
        out = np.zeros((len(self.stance), 2))
        grounded = self.stance >= 0
        out[np.flatnonzero(grounded), self.stance[grounded]] = 1.0
        return out


def _jump_schedule(jump_track, fps, rng):
    """Per-frame crouch envelope, tuck envelope and flight mask from jump events."""
    T = len(jump_track)
    crouch = np.zeros(T)
    tuck = np.zeros(T)
    flight = np.zeros(T, dtype=bool)
    forward = np.zeros(T)
    t = 0
    while t < T:
        if jump_track[t] < 0.99:
            t += 1
            continue
        n_crouch = int(rng.uniform(0.3, 0.45) * fps)
        n_flight = int(rng.uniform(0.3, 0.5) * fps)
        n_land = int(0.35 * fps)
        end = t + n_crouch + n_flight + n_land
        if end >= T or jump_track[min(end, T - 1)] < 0.99:
            t += 1
            continue
        depth = rng.uniform(0.5, 1.0)
        k = np.arange(n_crouch)
        rise = int(0.7 * n_crouch)
        crouch[t:t + rise] = depth * np.sin(0.5 * np.pi * k[:rise] / rise)
        crouch[t + rise:t + n_crouch] = depth * np.cos(
            0.5 * np.pi * (k[rise:] - rise + 1) / (n_crouch - rise))
        f0 = t + n_crouch
        tuck[f0:f0 + n_flight] = rng.uniform(0.3, 0.8) * np.sin(np.pi * (np.arange(n_flight) + 0.5) / n_flight)
        flight[f0:f0 + n_flight] = True
        forward[f0:f0 + n_flight] = rng.uniform(0.0, 1.2)
        l0 = f0 + n_flight
        crouch[l0:l0 + n_land] = 0.6 * depth * np.sin(np.pi * np.arange(n_land) / n_land)
        t = end + int(rng.uniform(0.2, 0.8) * fps)
    return crouch, tuck, flight, forward


def _local_rotations(model, tr, phase, crouch, tuck):
    """Parent-relative joint rotations ``(T, J, 3, 3)`` from the parameter tracks."""
    T = len(phase)
    J = model.n_joints
    idx = {n: i for i, n in enumerate(model.names)}
    s, c = np.sin(phase), np.cos(phase)

    L = np.tile(np.eye(3), (T, J, 1, 1))
    yaw = tr["yaw"] + 0.08 * tr["hip"] * s
    L[:, 0] = rot_y(yaw) @ rot_x(tr["lean"] + 0.3 * crouch + 0.2 * tuck) @ rot_z(tr["sway"] * c)
    L[:, idx["spine1"]] = rot_y(-0.06 * tr["hip"] * s)
    L[:, idx["spine3"]] = rot_x(-0.5 * tr["lean"])
    L[:, idx["head"]] = rot_x(0.05 * np.sin(0.5 * phase))

    hip_l = tr["hip"] * s + 0.9 * crouch + 1.1 * tuck
    hip_r = -tr["hip"] * s + 0.9 * crouch + 1.1 * tuck
    swing_l, swing_r = np.maximum(c, 0.0), np.maximum(-c, 0.0)
    knee_l = tr["knee_swing"] * swing_l ** 1.5 + tr["knee_stance"] * swing_r + 1.7 * crouch + 1.8 * tuck
    knee_r = tr["knee_swing"] * swing_r ** 1.5 + tr["knee_stance"] * swing_l + 1.7 * crouch + 1.8 * tuck
    L[:, idx["l_hip"]] = rot_x(-hip_l)
    L[:, idx["r_hip"]] = rot_x(-hip_r)
    L[:, idx["l_knee"]] = rot_x(knee_l)
    L[:, idx["r_knee"]] = rot_x(knee_r)

    # left arm swings against the left leg; arm_sym -> 1 moves the right arm in phase with the left
    fwd_l = -tr["arm"] * s - crouch + 1.2 * tuck
    fwd_r = tr["arm"] * s * (1.0 - 2.0 * tr["arm_sym"]) - crouch + 1.2 * tuck
    L[:, idx["l_shoulder"]] = rot_x(-fwd_l) @ rot_z(-tr["arm_lower"])
    L[:, idx["r_shoulder"]] = rot_x(-fwd_r) @ rot_z(tr["arm_lower"])
    L[:, idx["l_elbow"]] = rot_y(-tr["elbow"] * (0.75 + 0.25 * c))
    L[:, idx["r_elbow"]] = rot_y(tr["elbow"] * (0.75 - 0.25 * c))
    return L


def generate_motion(seconds=60.0, seed=0, model=None, fps=60.0, kinds=KINDS,
                    segment_seconds=(3.0, 8.0)):
    """
    Generate one procedural sequence.

    Parameters
    ----------
    seconds : float
        Sequence duration.
    seed : int
        Seed for segment order and parameters; generation is deterministic.
    kinds : sequence of str
        Segment kinds to draw from (subset of :data:`KINDS`).
    segment_seconds : (float, float)
        Range of segment durations.

    Returns
    -------
    ProceduralMotion
    """
    model = model or default_skeleton()
    rng = np.random.default_rng(seed)
    T = int(round(seconds * fps))
    if T < 2:
        raise ValueError("sequence must span at least two frames")
    dt = 1.0 / fps

    raw = {k: np.zeros(T) for k in _TRACKS}
    kind_idx = np.zeros(T, dtype=int)
    t = 0
    while t < T:
        kind = kinds[rng.integers(len(kinds))]
        n = int(rng.uniform(*segment_seconds) * fps)
        for k, v in _segment_params(kind, rng).items():
            raw[k][t:t + n] = v
        kind_idx[t:t + n] = KINDS.index(kind)
        t += n

    sigma = 0.3 * fps
    tr = {k: gaussian_filter1d(v, sigma, mode="nearest") for k, v in raw.items()}
    tr["yaw"] = rng.uniform(-np.pi, np.pi) + np.cumsum(tr["turn"]) * dt
    phase = rng.uniform(0, 2 * np.pi) + 2 * np.pi * np.cumsum(tr["freq"]) * dt

    crouch, tuck, jump_flight, jump_fwd = _jump_schedule(raw["jump"], fps, rng)
    local = _local_rotations(model, tr, phase, crouch, tuck)
    G = global_from_local(model, local)
    pos = forward_kinematics(model, G)
    feet = pos[:, list(model.feet)]                                   # (T, 2, 3)

    # running leaves the ground while the feet swap, i.e. around equal foot heights
    gap = np.abs(feet[:, 0, 1] - feet[:, 1, 1])
    run_flight = (tr["flight"] > 0.05) & (gap < 0.3 * tr["flight"])
    flight = jump_flight | run_flight

    stance = np.where(flight, -1, np.argmin(feet[:, :, 1], axis=1))
    trans = np.zeros((T, 3))
    trans[0, 1] = -feet[0, max(stance[0], 0), 1]
    vel = np.zeros(3)
    launch, k, n = 0.0, 0, 1
    g_step = GRAVITY * dt * dt
    for i in range(1, T):
        sf, prev = stance[i], stance[i - 1]
        if sf >= 0 and prev >= 0 and sf != prev:
            # hand-over between feet: keep the old foot pinned for this frame
            # if that leaves the new foot closer to ground level (height 0)
            keep_old = trans[i - 1, 1] + feet[i - 1, prev, 1] - feet[i, prev, 1] + feet[i, sf, 1]
            take_new = trans[i - 1, 1] + feet[i - 1, sf, 1]
            if abs(keep_old) < abs(take_new):
                sf = stance[i] = prev
        if sf >= 0:
            trans[i] = trans[i - 1] + feet[i - 1, sf] - feet[i, sf]
            vel = trans[i] - trans[i - 1]
            continue
        if stance[i - 1] >= 0:
            # take-off: choose the launch speed so that the landing foot
            # touches down at ground level
            n = 1
            while i + n < T and stance[i + n] < 0:
                n += 1
            last = i + n - 1
            land_foot = stance[last + 1] if last + 1 < T else int(np.argmin(feet[last, :, 1]))
            rise = -feet[last, land_foot, 1] - trans[i - 1, 1]
            launch, k = rise / n + 0.5 * n * g_step, 0
            heading = G[i, 0] @ np.array([0.0, 0.0, 1.0])
            heading[1] = 0.0
            heading /= max(np.linalg.norm(heading), 1e-9)
            vel = np.array([vel[0], 0.0, vel[2]]) + jump_fwd[i] * dt * heading
        k += 1
        trans[i] = trans[i - 1] + vel
        trans[i, 1] += launch - 0.5 * g_step * (2 * k - 1)
    return ProceduralMotion(MotionSequence(G, trans, fps), stance.astype(int), kind_idx)


def generate_dataset(total_seconds, clip_seconds=60.0, seed=0, model=None, fps=60.0, kinds=KINDS):
    """Independent clips totalling ``total_seconds``; clip ``i`` uses seed ``(seed, i)``."""
    out = []
    remaining = total_seconds
    i = 0
    while remaining > 1e-9:
        dur = min(clip_seconds, remaining)
        clip_seed = np.random.SeedSequence([seed, i]).generate_state(1)[0]
        out.append(generate_motion(dur, int(clip_seed), model, fps, kinds))
        remaining -= dur
        i += 1
    return out
