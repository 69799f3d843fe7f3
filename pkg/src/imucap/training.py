"""
Per-network training sets built from motion sequences, and a driver that
trains a whole pipeline in dependency order.
"""

from dataclasses import dataclass, replace

import numpy as np

from .calibration import DEFAULT_ACCEL_SCALE, normalize
from .errors import DimensionMismatch
from .nets import CANONICAL_SPECS, Network, TrainingConfig, train
from .pipeline import NET_NAMES, NetworkBundle, PoseVariant, S_UPPER, root_frame_positions, stage_inputs
from .rotmath import matrix_to_rot6d
from .skeleton import root_relative_rotations
from .synth import (CONTACT_THRESHOLD, SMOOTHING_N, gt_root_velocity, label_contacts,
                    select_airborne_clips, synthesize_imu)

LEAF_NOISE = 0.04
JOINT_NOISE = 0.025
CONTACT_NOISE = 0.04
VELOCITY_NOISE = 0.025
NET_LOSS = {"pose-s1": "mse", "pose-s2": "mse", "pose-s3": "mse",
            "trans-b1": "contact", "trans-b2": "velocity"}


@dataclass
class SequenceData:
    """Network inputs and targets derived from one motion sequence."""

    x0: np.ndarray          # (T, 72)
    p_leaf: np.ndarray      # (T, 15)
    p_all: np.ndarray       # (T, 69)
    rot6d: np.ndarray       # (T, 6 * predicted)
    contacts: np.ndarray    # (T, 2)
    velocity: np.ndarray    # (T, 3), root frame, m/frame

    def __len__(self):
        return len(self.x0)


def prepare_sequence(seq, model, mount=None, n=SMOOTHING_N, accel_scale=DEFAULT_ACCEL_SCALE,
                     u=CONTACT_THRESHOLD):
    acc, ori = synthesize_imu(seq, model, mount, n)
    return sequence_data(seq, model, normalize(acc, ori, accel_scale),
                         label_contacts(seq, model, u), gt_root_velocity(seq))


def network_dataset(name, data, variant=PoseVariant(), clips=None):
    """
    ``(inputs, targets)`` pairs and noise settings for one network.

    Ground-truth positions stand in for earlier stages' outputs; the noise
    columns say where augmentation applies. ``clips`` restricts the
    velocity network to ``(sequence, start, stop)`` ranges.

    Returns
    -------
    pairs : list of (ndarray, ndarray)
    noise : (sigma, columns) with columns a ``(start, stop)`` pair or None
    """
    pairs = []
    noise = (0.0, None)
    for d in data:
        if name == "pose-s1":
            pairs.append((d.x0, d.p_leaf))
        elif name == "pose-s2":
            parts = ([d.p_leaf] if variant.leaf_stage else []) + ([d.x0] if variant.s2_imu else [])
            pairs.append((stage_inputs(*parts), d.p_all))
            if variant.leaf_stage:
                noise = (LEAF_NOISE, (0, 15))
        elif name == "pose-s3":
            prior = d.p_all if variant.all_stage else d.p_leaf if variant.leaf_stage else None
            parts = ([prior] if prior is not None else []) + ([d.x0] if variant.s3_imu else [])
            pairs.append((stage_inputs(*parts), d.rot6d))
            if prior is not None:
                noise = (JOINT_NOISE, (0, prior.shape[1]))
        elif name == "trans-b1":
            pairs.append((stage_inputs(d.p_leaf, d.x0), d.contacts))
            noise = (CONTACT_NOISE, None)
        elif name == "trans-b2":
            noise = (VELOCITY_NOISE, None)
        else:
            raise ValueError(f"unknown network {name!r}")
    if name == "trans-b2":
        if clips is None:
            clips = [(i, 0, len(d)) for i, d in enumerate(data)]
        for i, start, stop in clips:
            d = data[i]
            pairs.append((stage_inputs(d.p_all, d.x0)[start:stop], d.velocity[start:stop]))
    return pairs, noise


def contact_clips(b1, data, sbar=S_UPPER, context=30, max_len=300):
    """Airborne clips of the training set according to a trained contact network."""
    probs = [b1.forward(stage_inputs(d.p_leaf, d.x0)) for d in data]
    return select_airborne_clips(probs, sbar, max_len, context)


def variant_specs(variant, base=None):
    """Specs whose input widths match a pose-stage variant (absent stages dropped)."""
    base = base or CANONICAL_SPECS
    widths = variant.input_widths()
    out = {}
    for name in NET_NAMES:
        if name.startswith("pose") and name not in widths:
            continue
        spec = base[name]
        if name in widths:
            spec = replace(spec, input_width=widths[name])
        out[name] = spec
    return out


def train_pipeline(data, specs=None, configs=None, seed=0, log=None, names=NET_NAMES,
                   clip_context=30, b2_loss="velocity", initial=None):
    """
    Train the networks of a pipeline one after another.

    Parameters
    ----------
    data : list of SequenceData
    specs : dict name -> NetworkSpec, defaults to the canonical sizes
    configs : dict name -> TrainingConfig (noise settings are filled in)
    initial : NetworkBundle to fine-tune instead of fresh initialization
    log : callable ``(name, epoch, loss)``

    Returns
    -------
    bundle : NetworkBundle
    curves : dict name -> list of per-epoch losses
    """
    specs = specs or CANONICAL_SPECS
    configs = configs or {}
    nets, curves = {}, {}
    variant = _variant_of(specs)
    for k, name in enumerate(n for n in NET_NAMES if n in names and n in specs):
        clips = None
        if name == "trans-b2":
            b1 = nets.get("trans-b1") or (initial.nets.get("trans-b1") if initial else None)
            if b1 is not None:
                clips = contact_clips(b1, data, context=clip_context)
            if clips == []:
                clips = None
        pairs, (sigma, cols) = network_dataset(name, data, variant, clips)
        cfg = configs.get(name, TrainingConfig())
        cfg = replace(cfg, noise_sigma=sigma, noise_columns=cols, seed=cfg.seed + seed * 101 + k)
        if initial is not None and name in initial:
            net = initial[name]
        else:
            net = Network.create(specs[name], seed=seed * 101 + k)
        loss = b2_loss if name == "trans-b2" else NET_LOSS[name]
        result = train(net, pairs, loss, cfg,
                       log=(lambda e, v, n=name: log(n, e, v)) if log else None)
        nets[name], curves[name] = result.net, result.losses
    return NetworkBundle(nets), curves


def _variant_of(specs):
    s2 = specs.get("pose-s2")
    s3 = specs["pose-s3"]
    return PoseVariant(leaf_stage="pose-s1" in specs, all_stage=s2 is not None,
                       s2_imu=s2 is None or s2.input_width != 15,
                       s3_imu=s3.input_width >= 72)


def sequence_data(seq, model, x0, contacts, velocity):
    """:class:`SequenceData` from a motion plus already-synthesized inputs and labels."""
    T = len(seq)
    for label, arr in (("inputs", x0), ("contacts", contacts), ("velocities", velocity)):
        if len(arr) != T:
            raise DimensionMismatch(f"{label} have {len(arr)} frames, motion has {T}")
    p = root_frame_positions(model, seq.rotations)
    rel = root_relative_rotations(seq.rotations)[:, list(model.predicted_joints)]
    return SequenceData(
        x0=np.asarray(x0, dtype=np.float64),
        p_leaf=p[:, [j - 1 for j in model.leaf_joints]].reshape(T, -1),
        p_all=p.reshape(T, -1),
        rot6d=matrix_to_rot6d(rel).reshape(T, -1),
        contacts=np.asarray(contacts, dtype=np.float64),
        velocity=np.asarray(velocity, dtype=np.float64),
    )
