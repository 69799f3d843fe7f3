"""
Desk-scale end-to-end benchmark on procedural motion.

Trains every network on a seeded procedural corpus and scores a held-out
split against two references: a rest pose driven only by the measured root
orientation, and the foot-contact translation branch fed with ground-truth
contacts.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .calibration import root_rotation
from .metrics import contact_accuracy, drift_curve, pose_metrics
from .nets import TrainingConfig
from .pipeline import NET_NAMES, PipelineOptions, run_offline
from .procedural import generate_dataset
from .skeleton import default_skeleton
from .training import prepare_sequence, train_pipeline


def rest_pose_baseline(model, x0):
    """Every joint takes the measured root orientation (identity local rotations)."""
    R = root_rotation(x0)
    return np.repeat(R[:, None], model.n_joints, axis=1)


@dataclass
class BenchmarkResult:
    positional_cm: float
    baseline_positional_cm: float
    contact_accuracy: float
    drift_m: float
    baseline_drift_m: float
    train_seconds: float
    curves: dict = field(default_factory=dict)

    @property
    def positional_ratio(self):
        return self.positional_cm / self.baseline_positional_cm

    @property
    def drift_ratio(self):
        return self.drift_m / self.baseline_drift_m

    def lines(self):
        return [
            f"positional error {self.positional_cm:.2f} cm vs rest-pose {self.baseline_positional_cm:.2f} cm "
            f"(ratio {self.positional_ratio:.3f})",
            f"contact accuracy {100 * self.contact_accuracy:.1f}%",
            f"10 s drift {self.drift_m:.3f} m vs ground-truth-contact foot branch {self.baseline_drift_m:.3f} m "
            f"(ratio {self.drift_ratio:.3f})",
            f"training time {self.train_seconds:.0f} s",
        ]


def evaluate(nets, model, motions, data, options=None, horizon=10.0):
    """
    Score a trained bundle on held-out sequences.

    ``motions`` are MotionSequences and ``data`` the matching SequenceData.
    The drift reference runs the foot branch on the estimated poses with
    ground-truth contacts and the same gravity velocity as ``options``.
    """
    options = options or PipelineOptions(vg=0.0)
    est_reports, base_reports = [], []
    trajectories, references, truths = [], [], []
    correct = frames = 0
    for seq, d in zip(motions, data):
        result = run_offline(nets, model, d.x0, options, fps=seq.fps)
        est_reports.append(pose_metrics(result.poses, seq.rotations, model, seq.fps))
        base_reports.append(pose_metrics(rest_pose_baseline(model, d.x0), seq.rotations, model, seq.fps))
        correct += contact_accuracy(result.contacts, d.contacts) * d.contacts.size
        frames += d.contacts.size
        foot_only = run_offline(nets, model, d.x0, PipelineOptions(vg=options.vg, translation="foot"),
                                contacts=d.contacts, fps=seq.fps)
        gt = seq.translation - seq.translation[0]
        trajectories.append(result.trajectory)
        references.append(foot_only.trajectory)
        truths.append(gt)
    fps = motions[0].fps
    drift = drift_curve(trajectories, truths, fps, horizon).error[-1]
    base_drift = drift_curve(references, truths, fps, horizon).error[-1]
    return {
        "positional_cm": float(np.mean([r.mean["positional_cm"] for r in est_reports])),
        "baseline_positional_cm": float(np.mean([r.mean["positional_cm"] for r in base_reports])),
        "contact_accuracy": correct / frames,
        "drift_m": float(drift),
        "baseline_drift_m": float(base_drift),
    }


def desk_benchmark(train_minutes=20.0, test_minutes=3.0, clip_seconds=60.0, epochs=15, lr=2e-3,
                   batch_size=32, window=60, seed=0, dtype="float32", log=None, model=None):
    """Generate, train all five networks, evaluate; returns a :class:`BenchmarkResult`."""
    model = model or default_skeleton()
    train_clips = generate_dataset(train_minutes * 60.0, clip_seconds, seed=2 * seed + 1, model=model)
    test_clips = generate_dataset(test_minutes * 60.0, clip_seconds, seed=2 * seed + 2, model=model)
    train_data = [prepare_sequence(c.sequence, model) for c in train_clips]
    test_data = [prepare_sequence(c.sequence, model) for c in test_clips]
    configs = {n: TrainingConfig(lr=lr, batch_size=batch_size, window=window, epochs=epochs, dtype=dtype)
               for n in NET_NAMES}
    start = time.perf_counter()
    bundle, curves = train_pipeline(train_data, configs=configs, seed=seed, log=log)
    elapsed = time.perf_counter() - start
    scores = evaluate(bundle, model, [c.sequence for c in test_clips], test_data)
    return BenchmarkResult(train_seconds=elapsed, curves=curves, **scores), bundle
