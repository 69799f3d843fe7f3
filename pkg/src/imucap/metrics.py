"""
Evaluation metrics: pose errors, jitter, cumulative translation drift and
acceleration PCK.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, SequenceTooShort
from .rotmath import geodesic_angle_deg
from .skeleton import forward_kinematics, skin_markers

METRIC_NAMES = ("sip_deg", "angular_deg", "positional_cm", "marker_cm", "jitter_100m_s3")
METRIC_LABELS = {
    "sip_deg": "SIP error (deg)",
    "angular_deg": "angular error (deg)",
    "positional_cm": "positional error (cm)",
    "marker_cm": "marker error (cm)",
    "jitter_100m_s3": "jitter (10^2 m/s^3)",
}
ANGULAR_NOTE = "angular error covers the predicted joint set only; identity-filled joints are excluded"


@dataclass
class PoseMetricsReport:
    """Mean and standard deviation (over frames) of each pose metric."""

    mean: dict
    std: dict
    frames: int

    def rows(self):
        return [(METRIC_LABELS[k], self.mean[k], self.std[k]) for k in METRIC_NAMES]

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# {ANGULAR_NOTE}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "mean", "std"])
        for k in METRIC_NAMES:
            w.writerow([k, repr(float(self.mean[k])), repr(float(self.std[k]))])
        return buf.getvalue()

    def table(self):
        width = max(len(label) for label in METRIC_LABELS.values())
        lines = [f"{'metric'.ljust(width)}   mean (+/- std)  [{self.frames} frames]"]
        for label, m, s in self.rows():
            lines.append(f"{label.ljust(width)}   {m:8.3f} (+/- {s:.3f})")
        lines.append(f"note: {ANGULAR_NOTE}")
        return "\n".join(lines)


def _check_lengths(a, b):
    if len(a) != len(b):
        raise LengthMismatch(f"sequences differ in length: {len(a)} vs {len(b)}")


def jerk(positions, fps):
    """
    Third derivative by the central stencil
    ``(x[t+2] - 2 x[t+1] + 2 x[t-1] - x[t-2]) / 2 * fps^3`` for ``t`` in ``[2, T-3]``.
    """
    x = np.asarray(positions, dtype=np.float64)
    if len(x) < 5:
        raise SequenceTooShort("jerk needs at least 5 frames")
    return (x[4:] - 2.0 * x[3:-1] + 2.0 * x[1:-3] - x[:-4]) * (0.5 * fps ** 3)


def pose_metrics(est, gt, model, fps=60.0):
    """
    Pose errors between two global-rotation sequences ``(T, J, 3, 3)``.

    Positions and markers are compared with each body's root at the origin;
    jitter is the mean jerk magnitude of the estimate's root-relative joints.
    """
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_lengths(est, gt)
    if est.shape != gt.shape:
        raise LengthMismatch(f"pose shapes differ: {est.shape} vs {gt.shape}")
    sip = list(model.sip_joints)
    pred = list(model.predicted_joints)
    per_frame = {
        "sip_deg": geodesic_angle_deg(est[:, sip], gt[:, sip]).mean(axis=1),
        "angular_deg": geodesic_angle_deg(est[:, pred], gt[:, pred]).mean(axis=1),
    }
    p_est, p_gt = forward_kinematics(model, est), forward_kinematics(model, gt)
    per_frame["positional_cm"] = 100.0 * np.linalg.norm(p_est - p_gt, axis=-1).mean(axis=1)
    m_est, m_gt = skin_markers(model, est), skin_markers(model, gt)
    per_frame["marker_cm"] = 100.0 * np.linalg.norm(m_est - m_gt, axis=-1).mean(axis=1)
    per_frame["jitter_100m_s3"] = np.linalg.norm(jerk(p_est, fps), axis=-1).mean(axis=1) / 100.0
    return PoseMetricsReport(
        mean={k: float(v.mean()) for k, v in per_frame.items()},
        std={k: float(v.std()) for k, v in per_frame.items()},
        frames=len(est),
    )


def combine_reports(reports):
    """Frame-weighted pooling of several reports (means and pooled standard deviations)."""
    n = np.array([r.frames for r in reports], dtype=np.float64)
    mean, std = {}, {}
    for k in METRIC_NAMES:
        m = np.array([r.mean[k] for r in reports])
        s = np.array([r.std[k] for r in reports])
        mu = float((n * m).sum() / n.sum())
        mean[k] = mu
        std[k] = float(np.sqrt((n * (s ** 2 + (m - mu) ** 2)).sum() / n.sum()))
    return PoseMetricsReport(mean, std, int(n.sum()))


@dataclass
class DriftCurve:
    seconds: np.ndarray
    error: np.ndarray          # meters
    samples: np.ndarray        # start frames averaged per point

    def at(self, seconds):
        return float(np.interp(seconds, self.seconds, self.error))

    def to_csv(self):
        lines = ["seconds,error_m"]
        lines += [f"{t:.6g},{e!r}" for t, e in zip(self.seconds, self.error)]
        return "\n".join(lines) + "\n"


def _drift_sums(est, gt, offsets):
    sums = np.zeros(len(offsets))
    counts = np.zeros(len(offsets))
    for i, k in enumerate(offsets):
        if k == 0:
            counts[i] = len(est)
            continue
        d = (est[k:] - est[:-k]) - (gt[k:] - gt[:-k])
        sums[i] = np.linalg.norm(d, axis=-1).sum()
        counts[i] = len(d)
    return sums, counts


def drift_curve(est, gt, fps=60.0, horizon=10.0, step=0.1):
    """
    Mean translation error accumulated over ``tau`` seconds after aligning
    the two trajectories at a start frame, averaged over all start frames.

    ``est``/``gt`` are ``(T, 3)`` root trajectories or lists of them (pooled).
    """
    pairs = list(zip(est, gt)) if isinstance(est, (list, tuple)) else [(est, gt)]
    taus = np.round(np.arange(0.0, horizon + 0.5 * step, step), 10)
    offsets = np.round(taus * fps).astype(int)
    sums = np.zeros(len(taus))
    counts = np.zeros(len(taus))
    for e, g in pairs:
        e = np.asarray(e, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        _check_lengths(e, g)
        if len(e) <= offsets[-1]:
            raise SequenceTooShort(f"need more than {offsets[-1]} frames for a {horizon} s horizon")
        s, c = _drift_sums(e, g, offsets)
        sums += s
        counts += c
    return DriftCurve(taus, sums / counts, counts.astype(int))


def accel_pck(test, ref, thresholds):
    """
    Fraction of samples whose acceleration error norm is within each threshold.

    ``test``/``ref`` are ``(T, S, 3)`` (or ``(T, 3)``) acceleration arrays.
    """
    test = np.asarray(test, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    _check_lengths(test, ref)
    if test.shape != ref.shape:
        raise LengthMismatch(f"acceleration shapes differ: {test.shape} vs {ref.shape}")
    err = np.linalg.norm(test - ref, axis=-1).ravel()
    return np.array([(err <= t).mean() if err.size else 1.0 for t in np.atleast_1d(thresholds)])


def contact_accuracy(probs, labels, threshold=0.5):
    """Per-foot classification accuracy of contact probabilities against binary labels."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    _check_lengths(probs, labels)
    return float(((probs >= threshold) == (labels >= 0.5)).mean())
