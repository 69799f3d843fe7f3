"""
CSV formats for sequence data.

Every file starts with ``#`` header lines of ``key=value`` pairs; the first
names the format and version, the rest carry provenance (hyperparameters,
seeds, source files). A column-name row follows, then one row per frame.

==============  ==========================================================
imucap-motion   frame, tx, ty, tz, then parent-relative rotations (J x 9)
imucap-imu      frame, 6 x 3 accelerations, 6 x 9 rotations (row-major)
imucap-labels   frame, contact_l, contact_r, vx, vy, vz (root frame)
imucap-capture  frame, contacts, branch and fused velocities, position
==============  ==========================================================
"""

import numpy as np

from .errors import FormatError
from .skeleton import MotionSequence, global_from_local, local_from_global

FORMAT_VERSION = 1
IMU_SPACES = ("raw", "calibrated", "normalized")


def _fmt(v):
    return repr(float(v))


def format_header(fmt, meta=None, **fields):
    """Header lines: the format line, then one ``# key=value`` line per provenance entry."""
    first = f"# format={fmt} version={FORMAT_VERSION}"
    for k, v in fields.items():
        first += f" {k}={v}"
    lines = [first]
    for k, v in (meta or {}).items():
        lines.append(f"# {k}={v}")
    return "\n".join(lines) + "\n"


def parse_header(lines, fmt):
    """Fields of the format line plus provenance entries, checked against ``fmt``."""
    if not lines or not lines[0].startswith("# format="):
        raise FormatError("missing format header line")
    fields = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
    if fields.get("format") != fmt:
        raise FormatError(f"expected format {fmt}, found {fields.get('format')}")
    if int(fields.get("version", -1)) != FORMAT_VERSION:
        raise FormatError(f"unsupported {fmt} version {fields.get('version')}")
    meta = {}
    for line in lines[1:]:
        body = line[1:].strip()
        if "=" in body:
            k, v = body.split("=", 1)
            meta[k.strip()] = v.strip()
    return fields, meta


def _write(path, header, columns, rows):
    with open(path, "w") as f:
        f.write(header)
        f.write(",".join(columns) + "\n")
        for i, row in enumerate(rows):
            f.write(",".join([str(i)] + [_fmt(v) for v in row]) + "\n")


def _read(path, fmt, width=None):
    with open(path) as f:
        text = f.read().splitlines()
    head = [ln for ln in text if ln.startswith("#")]
    body = [ln for ln in text if ln and not ln.startswith("#")]
    fields, meta = parse_header(head, fmt)
    if not body:
        raise FormatError(f"{path}: no column row")
    columns = body[0].split(",")
    try:
        data = np.array([[float(v) for v in ln.split(",")] for ln in body[1:]], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric value ({exc})") from exc
    if data.size == 0:
        data = np.zeros((0, len(columns)))
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise FormatError(f"{path}: rows do not match the {len(columns)} columns")
    if width is not None and data.shape[1] != width + 1:
        raise FormatError(f"{path}: expected {width} value columns, found {data.shape[1] - 1}")
    return fields, meta, data[:, 1:]


# --------------------------------------------------------------------------
# motion

def motion_columns(model):
    cols = ["frame", "tx", "ty", "tz"]
    for name in model.names:
        cols += [f"{name}_r{i}{j}" for i in range(3) for j in range(3)]
    return cols


def write_motion(path, seq, model, meta=None):
    local = local_from_global(model, seq.rotations).reshape(len(seq), -1)
    rows = np.concatenate([seq.translation, local], axis=1)
    header = format_header("imucap-motion", meta, fps=_fmt(seq.fps), joints=model.n_joints,
                           skeleton=model.name)
    _write(path, header, motion_columns(model), rows)


def read_motion(path, model):
    fields, meta, data = _read(path, "imucap-motion", 3 + 9 * model.n_joints)
    if int(fields.get("joints", model.n_joints)) != model.n_joints:
        raise FormatError(f"{path}: motion has {fields['joints']} joints, skeleton has {model.n_joints}")
    local = data[:, 3:].reshape(len(data), model.n_joints, 3, 3)
    seq = MotionSequence(global_from_local(model, local), data[:, :3], float(fields.get("fps", 60.0)))
    return seq, meta


# --------------------------------------------------------------------------
# inertial data

def imu_columns():
    from .skeleton import SENSORS
    cols = ["frame"]
    cols += [f"{s}_a{k}" for s in SENSORS for k in "xyz"]
    cols += [f"{s}_r{i}{j}" for s in SENSORS for i in range(3) for j in range(3)]
    return cols


def write_imu(path, accelerations, orientations, fps, space="calibrated", meta=None):
    """Store ``(T, 6, 3)`` accelerations and ``(T, 6, 3, 3)`` orientations."""
    if space not in IMU_SPACES:
        raise ValueError(f"space must be one of {IMU_SPACES}")
    acc = np.asarray(accelerations, dtype=np.float64)
    ori = np.asarray(orientations, dtype=np.float64)
    rows = np.concatenate([acc.reshape(len(acc), 18), ori.reshape(len(ori), 54)], axis=1)
    write_imu_rows(path, rows, fps, space, meta)


def write_imu_rows(path, rows, fps, space="normalized", meta=None):
    """Store 72-wide rows (the normalized input shares the raw/calibrated layout)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != 72:
        raise FormatError("IMU rows must be 72 wide")
    _write(path, format_header("imucap-imu", meta, fps=_fmt(fps), space=space), imu_columns(), rows)


def read_imu(path):
    """Returns ``(rows (T, 72), fps, space, meta)``."""
    fields, meta, data = _read(path, "imucap-imu", 72)
    space = fields.get("space", "calibrated")
    if space not in IMU_SPACES:
        raise FormatError(f"{path}: unknown space {space!r}")
    return data, float(fields.get("fps", 60.0)), space, meta


def split_imu_rows(rows):
    rows = np.asarray(rows, dtype=np.float64)
    return rows[:, :18].reshape(-1, 6, 3), rows[:, 18:].reshape(-1, 6, 3, 3)


# --------------------------------------------------------------------------
# labels and capture sidecars

LABEL_COLUMNS = ["frame", "contact_l", "contact_r", "vx", "vy", "vz"]


def write_labels(path, contacts, velocity, fps, meta=None):
    rows = np.concatenate([np.asarray(contacts, dtype=np.float64), np.asarray(velocity, dtype=np.float64)], axis=1)
    _write(path, format_header("imucap-labels", meta, fps=_fmt(fps)), LABEL_COLUMNS, rows)


def read_labels(path):
    fields, meta, data = _read(path, "imucap-labels", 5)
    return data[:, :2], data[:, 2:], float(fields.get("fps", 60.0)), meta


CAPTURE_COLUMNS = ["frame", "contact_l", "contact_r", "vfx", "vfy", "vfz", "vex", "vey", "vez",
                   "vx", "vy", "vz", "px", "py", "pz"]


def capture_rows(result):
    return np.concatenate([result.contacts, result.v_foot, result.v_net, result.velocity,
                           result.trajectory], axis=1)


def write_capture(path, result, meta=None):
    _write(path, format_header("imucap-capture", meta, fps=_fmt(result.fps)), CAPTURE_COLUMNS,
           capture_rows(result))


def read_capture(path):
    fields, meta, data = _read(path, "imucap-capture", len(CAPTURE_COLUMNS) - 1)
    return {
        "contacts": data[:, 0:2], "v_foot": data[:, 2:5], "v_net": data[:, 5:8],
        "velocity": data[:, 8:11], "trajectory": data[:, 11:14], "fps": float(fields.get("fps", 60.0)),
        "meta": meta,
    }


def stream_columns(model):
    """Columns of the line-delimited streaming output."""
    return CAPTURE_COLUMNS + [c for c in motion_columns(model)[4:]]


def stream_row(frame, model):
    """One streaming output line for an online frame result."""
    local = local_from_global(model, frame.pose).reshape(-1)
    vals = np.concatenate([frame.contacts, frame.v_foot, frame.v_net, frame.velocity, frame.position, local])
    return ",".join([str(frame.index)] + [_fmt(v) for v in vals])


# --------------------------------------------------------------------------
# external corpora

def import_amass_npz(path, model):
    """
    Import-adapter stub for AMASS-style ``.npz`` archives.

    Expected layout: ``poses`` (T, 72 or more) axis-angle per SMPL joint in
    parent-relative form, ``trans`` (T, 3) root translation in meters, and
    ``mocap_framerate``. No data ships with this package.
    """
    from .rotmath import axis_angle_to_matrix
    with np.load(path) as z:
        missing = {"poses", "trans"} - set(z.files)
        if missing:
            raise FormatError(f"{path}: missing arrays {sorted(missing)}")
        poses = np.asarray(z["poses"], dtype=np.float64)
        trans = np.asarray(z["trans"], dtype=np.float64)
        fps = float(z["mocap_framerate"]) if "mocap_framerate" in z.files else 60.0
    J = model.n_joints
    if poses.shape[1] < 3 * J:
        raise FormatError(f"{path}: poses have {poses.shape[1]} values, need {3 * J}")
    local = axis_angle_to_matrix(poses[:, :3 * J].reshape(len(poses), J, 3))
    return MotionSequence(global_from_local(model, local), trans, fps)
