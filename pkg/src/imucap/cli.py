"""
Command-line interface: ``imucap <command> [options]``.

Exit codes: 0 success, 1 invalid input, 2 usage error, 3 non-finite
training loss, 4 file or format error.
"""

import argparse
import glob
import json
import os
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .calibration import (DEFAULT_ACCEL_SCALE, CalibrationState, apply_calibration, calibrate_t_pose,
                          estimate_global_alignment, normalize)
from .errors import EmptyInput, FormatError, ImucapError, NonFiniteLoss
from .io import (read_imu, read_labels, read_motion, split_imu_rows, stream_columns, stream_row,
                 write_capture, write_imu, write_imu_rows, write_labels, write_motion)
from .metrics import accel_pck, drift_curve, pose_metrics
from .nets import Network, TrainingConfig, train
from .pipeline import (GRAVITY_VELOCITY, NET_NAMES, S_LOWER, S_UPPER, VARIANTS, NetworkBundle,
                       OnlineSession, PipelineOptions, run_offline, run_online)
from .procedural import generate_dataset
from .skeleton import load_skeleton
from .synth import (CONTACT_THRESHOLD, SMOOTHING_N, accelerations_from_positions, augment_noise,
                    default_mount, gt_root_velocity, label_contacts, sensor_positions, synthesize_imu,
                    synthesize_raw)
from .training import NET_LOSS, contact_clips, network_dataset, sequence_data, variant_specs

EXIT_OK, EXIT_INPUT, EXIT_USAGE, EXIT_NONFINITE, EXIT_IO = 0, 1, 2, 3, 4
LEAF_SIGMA = 0.04
JOINT_SIGMA = 0.025


def _provenance(args, **extra):
    meta = {"tool": f"imucap {__version__}", "command": args.command}
    for key in ("seed", "n", "sigma", "accel_scale", "vg", "s_lower", "s_upper", "u"):
        if hasattr(args, key):
            meta[key] = getattr(args, key)
    meta.update({"lr_default": 1e-3, "batch_default": 256, "leaf_sigma": LEAF_SIGMA,
                 "joint_sigma": JOINT_SIGMA, "n_default": SMOOTHING_N, "u_default": CONTACT_THRESHOLD,
                 "vg_default": GRAVITY_VELOCITY, "s_lower_default": S_LOWER, "s_upper_default": S_UPPER})
    meta.update(extra)
    return meta


def _stem(path):
    base = os.path.basename(path)
    for suffix in (".motion.csv", ".imu.csv", ".labels.csv", ".csv"):
        if base.endswith(suffix):
            return base[: -len(suffix)]
    return os.path.splitext(base)[0]


def _out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


# --------------------------------------------------------------------------
# generate

def cmd_generate(args):
    model = load_skeleton(args.skeleton)
    clips = generate_dataset(args.seconds, args.clip_seconds, args.seed, model, args.fps)
    out = _out_dir(args.out)
    for i, clip in enumerate(clips):
        path = os.path.join(out, f"clip_{i:03d}.motion.csv")
        write_motion(path, clip.sequence, model, _provenance(args, clip=i))
        print(path)
    return EXIT_OK


# --------------------------------------------------------------------------
# synth

def _load_mount(path, model):
    if path is None:
        return default_mount(model)
    from .synth import MountConfig
    with open(path) as f:
        doc = json.load(f)
    try:
        return MountConfig(tuple(doc["bones"]), doc["rotations"], doc["points"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"{path}: malformed mount file ({exc!r})") from exc


def _synth_one(job):
    path, args = job
    model = load_skeleton(args.skeleton)
    mount = _load_mount(args.mount, model)
    seq, _ = read_motion(path, model)
    if args.sigma > 0:
        # positional noise on the virtual sensors before differentiation
        rng = np.random.default_rng([args.seed, zlib.crc32(_stem(path).encode())])
        x = augment_noise(sensor_positions(seq, model, mount), args.sigma, rng=rng)
        acc = accelerations_from_positions(x, seq.fps, args.n)
        ori = seq.rotations[:, list(mount.bones)] @ mount.rotations
    else:
        acc, ori = synthesize_imu(seq, model, mount, args.n)
    meta = _provenance(args, source=os.path.basename(path))
    stem = os.path.join(args.out, _stem(path))
    if args.space == "normalized":
        write_imu_rows(stem + ".imu.csv", normalize(acc, ori, args.accel_scale), seq.fps, "normalized", meta)
    elif args.space == "raw":
        state = CalibrationState.load(args.calibration)
        # the stored acceleration offsets play the role of the at-rest reading
        a_raw, r_raw = synthesize_raw(acc, ori, state.pim, state.rot_offsets, state.accel_offsets)
        write_imu(stem + ".imu.csv", a_raw, r_raw, seq.fps, "raw", meta)
    else:
        write_imu(stem + ".imu.csv", acc, ori, seq.fps, "calibrated", meta)
    write_labels(stem + ".labels.csv", label_contacts(seq, model, args.u), gt_root_velocity(seq), seq.fps, meta)
    return stem


def cmd_synth(args):
    if args.space == "raw" and not args.calibration:
        raise ValueError("--space raw needs --calibration")
    _out_dir(args.out)
    jobs = [(p, args) for p in args.motion]
    threads = max(1, int(os.environ.get("MOCAP_THREADS", "1")))
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            stems = list(pool.map(_synth_one, jobs))
    else:
        stems = [_synth_one(j) for j in jobs]
    for s in stems:
        print(s + ".imu.csv")
    return EXIT_OK


# --------------------------------------------------------------------------
# train

def _imu_to_input(rows, space, accel_scale, calibration=None):
    if space == "normalized":
        return rows
    acc, ori = split_imu_rows(rows)
    if space == "raw":
        if calibration is None:
            raise ValueError("raw inertial data needs --calibration")
        acc, ori = apply_calibration(CalibrationState.load(calibration), acc, ori)
    return normalize(acc, ori, accel_scale)


def _load_dataset(directory, model, accel_scale, calibration=None):
    motions = sorted(glob.glob(os.path.join(directory, "*.motion.csv")))
    if not motions:
        raise FormatError(f"{directory}: no *.motion.csv files")
    data = []
    for path in motions:
        stem = os.path.join(directory, _stem(path))
        for suffix in (".imu.csv", ".labels.csv"):
            if not os.path.exists(stem + suffix):
                raise FormatError(f"{directory}: {os.path.basename(stem)}{suffix} is missing (run synth)")
        seq, _ = read_motion(path, model)
        rows, _, space, _ = read_imu(stem + ".imu.csv")
        contacts, velocity, _, _ = read_labels(stem + ".labels.csv")
        x0 = _imu_to_input(rows, space, accel_scale, calibration)
        data.append(sequence_data(seq, model, x0, contacts, velocity))
    return data


def cmd_train(args):
    model = load_skeleton(args.skeleton)
    data = _load_dataset(args.data, model, args.accel_scale, args.calibration)
    variant = VARIANTS[args.variant]
    spec = variant_specs(variant)[args.net] if args.net in variant_specs(variant) else None
    if spec is None:
        raise ValueError(f"variant {args.variant!r} has no {args.net}")
    if args.hidden:
        spec = replace(spec, hidden=args.hidden)
    if args.bidirectional is not None:
        spec = replace(spec, bidirectional=args.bidirectional)
    clips = None
    if args.net == "trans-b2" and args.contact_net:
        clips = contact_clips(Network.load(args.contact_net), data, args.s_upper, args.clip_context) or None
    pairs, (sigma, cols) = network_dataset(args.net, data, variant, clips)
    if args.sigma is not None:
        sigma = args.sigma
    config = TrainingConfig(lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, seed=args.seed,
                            window=args.window, noise_sigma=sigma, noise_columns=cols, dtype=args.dtype)
    net = Network.load(args.fine_tune) if args.fine_tune else Network.create(spec, seed=args.seed)
    loss = args.loss or NET_LOSS[args.net]
    losses = []

    def log(epoch, value):
        losses.append((epoch, value))
        if not args.quiet:
            print(f"epoch {epoch} loss {value:.6g}", file=sys.stderr)

    result = train(net, pairs, loss, config, log)
    result.net.meta.update({"name": args.net, "variant": args.variant})
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    result.net.save(args.out)
    loss_path = os.path.splitext(args.out)[0] + ".loss.csv"
    with open(loss_path, "w") as f:
        meta = _provenance(args, net=args.net, loss=loss, epochs=args.epochs, lr=args.lr,
                           batch_size=args.batch_size, window=args.window, noise_sigma=sigma)
        for k, v in meta.items():
            f.write(f"# {k}={v}\n")
        f.write("epoch,loss\n")
        for e, v in losses:
            f.write(f"{e},{v!r}\n")
    print(args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# infer

def _options(args):
    return PipelineOptions(vg=args.vg, s_lower=args.s_lower, s_upper=args.s_upper, translation=args.translation)


def _stream(args, nets, model):
    session = OnlineSession(nets, model, _options(args))
    out = sys.stdout
    out.write(",".join(stream_columns(model)) + "\n")
    out.flush()

    def emit(result):
        if result is not None:
            out.write(stream_row(result, model) + "\n")
            out.flush()

    for line in sys.stdin:
        line = line.strip()
        if not line or line.startswith("#") or line[0].isalpha():
            continue
        values = [float(v) for v in line.split(",")]
        if len(values) == 73:
            values = values[1:]
        if len(values) != 72:
            raise FormatError(f"stream rows must carry 72 values, got {len(values)}")
        emit(session.push(np.array(values)))
    for r in session.finish():
        emit(r)
    return EXIT_OK


def cmd_infer(args):
    model = load_skeleton(args.skeleton)
    if args.leg_length:
        model = model.with_leg_length(args.leg_length)
    dtype = np.float32 if args.dtype == "float32" else np.float64
    nets = NetworkBundle.load(args.weights_dir, dtype=dtype).check(model)
    if args.stream:
        return _stream(args, nets, model)
    if not args.imu:
        raise ValueError("infer needs --imu unless --stream is given")
    rows, fps, space, _ = read_imu(args.imu)
    x0 = _imu_to_input(rows, space, args.accel_scale, args.calibration)
    if args.mode == "online":
        result = run_online(nets, model, x0, _options(args))
    else:
        result = run_offline(nets, model, x0, _options(args), fps=fps)
    result.fps = fps
    meta = _provenance(args, mode=args.mode, source=os.path.basename(args.imu), variant=nets.variant.label)
    write_motion(args.out + ".motion.csv", result.to_motion(), model, meta)
    write_capture(args.out + ".capture.csv", result, meta)
    print(args.out + ".motion.csv")
    return EXIT_OK


# --------------------------------------------------------------------------
# eval

def cmd_eval(args):
    model = load_skeleton(args.skeleton)
    est, _ = read_motion(args.est, model)
    gt, _ = read_motion(args.gt, model)
    report = pose_metrics(est.rotations, gt.rotations, model, gt.fps)
    print(report.table())
    if args.out:
        with open(args.out + ".metrics.csv", "w") as f:
            for k, v in _provenance(args, est=os.path.basename(args.est), gt=os.path.basename(args.gt)).items():
                f.write(f"# {k}={v}\n")
            f.write(report.to_csv())
    if len(est) > round(args.horizon * gt.fps):
        curve = drift_curve(est.translation, gt.translation, gt.fps, args.horizon)
        print(f"drift after {args.horizon:g} s: {curve.error[-1]:.4f} m")
        if args.out:
            with open(args.out + ".drift.csv", "w") as f:
                f.write(curve.to_csv())
    else:
        print(f"sequence shorter than the {args.horizon:g} s drift horizon; drift curve skipped")
    return EXIT_OK


# --------------------------------------------------------------------------
# calibrate

def cmd_calibrate(args):
    rows, fps, space, _ = read_imu(args.still)
    rows = rows[:max(1, int(round(args.seconds * fps)))]
    if space != "raw":
        raise FormatError(f"{args.still}: calibration needs raw readings, file holds {space!r} data")
    if len(rows) < args.min_frames:
        raise EmptyInput(f"{args.still}: {len(rows)} still frames, need at least {args.min_frames}")
    acc, ori = split_imu_rows(rows)
    pim = np.eye(3)
    if args.align:
        align_rows, _, _, _ = read_imu(args.align)
        if len(align_rows) == 0:
            raise EmptyInput(f"{args.align}: no alignment frames")
        pim = estimate_global_alignment(split_imu_rows(align_rows)[1][:, args.align_sensor])
    bones = None
    if args.pose:
        model = load_skeleton(args.skeleton)
        seq, _ = read_motion(args.pose, model)
        bones = seq.rotations[0, model.sensor_joint_list]
    state = calibrate_t_pose(pim, acc, ori, bones, args.accel_scale)
    state.save(args.out)
    print(args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# accel-check

def cmd_accel_check(args):
    model = load_skeleton(args.skeleton)
    seq, _ = read_motion(args.motion, model)
    mount = default_mount(model)
    x = sensor_positions(seq, model, mount)
    ref = accelerations_from_positions(x, seq.fps, 1)
    noisy = augment_noise(x, args.sigma, seed=args.seed)
    thresholds = np.asarray(args.thresholds, dtype=np.float64)
    print("n," + ",".join(f"{t:g}" for t in thresholds))
    for n in args.n:
        pck = accel_pck(accelerations_from_positions(noisy, seq.fps, n), ref, thresholds)
        print(f"{n}," + ",".join(f"{v:.4f}" for v in pck))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def build_parser():
    p = argparse.ArgumentParser(prog="imucap", description="Sparse-IMU motion capture toolkit")
    p.add_argument("--version", action="version", version=f"imucap {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--skeleton", default=None, help="skeleton JSON (default: packaged 24-joint model)")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("generate", help="write procedural motion clips")
    common(g)
    g.add_argument("--seconds", type=float, default=600.0)
    g.add_argument("--clip-seconds", type=float, default=60.0)
    g.add_argument("--fps", type=float, default=60.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("synth", help="synthesize IMU readings, contact labels and velocities")
    common(s)
    s.add_argument("motion", nargs="+")
    s.add_argument("--mount", default=None, help="sensor mount JSON {bones, rotations, points}")
    s.add_argument("--n", type=int, default=SMOOTHING_N)
    s.add_argument("--sigma", type=float, default=0.0, help="positional noise on virtual sensors (m)")
    s.add_argument("--u", type=float, default=CONTACT_THRESHOLD)
    s.add_argument("--space", choices=("calibrated", "normalized", "raw"), default="calibrated")
    s.add_argument("--calibration", default=None)
    s.add_argument("--accel-scale", type=float, default=DEFAULT_ACCEL_SCALE)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train one network")
    common(t)
    t.add_argument("--net", choices=NET_NAMES, required=True)
    t.add_argument("--data", required=True, help="directory of motion/imu/labels CSVs")
    t.add_argument("--out", required=True, help="weights JSON path")
    t.add_argument("--fine-tune", default=None, metavar="FROM")
    t.add_argument("--variant", choices=sorted(VARIANTS), default="full")
    t.add_argument("--hidden", type=int, default=None)
    t.add_argument("--bidirectional", dest="bidirectional", action="store_true", default=None)
    t.add_argument("--unidirectional", dest="bidirectional", action="store_false")
    t.add_argument("--loss", choices=("mse", "contact", "velocity", "velocity1"), default=None)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=256)
    t.add_argument("--window", type=int, default=300)
    t.add_argument("--sigma", type=float, default=None, help="override the input noise sigma")
    t.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    t.add_argument("--contact-net", default=None, help="trained trans-b1 weights for airborne-clip mining")
    t.add_argument("--clip-context", type=int, default=30)
    t.add_argument("--s-upper", type=float, default=S_UPPER)
    t.add_argument("--accel-scale", type=float, default=DEFAULT_ACCEL_SCALE)
    t.add_argument("--calibration", default=None)
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="run the capture pipeline")
    common(i, seed=False)
    i.add_argument("--imu", default=None)
    i.add_argument("--weights-dir", required=True)
    i.add_argument("--mode", choices=("offline", "online"), default="offline")
    i.add_argument("--stream", action="store_true", help="online mode over stdin/stdout rows")
    i.add_argument("--translation", choices=("fusion", "foot", "network"), default="fusion")
    i.add_argument("--vg", type=float, default=GRAVITY_VELOCITY)
    i.add_argument("--s-lower", type=float, default=S_LOWER)
    i.add_argument("--s-upper", type=float, default=S_UPPER)
    i.add_argument("--accel-scale", type=float, default=DEFAULT_ACCEL_SCALE)
    i.add_argument("--calibration", default=None)
    i.add_argument("--leg-length", type=float, default=None)
    i.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    i.add_argument("--out", default="capture")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="pose metrics and drift curve")
    common(e, seed=False)
    e.add_argument("--est", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--horizon", type=float, default=10.0)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("calibrate", help="sensor offsets from still raw readings")
    common(c, seed=False)
    c.add_argument("--still", required=True, help="raw IMU CSV recorded in the known pose")
    c.add_argument("--align", default=None, help="raw IMU CSV of the axis-aligned sensor")
    c.add_argument("--align-sensor", type=int, default=0)
    c.add_argument("--pose", default=None, help="motion CSV whose first frame is the held pose (default T-pose)")
    c.add_argument("--seconds", type=float, default=3.0, help="use this much of the still recording")
    c.add_argument("--min-frames", type=int, default=1)
    c.add_argument("--accel-scale", type=float, default=DEFAULT_ACCEL_SCALE)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_calibrate)

    a = sub.add_parser("accel-check", help="acceleration PCK for several smoothing factors")
    common(a)
    a.add_argument("--motion", required=True)
    a.add_argument("--n", type=int, nargs="+", default=[1, 2, 4, 8])
    a.add_argument("--sigma", type=float, default=0.005)
    a.add_argument("--thresholds", type=float, nargs="+", default=[0.5, 1, 2, 4, 8])
    a.set_defaults(func=cmd_accel_check)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ImucapError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
