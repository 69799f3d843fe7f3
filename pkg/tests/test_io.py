import numpy as np
import pytest

from helpers import random_inputs, tiny_bundle
from imucap.errors import FormatError
from imucap.io import (format_header, import_amass_npz, parse_header, read_capture, read_imu, read_labels,
                       read_motion, split_imu_rows, stream_columns, stream_row, write_capture, write_imu,
                       write_imu_rows, write_labels, write_motion)
from imucap.pipeline import OnlineSession, run_offline
from imucap.procedural import generate_motion
from imucap.rotmath import random_rotation


def test_header_round_trip():
    text = format_header("imucap-imu", {"seed": 3, "sigma": 0.04}, fps="60.0", space="raw")
    fields, meta = parse_header(text.splitlines(), "imucap-imu")
    assert fields["space"] == "raw" and fields["version"] == "1"
    assert meta == {"seed": "3", "sigma": "0.04"}
    with pytest.raises(FormatError):
        parse_header(text.splitlines(), "imucap-motion")
    with pytest.raises(FormatError):
        parse_header(["# format=imucap-imu version=9"], "imucap-imu")


def test_motion_round_trip_is_exact(model, tmp_path):
    seq = generate_motion(2.0, seed=1, model=model).sequence
    path = tmp_path / "m.motion.csv"
    write_motion(path, seq, model, {"seed": 1})
    again, meta = read_motion(path, model)
    assert np.abs(again.rotations - seq.rotations).max() < 1e-14
    assert np.array_equal(again.translation, seq.translation)
    assert again.fps == 60.0 and meta["seed"] == "1"


def test_imu_round_trip(tmp_path, rng):
    acc, ori = rng.normal(size=(5, 6, 3)), random_rotation(rng, (5, 6))
    write_imu(tmp_path / "a.imu.csv", acc, ori, 100.0, "raw")
    rows, fps, space, _ = read_imu(tmp_path / "a.imu.csv")
    a2, o2 = split_imu_rows(rows)
    assert np.array_equal(a2, acc) and np.array_equal(o2, ori)
    assert fps == 100.0 and space == "raw"
    x = random_inputs(4)
    write_imu_rows(tmp_path / "b.imu.csv", x, 60.0)
    assert np.array_equal(read_imu(tmp_path / "b.imu.csv")[0], x)
    with pytest.raises(ValueError):
        write_imu(tmp_path / "c.imu.csv", acc, ori, 60.0, "weird")


def test_labels_round_trip(tmp_path, rng):
    c, v = (rng.uniform(size=(7, 2)) > 0.5).astype(float), rng.normal(size=(7, 3))
    write_labels(tmp_path / "l.csv", c, v, 60.0)
    c2, v2, fps, _ = read_labels(tmp_path / "l.csv")
    assert np.array_equal(c2, c) and np.array_equal(v2, v)


def test_capture_round_trip(model, tmp_path):
    res = run_offline(tiny_bundle(), model, random_inputs(20))
    write_capture(tmp_path / "c.csv", res)
    back = read_capture(tmp_path / "c.csv")
    assert np.array_equal(back["trajectory"], res.trajectory)
    assert np.array_equal(back["contacts"], res.contacts)


def test_malformed_files(model, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("# format=imucap-labels version=1\nframe,contact_l\n0,abc\n")
    with pytest.raises(FormatError):
        read_labels(bad)
    bad.write_text("frame,a\n0,1\n")
    with pytest.raises(FormatError):
        read_labels(bad)
    bad.write_text("# format=imucap-labels version=1\nframe,a,b\n0,1,2\n")
    with pytest.raises(FormatError):
        read_labels(bad)


def test_stream_row_layout(model):
    session = OnlineSession(tiny_bundle(), model)
    x = random_inputs(6)
    results = [session.push(f) for f in x]
    line = stream_row(results[-1], model)
    assert len(line.split(",")) == len(stream_columns(model))


def test_amass_stub(model, tmp_path, rng):
    poses = rng.normal(0, 0.3, (5, 156))
    path = tmp_path / "clip.npz"
    np.savez(path, poses=poses, trans=rng.normal(size=(5, 3)), mocap_framerate=120.0)
    seq = import_amass_npz(path, model)
    assert seq.rotations.shape == (5, 24, 3, 3) and seq.fps == 120.0
    np.savez(tmp_path / "bad.npz", poses=poses)
    with pytest.raises(FormatError):
        import_amass_npz(tmp_path / "bad.npz", model)
