import json
import struct

import numpy as np
import pytest

from conftest import sine
from pqgdr import GeneratorConfig, SnrPolicy, Waveform, make_dataset
from pqgdr.formats import (
    FormatError,
    load_dataset,
    read_bin,
    read_csv,
    read_manifest,
    read_waveform,
    save_dataset,
    write_bin,
    write_csv,
    write_waveform,
)


@pytest.fixture
def noisy():
    rng = np.random.default_rng(0)
    return Waveform(sine(49.7).samples + rng.standard_normal(2560) * 1e-3, 12800.0, 50.0)


@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_waveform_round_trip_is_exact(noisy, tmp_path, fmt):
    path = tmp_path / f"w.{fmt}"
    write_waveform(noisy, path, fmt)
    back = read_waveform(path)
    assert back == noisy


def test_csv_layout(tmp_path):
    w = Waveform(np.array([0.0, 1.5, -2.25e-7]), 12800.0, 50.0)
    write_csv(w, tmp_path / "w.csv")
    assert (tmp_path / "w.csv").read_text() == "sample_rate=12800.0,nominal_freq=50.0\n0.0\n1.5\n-2.25e-07\n"


def test_bin_layout(tmp_path):
    w = Waveform(np.array([1.0, -0.5]), 12800.0, 50.0)
    write_bin(w, tmp_path / "w.bin")
    blob = (tmp_path / "w.bin").read_bytes()
    assert len(blob) == 32 + 16
    assert blob[:4] == b"PQWF"
    assert struct.unpack("<HHddQ", blob[4:32]) == (1, 0, 12800.0, 50.0, 2)
    assert np.frombuffer(blob[32:], "<f8").tolist() == [1.0, -0.5]


def test_bad_files(tmp_path, noisy):
    write_bin(noisy, tmp_path / "w.bin")
    blob = (tmp_path / "w.bin").read_bytes()
    cases = {
        "trunc.bin": blob[:-5],
        "head.bin": blob[:20],
        "version.bin": blob[:4] + struct.pack("<H", 7) + blob[6:],
        "empty.csv": b"",
        "header.csv": b"rate=1\n1.0\n",
        "body.csv": b"sample_rate=12800,nominal_freq=50\n1.0\nabc\n",
        "nan.csv": b"sample_rate=12800,nominal_freq=50\n1.0\nnan\n",
        "nosamples.csv": b"sample_rate=12800,nominal_freq=50\n",
        "binary.dat": b"\xff\xfe\x00\x01" * 8,
    }
    for name, data in cases.items():
        (tmp_path / name).write_bytes(data)
        with pytest.raises(FormatError):
            read_waveform(tmp_path / name)
    with pytest.raises(FormatError):
        read_bin(tmp_path / "body.csv")
    with pytest.raises(ValueError):
        write_waveform(noisy, tmp_path / "x", "wav")
    (tmp_path / "ok.csv").write_text("sample_rate = 6400, nominal_freq=60\n1\n\n2.5\n\n")
    ok = read_csv(tmp_path / "ok.csv")
    assert (ok.sample_rate, ok.nominal_freq, ok.samples.tolist()) == (6400.0, 60.0, [1.0, 2.5])


@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_dataset_round_trip(tmp_path, fmt):
    cfg = GeneratorConfig(per_class_count=2, master_seed=3, snr=SnrPolicy(0.5))
    ds = make_dataset(cfg)
    save_dataset(ds, tmp_path / "ds", fmt)
    m = read_manifest(tmp_path / "ds")
    assert m["format"] == "pqgdr-dataset" and m["version"] == 1
    assert m["digest"] == cfg.digest() and m["counts"] == {f"C{c}": 2 for c in range(10)}
    assert m["items"][0]["file"] == f"waves/C0_0000.{fmt}"
    back = load_dataset(tmp_path / "ds", verify=True)
    assert back.specs == ds.specs and back.config == cfg
    assert all(a == b for a, b in zip(back.waveforms, ds.waveforms))
    assert [int(x) for x in back.labels] == [int(x) for x in ds.labels]
    assert not list((tmp_path / "ds").glob("*.tmp"))


def test_manifest_is_deterministic(tmp_path):
    cfg = GeneratorConfig(per_class_count=1, master_seed=8)
    save_dataset(make_dataset(cfg), tmp_path / "a")
    save_dataset(make_dataset(cfg), tmp_path / "b")
    assert (tmp_path / "a/manifest.json").read_bytes() == (tmp_path / "b/manifest.json").read_bytes()


def test_tampered_dataset_detected(tmp_path):
    ds = make_dataset(GeneratorConfig(per_class_count=1, master_seed=1))
    root = save_dataset(ds, tmp_path / "ds", "bin")
    w = read_waveform(root / "waves/C3_0000.bin")
    write_bin(w * 1.001, root / "waves/C3_0000.bin")
    load_dataset(root)
    with pytest.raises(FormatError, match="C3_0000"):
        load_dataset(root, verify=True)
    m = json.loads((root / "manifest.json").read_text())
    m["items"][0]["label"] = 5
    (root / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(FormatError, match="disagrees"):
        load_dataset(root)
    (root / "manifest.json").write_text("{")
    with pytest.raises(FormatError):
        load_dataset(root)
    (root / "manifest.json").write_text(json.dumps({"format": "pqgdr-dataset", "version": 2}))
    with pytest.raises(FormatError, match="version"):
        load_dataset(root)
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing")
