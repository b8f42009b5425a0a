"""On-disk formats: waveform files (CSV or binary) and dataset directories.

See docs/formats.md for the byte-level description.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .siggen import ClassLabel, DisturbanceSpec, GeneratorConfig, LabeledDataset, synthesize
from .waveform import Waveform

BIN_MAGIC = b"PQWF"
BIN_VERSION = 1
# magic, version, reserved, sample_rate, nominal_freq, count
_BIN_HEADER = struct.Struct("<4sHHddQ")

MANIFEST = "manifest.json"
MANIFEST_FORMAT = "pqgdr-dataset"
MANIFEST_VERSION = 1


class FormatError(ValueError):
    """A file does not follow the documented layout."""


# ---------------------------------------------------------------- waveforms

def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(w: Waveform, path) -> None:
    lines = [f"sample_rate={_fmt(w.sample_rate)},nominal_freq={_fmt(w.nominal_freq)}"]
    lines.extend(_fmt(v) for v in w.samples)
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> Waveform:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    meta = {}
    try:
        for item in lines[0].split(","):
            key, val = item.split("=")
            meta[key.strip()] = float(val)
        fs, f0 = meta["sample_rate"], meta["nominal_freq"]
    except (ValueError, KeyError):
        raise FormatError(f"{path}: bad header {lines[0]!r}; expected "
                          "'sample_rate=<Hz>,nominal_freq=<Hz>'") from None
    body = [ln for ln in lines[1:] if ln.strip()]
    try:
        samples = np.array([float(ln) for ln in body])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if samples.size == 0:
        raise FormatError(f"{path}: no samples")
    if not np.all(np.isfinite(samples)):
        raise FormatError(f"{path}: non-finite sample values")
    return Waveform(samples, fs, f0)


def write_bin(w: Waveform, path) -> None:
    head = _BIN_HEADER.pack(BIN_MAGIC, BIN_VERSION, 0, w.sample_rate, w.nominal_freq, len(w))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(w.samples, dtype="<f8").tobytes())


def read_bin(path) -> Waveform:
    blob = Path(path).read_bytes()
    if len(blob) < _BIN_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, _, fs, f0, n = _BIN_HEADER.unpack_from(blob)
    if magic != BIN_MAGIC:
        raise FormatError(f"{path}: not a waveform file (magic {magic!r})")
    if version != BIN_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = blob[_BIN_HEADER.size:]
    if len(body) != 8 * n:
        raise FormatError(f"{path}: expected {n} samples, found {len(body) / 8:g}")
    samples = np.frombuffer(body, dtype="<f8").astype(float)
    if not np.all(np.isfinite(samples)):
        raise FormatError(f"{path}: non-finite sample values")
    return Waveform(samples, fs, f0)


def read_waveform(path) -> Waveform:
    """Dispatch on content: binary magic first, CSV otherwise."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BIN_MAGIC:
        return read_bin(path)
    try:
        return read_csv(path)
    except UnicodeDecodeError:
        raise FormatError(f"{path}: neither a binary waveform nor text") from None


def write_waveform(w: Waveform, path, fmt: str = "csv") -> None:
    if fmt == "csv":
        write_csv(w, path)
    elif fmt == "bin":
        write_bin(w, path)
    else:
        raise ValueError(f"unknown waveform format {fmt!r}")


# ---------------------------------------------------------------- datasets

def save_dataset(ds: LabeledDataset, out, fmt: str = "csv") -> Path:
    """Write ``manifest.json`` plus one waveform file per item under ``out``."""
    out = Path(out)
    (out / "waves").mkdir(parents=True, exist_ok=True)
    ext = {"csv": "csv", "bin": "bin"}[fmt]
    items = []
    counters: dict[int, int] = {}
    for w, lab, spec in ds:
        k = counters.get(int(lab), 0)
        counters[int(lab)] = k + 1
        name = f"waves/{ClassLabel(lab).code}_{k:04d}.{ext}"
        write_waveform(w, out / name, fmt)
        items.append({"file": name, "label": int(lab), "seed": spec.seed, "spec": spec.to_dict()})
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "digest": ds.digest,
        "config": ds.config.to_dict() if ds.config is not None else None,
        "counts": {ClassLabel(c).code: n for c, n in sorted(counters.items())},
        "items": items,
    }
    tmp = out / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    os.replace(tmp, out / MANIFEST)
    return out


def read_manifest(root) -> dict:
    path = Path(root) / MANIFEST
    try:
        m = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    if m.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"{path}: not a dataset manifest")
    if m.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {m.get('version')}")
    return m


def load_dataset(root, verify: bool = False) -> LabeledDataset:
    """Read a dataset directory. ``verify`` re-synthesises every item from its
    spec and checks the stored samples match exactly."""
    root = Path(root)
    m = read_manifest(root)
    waves, labels, specs = [], [], []
    for item in m["items"]:
        spec = DisturbanceSpec.from_dict(item["spec"])
        if int(spec.label) != int(item["label"]):
            raise FormatError(f"{item['file']}: label {item['label']} disagrees with its spec")
        w = read_waveform(root / item["file"])
        if verify and w != synthesize(spec):
            raise FormatError(f"{item['file']}: samples do not match the stored spec")
        waves.append(w)
        labels.append(ClassLabel(int(item["label"])))
        specs.append(spec)
    cfg = GeneratorConfig.from_dict(m["config"]) if m.get("config") else None
    return LabeledDataset(waves, labels, specs, cfg)
