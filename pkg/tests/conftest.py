import json
import sys
from pathlib import Path

import numpy as np
import pytest

ORACLES = Path(__file__).resolve().parent / "oracles"
sys.path.insert(0, str(ORACLES))

from pqgdr import ClassLabel, DisturbanceSpec, Waveform  # noqa: E402

FS = 12800.0
N = 2560
PEAK = 230.0 * np.sqrt(2.0)


@pytest.fixture(scope="session")
def frozen():
    return json.loads((ORACLES / "frozen.json").read_text())


def sine(freq=50.0, amp=PEAK, phase=0.0, n=N, fs=FS) -> Waveform:
    t = np.arange(n) / fs
    return Waveform(amp * np.sin(2 * np.pi * freq * t + phase), fs, 50.0)


def sag_spec(start_cycle=3.0, end_cycle=5.0, residual=0.5, phase=0.0, **kw) -> DisturbanceSpec:
    return DisturbanceSpec(ClassLabel.SAG if residual < 1 else ClassLabel.SWELL, magnitude=residual,
                           event_start=start_cycle / 50.0, event_end=end_cycle / 50.0, phase=phase, **kw)


def blobs(centres, per=30, spread=0.3, seed=0):
    """Gaussian point clouds in 2-D, one label per centre."""
    rng = np.random.default_rng(seed)
    X = np.vstack([np.asarray(c) + spread * rng.standard_normal((per, 2)) for c in centres])
    y = np.repeat(np.arange(len(centres)), per)
    return X, y
