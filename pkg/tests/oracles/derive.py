"""Independent oracles for the frozen expected values in ``frozen.json``.

Run from the repository root to regenerate:

    python tests/oracles/derive.py

Nothing here imports the package. The frequency oracle is the triplet
least-squares estimator written as a plain loop over an FFT brick-wall
low-passed copy of the window; the ITD oracle splits the window into ideal
dyadic bands with the FFT.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

import signals as S  # noqa: E402

LEVELS = 6


def brickwall(x: np.ndarray, lo: float, hi: float, fs: float = S.FS) -> np.ndarray:
    """Ideal band-pass keeping lo < |f| <= hi (lo < 0 keeps DC)."""
    spec = np.fft.rfft(x)
    f = np.fft.rfftfreq(len(x), 1.0 / fs)
    spec[~((f > lo) & (f <= hi))] = 0.0
    return np.fft.irfft(spec, len(x))


def loop_estimate(x: np.ndarray, fs: float = S.FS) -> float:
    num = 0.0
    den = 0.0
    for n in range(1, len(x) - 1):
        num += x[n] * (x[n - 1] + x[n + 1])
        den += x[n] * x[n]
    return math.acos(num / (2.0 * den)) * fs / (2.0 * math.pi)


def oracle_frequency(x: np.ndarray) -> float:
    low = brickwall(x, -1.0, 100.0)
    trim = 256  # skip the wrap-around ringing of the circular filter
    return loop_estimate(low[trim:-trim])


def oracle_itd(x: np.ndarray) -> dict:
    fs = S.FS
    a = brickwall(x, -1.0, fs / 2 ** (LEVELS + 1))
    details = [brickwall(x, fs / 2 ** (j + 1), fs / 2**j) for j in range(1, LEVELS + 1)]
    a_rms = math.sqrt(float(np.mean(a**2)))
    itd = 100.0 * np.sqrt(np.sum(np.square(details), axis=0)) / a_rms
    d_rms = [math.sqrt(float(np.mean(d**2))) for d in details]
    return {
        "mean_itd": float(itd.mean()),
        "gdr_stationary": float(2.0 * itd.mean()),
        "A6": a_rms,
        "D": d_rms,
        "S": math.sqrt(a_rms**2 + sum(v * v for v in d_rms)),
    }


def main() -> None:
    est = [oracle_frequency(S.mc_window(s)) for s in range(S.MC_SEEDS)]
    err = np.abs(np.array(est) - 50.0)
    out = {
        "frequency_mc": {
            "snr_db": S.MC_SNR_DB,
            "h3": S.MC_H3,
            "seeds": S.MC_SEEDS,
            "estimates": est,
            "max_abs_err": float(err.max()),
            "p99_abs_err": float(np.quantile(err, 0.99)),
        },
        "brickwall_itd": {name: oracle_itd(S.multitone(tones)) for name, tones in S.TONE_CASES.items()},
    }
    path = HERE / "frozen.json"
    path.write_text(json.dumps(out, indent=1) + "\n")
    print(f"wrote {path}")
    print(f"oracle MC envelope {out['frequency_mc']['max_abs_err']:.4g} Hz")
    for name, v in out["brickwall_itd"].items():
        print(f"{name:>10}: mean ITD {v['mean_itd']:.4f} %, GDR {v['gdr_stationary']:.4f} %")


if __name__ == "__main__":
    main()
