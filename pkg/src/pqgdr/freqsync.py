"""Window frequency estimation and period-synchronous resampling.

The estimator is the three-sample cosine identity s[n-1] + s[n+1] = 2 cos(wTs) s[n],
solved in the least-squares sense over every interior triplet of the window.
It is exact for a noiseless sinusoid. A linear-phase FIR low-pass (cut-off at
twice the nominal frequency, applied in ``valid`` mode so a sinusoid stays a
sinusoid) keeps harmonics, transients and broadband noise out of the sums.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import firwin

from .waveform import DegenerateSignalError, ParameterError, Waveform

log = logging.getLogger(__name__)

SAMPLES_PER_PERIOD = 256
WINDOW_CYCLES = 10
PREFILTER_TAPS = 513
MAX_DEVIATION = 0.1


class EstimationError(DegenerateSignalError):
    """The cosine term fell outside [-1, 1] (DC or degenerate input)."""


class OutOfRangeError(ParameterError):
    pass


@dataclass(frozen=True)
class FrequencyEstimate:
    c: float
    freq: float
    sample_rate: float
    window_cycles: float
    fallback: bool = False

    @property
    def samples_per_period(self) -> float:
        return self.sample_rate / self.freq


@lru_cache(maxsize=16)
def _prefilter(sample_rate: float, cutoff: float, taps: int) -> np.ndarray:
    return firwin(taps, cutoff, fs=sample_rate)


def cosine_term(x: np.ndarray) -> float:
    """Least-squares c = sum s_n (s_{n-1} + s_{n+1}) / (2 sum s_n^2)."""
    x = np.asarray(x, dtype=float)
    if len(x) < 3:
        raise ParameterError("samples", "need at least 3 samples")
    mid = x[1:-1]
    den = 2.0 * np.dot(mid, mid)
    if den == 0:
        raise EstimationError("zero-power window")
    return float(np.dot(mid, x[:-2] + x[2:]) / den)


def estimate_frequency(w: Waveform, prefilter: bool = True) -> FrequencyEstimate:
    """Fundamental frequency of the whole window.

    Raises :class:`EstimationError` when |c| > 1; see :func:`estimate_or_nominal`
    for the logged fallback used by the pipeline.
    """
    x = w.samples
    if len(x) < 3:
        raise ParameterError("samples", "need at least 3 samples")
    if not np.any(x):
        raise EstimationError("identically zero window")
    if prefilter and len(x) >= PREFILTER_TAPS + 3:
        x = np.convolve(x, _prefilter(w.sample_rate, 2.0 * w.nominal_freq, PREFILTER_TAPS), "valid")
    c = cosine_term(x)
    if not -1.0 <= c <= 1.0:
        raise EstimationError(f"cosine term {c:.12g} outside [-1, 1]")
    freq = math.acos(c) * w.sample_rate / (2.0 * math.pi)
    if not 0 < freq < w.sample_rate / 2:
        raise EstimationError(f"estimate {freq} Hz outside (0, fs/2)")
    return FrequencyEstimate(c, freq, w.sample_rate, len(w) * freq / w.sample_rate)


def estimate_or_nominal(w: Waveform) -> FrequencyEstimate:
    try:
        return estimate_frequency(w)
    except EstimationError as exc:
        log.warning("frequency estimation failed (%s); using nominal %.3g Hz", exc, w.nominal_freq)
        f = w.nominal_freq
        return FrequencyEstimate(math.cos(2 * math.pi * f / w.sample_rate), f, w.sample_rate,
                                 len(w) * f / w.sample_rate, fallback=True)


def catmull_rom(x: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Cubic Catmull-Rom interpolation of ``x`` at fractional indices ``pos``.

    Neighbours outside the array are clamped to the end samples. Integer
    positions return the stored samples exactly.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    i = np.floor(pos).astype(int)
    u = pos - i

    def at(k):
        return x[np.clip(k, 0, n - 1)]

    p0, p1, p2, p3 = at(i - 1), at(i), at(i + 1), at(i + 2)
    u2 = u * u
    u3 = u2 * u
    return 0.5 * (
        2.0 * p1
        + (p2 - p0) * u
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2
        + (3.0 * p1 - p0 - 3.0 * p2 + p3) * u3
    )


@dataclass(frozen=True)
class SyncedWaveform:
    """Window resampled to an integer number of samples per estimated period.

    ``waveform.sample_rate`` is the effective rate ``samples_per_period * f``,
    so time and RMS keep their physical meaning.
    """

    waveform: Waveform
    resampling_ratio: float
    estimate: FrequencyEstimate

    @property
    def samples(self) -> np.ndarray:
        return self.waveform.samples

    @property
    def sample_rate(self) -> float:
        return self.waveform.sample_rate

    def __len__(self) -> int:
        return len(self.waveform)


def resample_sync(
    w: Waveform,
    est: FrequencyEstimate,
    samples_per_period: int = SAMPLES_PER_PERIOD,
    cycles: int = WINDOW_CYCLES,
) -> SyncedWaveform:
    """Resample ``cycles`` estimated periods onto ``samples_per_period * cycles`` points.

    Output sample k sits at input time k / (samples_per_period * f). When the
    window is shorter than ``cycles`` estimated periods, the missing tail is
    read one (or more) estimated periods earlier, i.e. the window is continued
    periodically.
    """
    f = est.freq
    if not math.isfinite(f) or f <= 0:
        raise OutOfRangeError("freq", f"invalid estimate {f}")
    if abs(f - w.nominal_freq) / w.nominal_freq > MAX_DEVIATION:
        raise OutOfRangeError(
            "freq", f"estimate {f:.4f} Hz more than {MAX_DEVIATION:.0%} from nominal {w.nominal_freq} Hz"
        )
    n_out = samples_per_period * cycles
    step = w.sample_rate / (samples_per_period * f)  # input samples per output sample
    ratio = 1.0 / step
    if step == 1.0 and len(w) >= n_out:
        out = w.samples[:n_out].copy()
    else:
        pos = np.arange(n_out) * step
        period = w.sample_rate / f
        last = len(w) - 1
        over = pos > last
        if np.any(over):
            pos[over] -= np.ceil((pos[over] - last) / period) * period
        out = catmull_rom(w.samples, pos)
    synced = Waveform(out, samples_per_period * f, w.nominal_freq)
    return SyncedWaveform(synced, ratio, est)


def synchronize(w: Waveform) -> SyncedWaveform:
    """Estimate (falling back to nominal) and resample in one call."""
    return resample_sync(w, estimate_or_nominal(w))
