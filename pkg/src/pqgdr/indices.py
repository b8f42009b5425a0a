"""Wavelet power-quality indices: ITD(n), event window, GDR and the feature pair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d

from . import freqsync, wmra
from .waveform import DegenerateSignalError, Waveform

# Event detection on ITD(n), in percent.
FLOOR = 1.0
MEDIAN_FACTOR = 3.0
EDGE_GUARD = 64
# Sharp edges are located on the top detail bands, where the filter ringing is
# shortest. Their floor is low because a step near a zero crossing is faint.
EDGE_BANDS = (1, 2)
EDGE_FLOOR = 0.05
PEAK_HALF_WIDTH = 8e-3
GAP = 1e-3
FLATNESS = 3.0

@dataclass(frozen=True)
class ItdSeries:
    """ITD(n) in percent; ``edge`` is the same ratio over ``EDGE_BANDS`` only."""

    itd: np.ndarray
    approx_rms: float
    sample_rate: float
    edge: np.ndarray | None = None

    @property
    def mean_itd(self) -> float:
        return float(np.mean(self.itd))

    @property
    def window(self) -> float:
        return len(self.itd) / self.sample_rate

    def __len__(self) -> int:
        return len(self.itd)


@dataclass(frozen=True)
class EventWindow:
    t0: float
    T0: float
    T: float

    @property
    def factor(self) -> float:
        return 1.0 + self.T0 / self.T


@dataclass(frozen=True)
class FeatureVector:
    k1: float
    k2: float

    def __post_init__(self):
        object.__setattr__(self, "k1", float(self.k1))
        object.__setattr__(self, "k2", float(self.k2))

    def as_array(self) -> np.ndarray:
        return np.array([self.k1, self.k2])


@dataclass(frozen=True)
class Analysis:
    """Everything computed for one window; ``feature`` is the classifier input."""

    feature: FeatureVector
    estimate: freqsync.FrequencyEstimate
    band_rms: wmra.BandRms
    itd: ItdSeries
    event: EventWindow
    decomposition: wmra.WmraDecomposition

    def record(self) -> dict:
        return {
            "k1": self.feature.k1,
            "k2": self.feature.k2,
            "f_est": self.estimate.freq,
            "f_fallback": self.estimate.fallback,
            "t0": self.event.t0,
            "T0": self.event.T0,
            "T": self.event.T,
            "mean_itd": self.itd.mean_itd,
            **self.band_rms.as_dict(),
        }


def itd_series(dec: wmra.WmraDecomposition, edge_bands=EDGE_BANDS) -> ItdSeries:
    """ITD(n) = 100 * sqrt(sum_j d_j(n)^2) / A_J, with A_J the RMS of a_J(n)."""
    a_rms = float(np.sqrt(np.mean(np.square(dec.approx))))
    if not a_rms > 0:
        raise DegenerateSignalError("approximation band has zero RMS (no fundamental)")
    sq = np.square(np.asarray(dec.details))
    edge = None
    if edge_bands:
        edge = 100.0 * np.sqrt(sum(sq[j - 1] for j in edge_bands if j <= dec.levels)) / a_rms
    return ItdSeries(100.0 * np.sqrt(sq.sum(axis=0)) / a_rms, a_rms, dec.sample_rate, edge)


def _peaks(x: np.ndarray, theta: float, half: int, guard: int) -> np.ndarray:
    # samples that are the maximum of their +-half neighbourhood and exceed theta
    top = maximum_filter1d(x, 2 * half + 1, mode="wrap")
    pk = np.flatnonzero((x == top) & (x > theta))
    return pk[(pk >= guard) & (pk < len(x) - guard)]


def _bridged(x: np.ndarray, theta: float, gap: int) -> np.ndarray:
    # above-threshold mask with dips shorter than `gap` filled (oscillating tails)
    return maximum_filter1d((x > theta).astype(np.uint8), gap + 1) > 0


def _run_end(mask: np.ndarray, i: int) -> int:
    off = np.flatnonzero(~mask[i:])
    return i + off[0] - 1 if len(off) else len(mask) - 1


def _run_start(mask: np.ndarray, i: int, lo: int) -> int:
    off = np.flatnonzero(~mask[lo:i + 1])
    return max(lo + off[-1] + 1, lo) if len(off) else lo


def detect_event_window(
    itd: ItdSeries,
    floor: float = FLOOR,
    median_factor: float = MEDIAN_FACTOR,
    guard: int = EDGE_GUARD,
    edge_floor: float = EDGE_FLOOR,
    half_width: float = PEAK_HALF_WIDTH,
    gap: float = GAP,
    flatness: float = FLATNESS,
) -> EventWindow:
    """Locate the disturbed interval [t0, t0 + T0] of an ITD series.

    A window whose ITD sits above ``floor`` everywhere with no outstanding
    peak (99.5th percentile below ``flatness`` times the median) is a
    stationary disturbance and gets T0 = T.

    Otherwise events are marked by maximum peaks: samples that dominate a
    +-``half_width`` neighbourhood and exceed theta = max(median_factor *
    median, floor). Edges are taken from the top-band series when present.
    The first peak is t0. With a single peak (an onset followed by a decay)
    the event ends where the full ITD falls back below theta; with several,
    the last peak is a closing edge and the end is its position corrected
    for the symmetric ringing around it.
    """
    fs = itd.sample_rate
    T = itd.window
    x = itd.itd
    n = len(x)
    if n <= 2 * guard:
        guard = 0
    inner = x[guard:n - guard]
    base = float(np.median(inner))
    if base >= floor and np.percentile(inner, 99.5) < flatness * base:
        return EventWindow(0.0, T, T)
    theta = max(median_factor * base, floor)
    half = max(int(round(half_width * fs)), 1)
    g = max(int(round(gap * fs)), 1)

    full_pk = _peaks(x, theta, half, guard)
    xe, pk = x, full_pk
    if itd.edge is not None:
        e_base = float(np.median(itd.edge[guard:n - guard]))
        e_theta = max(median_factor * e_base, edge_floor)
        edge_pk = _peaks(itd.edge, e_theta, half, guard)
        if len(edge_pk):
            xe, pk, theta_e = itd.edge, edge_pk, e_theta
    if len(pk) == 0:
        return EventWindow(0.0, 0.0, T)
    if xe is x:
        theta_e = theta
    first, last = int(pk[0]), int(pk[-1])
    # a low-frequency transient onset may be invisible in the top bands
    if len(full_pk) and full_pk[0] < first - int(1e-3 * fs):
        first = int(full_pk[0])
    if len(pk) == 1:
        end = _run_end(_bridged(x, theta, g), last)
    else:
        mask = _bridged(xe, theta_e, g)
        s = _run_start(mask, last, int(pk[-2]) + 1)
        end = max(last, _run_end(mask, last) - (last - s))
    end = min(max(end, first), n - 1)
    return EventWindow(first / fs, (end - first) / fs, T)


def gdr(itd: ItdSeries, ev: EventWindow) -> float:
    """GDR = (1 + T0/T) * <ITD>, in percent."""
    return float(ev.factor * itd.mean_itd)


def gdr_explicit(dec: wmra.WmraDecomposition, ev: EventWindow) -> float:
    """GDR written out directly from the band signals (no ITD series)."""
    a_rms = np.sqrt(np.mean(np.square(dec.approx)))
    mag = np.sqrt(np.sum(np.square(np.asarray(dec.details)), axis=0))
    return float((1.0 + ev.T0 / ev.T) * np.mean(mag) / a_rms * 100.0)


def analyze(w: Waveform, mode: str = "cyclic") -> Analysis:
    """Frequency sync, six-level decomposition, indices."""
    synced = freqsync.synchronize(w)
    dec = wmra.decompose(synced.waveform, mode=mode)
    rms = wmra.band_rms(dec)
    series = itd_series(dec)
    ev = detect_event_window(series)
    feat = FeatureVector(rms.total, gdr(series, ev))
    return Analysis(feat, synced.estimate, rms, series, ev, dec)


def feature_vector(w: Waveform) -> FeatureVector:
    return analyze(w).feature
