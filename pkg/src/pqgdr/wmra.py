"""Six-level wavelet multiresolution analysis with the discrete Meyer wavelet.

The filter bank is evaluated in the DFT domain from the closed-form Meyer
scaling filter, which is band-limited and exactly power complementary, so
Mallat analysis followed by synthesis reconstructs the input to machine
precision. The customary FIR "dmey" table (62 entries, 61 nonzero taps) is
kept as the half table ``DMEY_FIR``; it is a truncated, slightly non-orthogonal sampling of the same response and
can be selected with ``filters="fir"`` for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 12800.0
LEVELS = 6

# Right half of the symmetric dmey lowpass, centre tap first. The full
# 61-tap filter is DMEY_FIR[:0:-1] + DMEY_FIR.
DMEY_FIR = np.array([
    0.7445855923188063,
    0.44459300275757724,
    -0.035087555656258346,
    -0.13284520043622938,
    0.030655091960824263,
    0.0637390243228016,
    -0.024348745906078023,
    -0.03213079399021176,
    0.017423434103729693,
    0.015270015130934803,
    -0.011061496392513451,
    -0.006387718318497156,
    0.006045814097323304,
    0.002202534100911002,
    -0.002704672124643725,
    -0.0006011502343516092,
    6.554305930575149e-05,
    -1.6312699734552807e-05,
    3.20544191334478e-06,
    7.367572885903746e-07,
    -1.489549216497156e-06,
    1.1307947017916706e-06,
    -5.506340565252278e-07,
    1.1783004497663934e-07,
    8.200680650386481e-08,
    -1.0866516536735883e-07,
    6.066975741351135e-08,
    -1.0798819539621958e-08,
    -1.111944952595278e-08,
    8.519459636796214e-09,
    -1.009999956941423e-12,
])


class ShapeError(ValueError):
    """Raised when a signal length is incompatible with the decomposition depth."""


def dmey_fir_taps() -> np.ndarray:
    """Full symmetric 61-tap dmey lowpass (centre at index 30)."""
    return np.concatenate([DMEY_FIR[:0:-1], DMEY_FIR])


def meyer_auxiliary(x):
    """Meyer's smooth step: 0 below 0, 1 above 1, nu(x) + nu(1 - x) = 1."""
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35.0 - 84.0 * x + 70.0 * x**2 - 20.0 * x**3)


def meyer_lowpass(omega):
    """Zero-phase Meyer scaling filter H(w), normalised so H(0) = sqrt(2)."""
    w = np.abs(np.angle(np.exp(1j * np.asarray(omega, dtype=float))))
    return np.sqrt(2.0) * np.cos(0.5 * np.pi * meyer_auxiliary(3.0 * w / np.pi - 1.0))


def fir_lowpass(omega):
    """Zero-phase frequency response of the truncated dmey FIR table."""
    w = np.asarray(omega, dtype=float)
    m = np.arange(1, len(DMEY_FIR))
    return DMEY_FIR[0] + 2.0 * np.cos(np.multiply.outer(w, m)) @ DMEY_FIR[1:]


_LOWPASS = {"meyer": meyer_lowpass, "fir": fir_lowpass}


def _filters(m: int, lowpass) -> tuple[np.ndarray, np.ndarray]:
    w = 2.0 * np.pi * np.arange(m) / m
    h = lowpass(w).astype(complex)
    g = np.exp(-1j * w) * lowpass(w + np.pi)
    return h, g


def analysis_step(x: np.ndarray, lowpass=meyer_lowpass) -> tuple[np.ndarray, np.ndarray]:
    """One Mallat analysis stage on a circular signal of even length."""
    m = len(x)
    if m % 2:
        raise ShapeError(f"analysis needs an even length, got {m}")
    h, g = _filters(m, lowpass)
    spec = np.fft.fft(x)
    half = m // 2
    a = 0.5 * (spec[:half] * h[:half].conj() + spec[half:] * h[half:].conj())
    d = 0.5 * (spec[:half] * g[:half].conj() + spec[half:] * g[half:].conj())
    return np.fft.ifft(a).real, np.fft.ifft(d).real


def synthesis_step(a: np.ndarray | None, d: np.ndarray | None, lowpass=meyer_lowpass) -> np.ndarray:
    """Inverse of :func:`analysis_step`; either branch may be ``None`` (zero)."""
    ref = a if a is not None else d
    half = len(ref)
    h, g = _filters(2 * half, lowpass)
    out = np.zeros(2 * half, dtype=complex)
    if a is not None:
        out += np.tile(np.fft.fft(a), 2) * h
    if d is not None:
        out += np.tile(np.fft.fft(d), 2) * g
    return np.fft.ifft(out).real


@dataclass(frozen=True)
class WmraDecomposition:
    """Full-length per-band signals: approximation a_J and details d_1..d_J."""

    approx: np.ndarray
    details: tuple[np.ndarray, ...]
    sample_rate: float = SAMPLE_RATE

    @property
    def levels(self) -> int:
        return len(self.details)

    def __len__(self) -> int:
        return len(self.approx)

    def detail(self, j: int) -> np.ndarray:
        """Detail signal d_j, 1-based level index (d_1 is the highest band)."""
        return self.details[j - 1]

    def reconstruct(self) -> np.ndarray:
        return self.approx + np.sum(self.details, axis=0)

    def bands(self) -> dict[str, np.ndarray]:
        """Band signals keyed ``a6, d6, ..., d1`` (low to high frequency)."""
        out = {f"a{self.levels}": self.approx}
        for j in range(self.levels, 0, -1):
            out[f"d{j}"] = self.detail(j)
        return out


@dataclass(frozen=True)
class BandRms:
    approx: float
    details: dict[int, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(np.sqrt(self.approx**2 + sum(v**2 for v in self.details.values())))

    def as_dict(self) -> dict[str, float]:
        out = {f"A{len(self.details)}": self.approx}
        out.update({f"D{j}": v for j, v in sorted(self.details.items())})
        out["S"] = self.total
        return out


def _circular_bands(x: np.ndarray, levels: int, lowpass) -> tuple[np.ndarray, list[np.ndarray]]:
    approx = x
    coeffs = []
    for _ in range(levels):
        approx, d = analysis_step(approx, lowpass)
        coeffs.append(d)

    def up(a, d, start):
        # synthesise from level `start` back to full length
        sig = synthesis_step(a, d, lowpass)
        for _ in range(start - 1):
            sig = synthesis_step(sig, None, lowpass)
        return sig

    a_full = up(approx, None, levels)
    d_full = [up(None, coeffs[j - 1], j) for j in range(1, levels + 1)]
    return a_full, d_full


def decompose(
    x,
    levels: int = LEVELS,
    sample_rate: float = SAMPLE_RATE,
    mode: str = "cyclic",
    filters: str = "meyer",
    period: int = 256,
) -> WmraDecomposition:
    """Mallat decomposition to ``levels`` and per-band reconstruction.

    Boundary modes:

    ``"cyclic"`` (default) pads the window on both sides by whole periods of
    ``period`` samples (the signal one period later/earlier), so a window
    that holds an integer number of fundamental periods continues smoothly
    and a small synchronisation error only shows up as a one-period seam.
    ``"periodic"`` transforms the window as a circle. ``"symmetric"`` mirrors
    it (half-sample symmetry), which puts a slope kink at both ends.
    """
    sample_rate = float(getattr(x, "sample_rate", sample_rate))
    x = np.asarray(getattr(x, "samples", x), dtype=float)
    if x.ndim != 1:
        raise ShapeError("expected a 1-D signal")
    step = 2**levels
    if len(x) == 0 or len(x) % step:
        raise ShapeError(f"length {len(x)} is not a positive multiple of 2**{levels} = {step}")
    try:
        lowpass = _LOWPASS[filters]
    except KeyError:
        raise ValueError(f"unknown filter set {filters!r}") from None

    n = len(x)
    lead = 0
    if mode == "symmetric":
        ext = np.concatenate([x, x[::-1]])
    elif mode == "periodic":
        ext = x
    elif mode == "cyclic":
        # a window shorter than one period is its own period
        ext, lead = cyclic_extend(x, min(period, n), step)
    else:
        raise ValueError(f"unknown boundary mode {mode!r}")
    a_full, d_full = _circular_bands(ext, levels, lowpass)
    return WmraDecomposition(
        approx=a_full[lead:lead + n],
        details=tuple(d[lead:lead + n] for d in d_full),
        sample_rate=sample_rate,
    )


def cyclic_extend(x: np.ndarray, period: int, multiple: int = 1) -> tuple[np.ndarray, int]:
    """Pad ``x`` by half its length on each side with whole-period copies.

    Returns the padded signal and the offset of ``x`` inside it. Sample n
    outside the window takes the value at n -/+ k*period, k the smallest
    count that lands inside. Total length is a multiple of ``multiple``.
    """
    n = len(x)
    if not 0 < period <= n:
        raise ShapeError(f"period {period} must lie in (0, {n}]")
    pad = -(-(n // 2) // multiple) * multiple
    idx = np.arange(-pad, n + pad)
    low, high = idx < 0, idx >= n
    idx[low] += -(idx[low] // period) * period
    idx[high] -= ((idx[high] - n) // period + 1) * period
    return x[idx], pad


def band_rms(dec: WmraDecomposition) -> BandRms:
    def rms(v):
        return float(np.sqrt(np.mean(np.square(v))))

    return BandRms(
        approx=rms(dec.approx),
        details={j: rms(dec.detail(j)) for j in range(1, dec.levels + 1)},
    )


@dataclass(frozen=True)
class Band:
    name: str
    f_lo: float
    f_hi: float
    harmonics: tuple[int, ...]

    def label(self) -> str:
        if not self.harmonics:
            return "-"
        if len(self.harmonics) <= 4:
            return ", ".join(_ordinal(h) for h in self.harmonics)
        return f"{_ordinal(self.harmonics[0])}-{_ordinal(self.harmonics[-1])} (odd)"


def _ordinal(n: int) -> str:
    suffix = "th" if 10 <= n % 100 <= 20 else {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def band_map(fs: float = SAMPLE_RATE, levels: int = LEVELS, nominal_freq: float = 50.0) -> list[Band]:
    """Dyadic bands of a ``levels``-deep decomposition, lowest band first.

    Detail level j covers (fs/2^(j+1), fs/2^j]; the approximation covers
    [0, fs/2^(levels+1)]. Each band lists the odd harmonics of
    ``nominal_freq`` that fall inside it.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")

    def odd_in(lo, hi, closed_lo):
        top = int(np.floor(hi / nominal_freq))
        return tuple(
            h for h in range(1, top + 1, 2)
            if (h * nominal_freq >= lo if closed_lo else h * nominal_freq > lo) and h * nominal_freq <= hi
        )

    f_a = fs / 2 ** (levels + 1)
    bands = [Band(f"a{levels}", 0.0, f_a, odd_in(0.0, f_a, True))]
    for j in range(levels, 0, -1):
        lo, hi = fs / 2 ** (j + 1), fs / 2**j
        bands.append(Band(f"d{j}", lo, hi, odd_in(lo, hi, False)))
    return bands


def bands_to_csv(dec: WmraDecomposition, path) -> None:
    """Debug dump: one column per band plus a time column."""
    bands = dec.bands()
    t = np.arange(len(dec)) / dec.sample_rate
    cols = np.column_stack([t, *bands.values()])
    np.savetxt(path, cols, delimiter=",", header=",".join(["t", *bands]), comments="", fmt="%.10g")
