from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOMINAL_FREQ = 50.0
SAMPLE_RATE = 12800.0
NOMINAL_RMS = 230.0


class ParameterError(ValueError):
    """A generator or analysis parameter is outside its valid range."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DegenerateSignalError(ValueError):
    """The signal carries no usable fundamental (zero power, DC, ...)."""


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled single-phase voltage window."""

    samples: np.ndarray
    sample_rate: float = SAMPLE_RATE
    nominal_freq: float = NOMINAL_FREQ

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise ParameterError("samples", "must be a non-empty 1-D array")
        if not self.sample_rate > 0:
            raise ParameterError("sample_rate", f"must be positive, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Waveform):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and self.nominal_freq == other.nominal_freq
            and np.array_equal(self.samples, other.samples)
        )

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def time(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate

    def rms(self) -> float:
        return float(np.sqrt(np.mean(np.square(self.samples))))

    def power(self) -> float:
        return float(np.mean(np.square(self.samples)))

    def replace(self, samples=None, sample_rate=None) -> "Waveform":
        return Waveform(
            self.samples if samples is None else samples,
            self.sample_rate if sample_rate is None else sample_rate,
            self.nominal_freq,
        )

    def __mul__(self, alpha: float) -> "Waveform":
        return self.replace(samples=self.samples * alpha)

    __rmul__ = __mul__
