"""Labelled synthetic single-phase disturbance windows.

Ten classes: harmonics, sag, swell, oscillatory transient, flicker and the
five two-event combinations. Each waveform is a closed-form superposition,
evaluated sample by sample, so every parameter (including the event bounds
used as ground truth for event-duration detection) is known exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .waveform import NOMINAL_FREQ, NOMINAL_RMS, SAMPLE_RATE, ParameterError, Waveform

__all__ = [
    "ClassLabel",
    "DisturbanceSpec",
    "GeneratorConfig",
    "SnrPolicy",
    "LabeledDataset",
    "add_noise",
    "item_seed",
    "make_dataset",
    "random_spec",
    "synthesize",
]

WINDOW_CYCLES = 10
DEFAULT_DURATION = WINDOW_CYCLES / NOMINAL_FREQ
NOMINAL_PEAK = NOMINAL_RMS * math.sqrt(2.0)
# relative envelope level (pu of fundamental peak) at which a damped
# transient is considered over and is truncated
TRANSIENT_CUTOFF = 0.01


class ClassLabel(IntEnum):
    HARMONICS = 0
    SAG = 1
    SWELL = 2
    TRANSIENT = 3
    FLICKER = 4
    HARMONICS_SAG = 5
    HARMONICS_SWELL = 6
    TRANSIENT_SAG = 7
    TRANSIENT_SWELL = 8
    TRANSIENT_HARMONICS = 9

    @property
    def code(self) -> str:
        return f"C{int(self)}"

    @property
    def has_harmonics(self) -> bool:
        return self in (ClassLabel.HARMONICS, ClassLabel.HARMONICS_SAG,
                        ClassLabel.HARMONICS_SWELL, ClassLabel.TRANSIENT_HARMONICS)

    @property
    def has_sag(self) -> bool:
        return self in (ClassLabel.SAG, ClassLabel.HARMONICS_SAG, ClassLabel.TRANSIENT_SAG)

    @property
    def has_swell(self) -> bool:
        return self in (ClassLabel.SWELL, ClassLabel.HARMONICS_SWELL, ClassLabel.TRANSIENT_SWELL)

    @property
    def has_transient(self) -> bool:
        return self in (ClassLabel.TRANSIENT, ClassLabel.TRANSIENT_SAG,
                        ClassLabel.TRANSIENT_SWELL, ClassLabel.TRANSIENT_HARMONICS)

    @property
    def has_flicker(self) -> bool:
        return self is ClassLabel.FLICKER

    @classmethod
    def parse(cls, value) -> "ClassLabel":
        if isinstance(value, str):
            v = value.strip().upper()
            if v.startswith("C") and v[1:].isdigit():
                return cls(int(v[1:]))
            return cls[v]
        return cls(int(value))


@dataclass(frozen=True)
class DisturbanceSpec:
    """Full parameter set of one synthetic window.

    Magnitudes are per-unit of the fundamental peak ``amplitude``. For sags
    ``magnitude`` is the residual voltage (0.1-0.9 pu), for swells the raised
    voltage (1.1-1.8 pu). ``event_start``/``event_end`` bound the sag/swell; a
    transient runs from ``transient_start`` (defaults to ``event_start``) to
    ``transient_end``.
    """

    label: ClassLabel
    amplitude: float = NOMINAL_PEAK
    frequency: float = NOMINAL_FREQ
    phase: float = 0.0
    magnitude: float | None = None
    event_start: float | None = None
    event_end: float | None = None
    harmonics: tuple[tuple[int, float, float], ...] = ()
    transient_freq: float | None = None
    transient_damping: float | None = None
    transient_amplitude: float | None = None
    transient_phase: float = 0.0
    transient_start: float | None = None
    transient_end: float | None = None
    flicker_freq: float | None = None
    flicker_depth: float | None = None
    flicker_phase: float = 0.0
    noise_snr_db: float | None = None
    seed: int = 0
    sample_rate: float = SAMPLE_RATE
    duration: float = DEFAULT_DURATION

    def __post_init__(self):
        object.__setattr__(self, "label", ClassLabel.parse(self.label))
        object.__setattr__(
            self, "harmonics", tuple((int(h), float(a), float(p)) for h, a, p in self.harmonics)
        )
        if self.transient_start is None and self.label.has_transient and self.event_start is not None:
            object.__setattr__(self, "transient_start", self.event_start)
        if self.transient_end is None and self.label.has_transient and self.transient_start is not None:
            object.__setattr__(self, "transient_end", self._natural_transient_end())
        self.validate()

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.duration))

    def _natural_transient_end(self) -> float | None:
        if None in (self.transient_damping, self.transient_amplitude):
            return None
        if self.transient_amplitude <= TRANSIENT_CUTOFF or self.transient_damping <= 0:
            return self.transient_start
        decay = math.log(self.transient_amplitude / TRANSIENT_CUTOFF) / self.transient_damping
        return min(self.transient_start + decay, self.duration)

    def validate(self) -> None:
        lab = self.label
        nyq = self.sample_rate / 2.0

        def need(name):
            if getattr(self, name) is None:
                raise ParameterError(name, f"required for class {lab.code}")
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(name, "must be finite")

        if not self.amplitude > 0:
            raise ParameterError("amplitude", "must be positive")
        if not 0 < self.frequency < nyq:
            raise ParameterError("frequency", f"must lie in (0, {nyq})")
        if not self.duration > 0 or self.n_samples < 1:
            raise ParameterError("duration", "must cover at least one sample")
        if lab.has_sag or lab.has_swell:
            for name in ("magnitude", "event_start", "event_end"):
                need(name)
            if lab.has_sag and not 0.1 <= self.magnitude <= 0.9:
                raise ParameterError("magnitude", f"sag residual {self.magnitude} outside [0.1, 0.9] pu")
            if lab.has_swell and not 1.1 <= self.magnitude <= 1.8:
                raise ParameterError("magnitude", f"swell magnitude {self.magnitude} outside [1.1, 1.8] pu")
            self._check_window("event_start", "event_end")
        if lab.has_harmonics:
            if not self.harmonics:
                raise ParameterError("harmonics", f"required for class {lab.code}")
            for order, amp, _ in self.harmonics:
                if order < 2:
                    raise ParameterError("harmonics", f"order {order} must be >= 2")
                if order * self.frequency >= nyq:
                    raise ParameterError("harmonics", f"order {order} exceeds Nyquist")
                if amp < 0:
                    raise ParameterError("harmonics", "amplitudes must be non-negative")
        if lab.has_transient:
            for name in ("transient_freq", "transient_damping", "transient_amplitude", "transient_start"):
                need(name)
            if not 0 < self.transient_freq < nyq:
                raise ParameterError("transient_freq", f"{self.transient_freq} Hz not below Nyquist {nyq}")
            if self.transient_damping < 0:
                raise ParameterError("transient_damping", "must be non-negative")
            if self.transient_amplitude < 0:
                raise ParameterError("transient_amplitude", "must be non-negative")
            self._check_window("transient_start", "transient_end")
        if lab.has_flicker:
            for name in ("flicker_freq", "flicker_depth"):
                need(name)
            if not 0 < self.flicker_freq < self.frequency:
                raise ParameterError("flicker_freq", "must lie below the fundamental")
            if not 0 <= self.flicker_depth < 1:
                raise ParameterError("flicker_depth", "must lie in [0, 1)")
        if self.noise_snr_db is not None and math.isnan(self.noise_snr_db):
            raise ParameterError("noise_snr_db", "must not be NaN")

    def _check_window(self, lo_name: str, hi_name: str) -> None:
        lo, hi = getattr(self, lo_name), getattr(self, hi_name)
        if not 0 <= lo < hi <= self.duration + 1e-12:
            raise ParameterError(
                lo_name, f"need 0 <= {lo_name} < {hi_name} <= duration, got [{lo}, {hi}]"
            )

    def event_bounds(self) -> tuple[float, float] | None:
        """Enclosing ground-truth event interval, ``None`` for stationary classes."""
        spans = []
        if self.label.has_sag or self.label.has_swell:
            spans.append((self.event_start, self.event_end))
        if self.label.has_transient:
            spans.append((self.transient_start, self.transient_end))
        if not spans:
            return None
        return min(s for s, _ in spans), max(e for _, e in spans)

    def replace(self, **changes) -> "DisturbanceSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["label"] = int(self.label)
        d["harmonics"] = [list(h) for h in self.harmonics]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DisturbanceSpec":
        d = dict(d)
        d["harmonics"] = tuple(tuple(h) for h in d.get("harmonics", ()))
        return cls(**d)


def _index_mask(n: int, fs: float, start: float, end: float) -> np.ndarray:
    # samples with start <= n/fs < end; edges are one sample wide
    i0 = int(math.ceil(start * fs - 1e-9))
    i1 = int(math.ceil(end * fs - 1e-9))
    mask = np.zeros(n, dtype=bool)
    mask[max(i0, 0):max(min(i1, n), 0)] = True
    return mask


def steady_state(spec: DisturbanceSpec) -> np.ndarray:
    """Fundamental plus harmonics, no events, no noise."""
    t = np.arange(spec.n_samples) / spec.sample_rate
    theta = 2 * np.pi * spec.frequency * t + spec.phase
    s = np.sin(theta)
    if spec.label.has_harmonics:
        for order, amp, ph in spec.harmonics:
            s = s + amp * np.sin(order * theta + ph)
    return spec.amplitude * s


def envelope(spec: DisturbanceSpec) -> np.ndarray:
    """Amplitude envelope: sag/swell rectangular window and/or flicker modulation."""
    n, fs = spec.n_samples, spec.sample_rate
    env = np.ones(n)
    if spec.label.has_sag or spec.label.has_swell:
        env[_index_mask(n, fs, spec.event_start, spec.event_end)] = spec.magnitude
    if spec.label.has_flicker:
        t = np.arange(n) / fs
        env = env * (1.0 + spec.flicker_depth * np.sin(2 * np.pi * spec.flicker_freq * t + spec.flicker_phase))
    return env


def transient(spec: DisturbanceSpec) -> np.ndarray:
    """Damped oscillation confined to [transient_start, transient_end)."""
    n, fs = spec.n_samples, spec.sample_rate
    out = np.zeros(n)
    if not spec.label.has_transient:
        return out
    mask = _index_mask(n, fs, spec.transient_start, spec.transient_end)
    tau = np.arange(n)[mask] / fs - spec.transient_start
    out[mask] = (
        spec.transient_amplitude * spec.amplitude
        * np.exp(-spec.transient_damping * tau)
        * np.sin(2 * np.pi * spec.transient_freq * tau + spec.transient_phase)
    )
    return out


def synthesize(spec: DisturbanceSpec) -> Waveform:
    """Render ``spec`` to samples; noise is added when ``noise_snr_db`` is set."""
    samples = envelope(spec) * steady_state(spec) + transient(spec)
    w = Waveform(samples, spec.sample_rate, NOMINAL_FREQ)
    if spec.noise_snr_db is not None:
        w = add_noise(w, spec.noise_snr_db, seed=spec.seed)
    return w


def add_noise(w: Waveform, snr_db: float | None, seed) -> Waveform:
    """Add white Gaussian noise at exactly ``snr_db`` (signal power / noise power).

    The noise draw is rescaled to the target power so the realised SNR
    matches the request, not just its expectation. ``None`` or ``inf``
    returns the waveform unchanged.
    """
    if snr_db is None or snr_db == math.inf:
        return w
    if not math.isfinite(snr_db):
        raise ParameterError("snr_db", f"must be finite or None, got {snr_db}")
    p_sig = w.power()
    if p_sig <= 0:
        raise ParameterError("snr_db", "SNR undefined for a zero-power signal")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(w))
    noise -= noise.mean()
    noise *= math.sqrt(p_sig / 10 ** (snr_db / 10) / np.mean(noise**2))
    return w.replace(samples=w.samples + noise)


# ---------------------------------------------------------------- datasets

DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "frequency": (50.0, 50.0),
    "sag_residual": (0.4, 0.9),
    "swell_magnitude": (1.1, 1.5),
    "event_cycles": (1.0, 6.0),
    "harmonic_amplitude": (0.02, 0.12),
    "transient_freq": (500.0, 5000.0),
    "transient_tau": (1e-3, 10e-3),
    "transient_amplitude": (0.2, 1.0),
    "flicker_freq": (8.0, 10.0),
    "flicker_depth": (0.02, 0.10),
}
# Per-class overrides that keep the ten classes apart in the (S, GDR) plane.
# Without them every class draws from DEFAULT_RANGES and several pairs
# (harmonics vs harmonics+transient, transient vs flicker, sag vs
# sag+transient) land on top of each other. Sag and swell classes skip the
# mildest one-cycle events, which look like flicker by RMS. Transient
# amplitudes and time constants above the shared range stay inside the
# IEEE 1159 oscillatory transient limits (up to 4 pu, 0.3-50 ms).
_SAG = {"sag_residual": (0.4, 0.85), "event_cycles": (2.0, 6.0)}
_SWELL = {"swell_magnitude": (1.15, 1.5), "event_cycles": (2.0, 6.0)}
_RIDING = {"transient_amplitude": (0.6, 1.0), "transient_tau": (6e-3, 10e-3)}
ZONED_RANGES: dict[int, dict[str, tuple[float, float]]] = {
    0: {"harmonic_amplitude": (0.035, 0.05)},
    1: dict(_SAG),
    2: dict(_SWELL),
    3: {"transient_amplitude": (1.0, 1.5), "transient_tau": (10e-3, 12e-3)},
    5: {**_SAG, "harmonic_amplitude": (0.08, 0.12)},
    6: {**_SWELL, "harmonic_amplitude": (0.08, 0.12)},
    7: {**_SAG, **_RIDING},
    8: {**_SWELL, **_RIDING},
    9: {"harmonic_amplitude": (0.08, 0.12), "transient_amplitude": (0.3, 1.0)},
}
RANGE_PRESETS = {"zoned": ZONED_RANGES, "shared": {}}

HARMONIC_ORDERS = (3, 5, 7)
# events are kept one cycle away from the window edges
EDGE_CYCLES = 1.0


@dataclass(frozen=True)
class SnrPolicy:
    """Per class, the first ``round(clean_fraction * count)`` items are clean; the
    rest get an SNR drawn uniformly in ``snr_range``."""

    clean_fraction: float = 1.0
    snr_range: tuple[float, float] = (34.0, 50.0)

    def to_dict(self) -> dict:
        return {"clean_fraction": self.clean_fraction, "snr_range": list(self.snr_range)}


@dataclass(frozen=True)
class GeneratorConfig:
    per_class_count: int = 100
    ranges: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_RANGES))
    class_ranges: dict[int, dict[str, tuple[float, float]]] = field(
        default_factory=lambda: {c: dict(r) for c, r in ZONED_RANGES.items()})
    snr: SnrPolicy = field(default_factory=SnrPolicy)
    master_seed: int = 0
    classes: tuple[int, ...] = tuple(int(c) for c in ClassLabel)
    amplitude: float = NOMINAL_PEAK
    sample_rate: float = SAMPLE_RATE
    duration: float = DEFAULT_DURATION

    def __post_init__(self):
        if int(self.per_class_count) < 1:
            raise ParameterError("per_class_count", f"must be >= 1, got {self.per_class_count}")
        merged = dict(DEFAULT_RANGES)
        merged.update(_checked_ranges(self.ranges))
        object.__setattr__(self, "ranges", merged)
        per_class = {int(ClassLabel.parse(c)): _checked_ranges(r) for c, r in self.class_ranges.items()}
        object.__setattr__(self, "class_ranges", per_class)
        if isinstance(self.snr, dict):
            object.__setattr__(self, "snr", SnrPolicy(self.snr["clean_fraction"], tuple(self.snr["snr_range"])))
        lo, hi = self.snr.snr_range
        if not 0 <= self.snr.clean_fraction <= 1:
            raise ParameterError("clean_fraction", "must lie in [0, 1]")
        if lo > hi:
            raise ParameterError("snr_range", f"empty range [{lo}, {hi}]")
        object.__setattr__(self, "classes", tuple(int(ClassLabel.parse(c)) for c in self.classes))

    def to_dict(self) -> dict:
        return {
            "per_class_count": int(self.per_class_count),
            "ranges": {k: list(v) for k, v in sorted(self.ranges.items())},
            "class_ranges": {
                str(c): {k: list(v) for k, v in sorted(r.items())} for c, r in sorted(self.class_ranges.items())
            },
            "snr": self.snr.to_dict(),
            "master_seed": int(self.master_seed),
            "classes": list(self.classes),
            "amplitude": self.amplitude,
            "sample_rate": self.sample_rate,
            "duration": self.duration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        d["ranges"] = {k: tuple(v) for k, v in d.get("ranges", {}).items()}
        if "class_ranges" in d:
            d["class_ranges"] = {
                int(c): {k: tuple(v) for k, v in r.items()} for c, r in d["class_ranges"].items()
            }
        if "snr" in d:
            d["snr"] = SnrPolicy(d["snr"]["clean_fraction"], tuple(d["snr"]["snr_range"]))
        if "classes" in d:
            d["classes"] = tuple(d["classes"])
        return cls(**d)

    def ranges_for(self, label) -> dict[str, tuple[float, float]]:
        out = dict(self.ranges)
        out.update(self.class_ranges.get(int(label), {}))
        return out

    @classmethod
    def preset(cls, name: str, **kw) -> "GeneratorConfig":
        """``"zoned"`` (per-class ranges, the default) or ``"shared"`` (one range set)."""
        try:
            table = RANGE_PRESETS[name]
        except KeyError:
            raise ParameterError("ranges", f"unknown preset {name!r}; choose from {sorted(RANGE_PRESETS)}") from None
        return cls(class_ranges={c: dict(r) for c, r in table.items()}, **kw)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _checked_ranges(ranges) -> dict[str, tuple[float, float]]:
    out = {}
    for name, v in ranges.items():
        lo, hi = float(v[0]), float(v[1])
        if name not in DEFAULT_RANGES:
            raise ParameterError(name, "unknown parameter range")
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ParameterError(name, f"empty range [{lo}, {hi}]")
        out[name] = (lo, hi)
    return out


def item_seed(master_seed: int, label: int, index: int) -> int:
    """Per-item seed: SeedSequence over (master, class, index), first 63-bit word."""
    ss = np.random.SeedSequence([int(master_seed), int(label), int(index)])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def random_spec(label, rng: np.random.Generator, config: GeneratorConfig | None = None,
                seed: int = 0, noise_snr_db: float | None = None) -> DisturbanceSpec:
    """Draw one parameter set for ``label`` uniformly from the class's ranges."""
    cfg = config or GeneratorConfig(per_class_count=1)
    label = ClassLabel.parse(label)
    r = cfg.ranges_for(label)

    def u(name):
        lo, hi = r[name]
        return float(rng.uniform(lo, hi)) if hi > lo else lo

    freq = u("frequency")
    kw: dict = dict(
        label=label,
        amplitude=cfg.amplitude,
        frequency=freq,
        phase=float(rng.uniform(0, 2 * np.pi)),
        sample_rate=cfg.sample_rate,
        duration=cfg.duration,
        seed=seed,
        noise_snr_db=noise_snr_db,
    )
    cycle = 1.0 / freq
    edge = EDGE_CYCLES * cycle
    if label.has_sag or label.has_swell:
        kw["magnitude"] = u("sag_residual") if label.has_sag else u("swell_magnitude")
        length = u("event_cycles") * cycle
        latest = max(cfg.duration - edge - length, edge)
        start = float(rng.uniform(edge, latest)) if latest > edge else edge
        kw["event_start"], kw["event_end"] = start, start + length
    if label.has_harmonics:
        kw["harmonics"] = tuple(
            (h, u("harmonic_amplitude"), float(rng.uniform(0, 2 * np.pi))) for h in HARMONIC_ORDERS
        )
    if label.has_transient:
        kw["transient_freq"] = u("transient_freq")
        kw["transient_damping"] = 1.0 / u("transient_tau")
        kw["transient_amplitude"] = u("transient_amplitude")
        kw["transient_phase"] = float(rng.uniform(0, 2 * np.pi))
        if "event_start" in kw:
            # transient rides on the sag/swell onset
            kw["transient_start"] = kw["event_start"]
        else:
            decay = math.log(max(kw["transient_amplitude"], TRANSIENT_CUTOFF) / TRANSIENT_CUTOFF) \
                / kw["transient_damping"]
            latest = max(cfg.duration - edge - decay, edge)
            start = float(rng.uniform(edge, latest)) if latest > edge else edge
            kw["transient_start"] = start
            kw["event_start"] = start
    if label.has_flicker:
        kw["flicker_freq"] = u("flicker_freq")
        kw["flicker_depth"] = u("flicker_depth")
        kw["flicker_phase"] = float(rng.uniform(0, 2 * np.pi))
    return DisturbanceSpec(**kw)


@dataclass
class LabeledDataset:
    waveforms: list[Waveform]
    labels: list[ClassLabel]
    specs: list[DisturbanceSpec]
    config: GeneratorConfig | None = None

    def __post_init__(self):
        if not len(self.waveforms) == len(self.labels) == len(self.specs):
            raise ValueError("waveforms, labels and specs must have equal length")
        for lab, spec in zip(self.labels, self.specs):
            if spec.label != lab:
                raise ValueError(f"spec label {spec.label.code} != stored label {ClassLabel(lab).code}")

    def __len__(self) -> int:
        return len(self.waveforms)

    def __iter__(self):
        return iter(zip(self.waveforms, self.labels, self.specs))

    @property
    def digest(self) -> str:
        return self.config.digest() if self.config is not None else ""

    def counts(self) -> dict[ClassLabel, int]:
        out: dict[ClassLabel, int] = {}
        for lab in self.labels:
            out[lab] = out.get(lab, 0) + 1
        return out

    def subset(self, idx) -> "LabeledDataset":
        idx = list(idx)
        return LabeledDataset(
            [self.waveforms[i] for i in idx], [self.labels[i] for i in idx],
            [self.specs[i] for i in idx], self.config,
        )

    @classmethod
    def from_specs(cls, specs, config=None) -> "LabeledDataset":
        specs = list(specs)
        return cls([synthesize(s) for s in specs], [s.label for s in specs], specs, config)


def make_dataset(config: GeneratorConfig) -> LabeledDataset:
    """``per_class_count`` windows per class, reproducible from ``master_seed``."""
    specs = []
    n_clean = int(round(config.snr.clean_fraction * config.per_class_count))
    for lab in config.classes:
        for i in range(config.per_class_count):
            seed = item_seed(config.master_seed, lab, i)
            rng = np.random.default_rng(seed)
            snr = None
            if i >= n_clean:
                lo, hi = config.snr.snr_range
                snr = float(rng.uniform(lo, hi)) if hi > lo else lo
            specs.append(random_spec(lab, rng, config, seed=seed, noise_snr_db=snr))
    return LabeledDataset.from_specs(specs, config)
