import math

import numpy as np
import pytest

from conftest import PEAK, sag_spec
from pqgdr import ClassLabel, DisturbanceSpec, GeneratorConfig, ParameterError, add_noise, make_dataset, synthesize
from pqgdr.siggen import DEFAULT_RANGES, SnrPolicy, envelope, item_seed, random_spec


def pure_fundamental(spec):
    t = np.arange(spec.n_samples) / spec.sample_rate
    return spec.amplitude * np.sin(2 * np.pi * spec.frequency * t + spec.phase)


def measured_snr(clean, noisy):
    noise = noisy.samples - clean.samples
    return 10 * math.log10(clean.power() / np.mean(noise**2))


# ---------------------------------------------------------------- synthesize

def test_pure_sine_rms():
    w = synthesize(DisturbanceSpec(ClassLabel.HARMONICS, harmonics=((3, 0.0, 0.0),)))
    assert len(w) == 2560
    assert w.rms() == pytest.approx(PEAK / math.sqrt(2), rel=1e-12)
    assert np.allclose(w.samples, pure_fundamental(DisturbanceSpec(ClassLabel.HARMONICS, harmonics=((3, 0, 0),))))


def test_deep_sag_window_rms_near_175():
    # residual 0.24 (depth 0.76) over 4.47 cycles of the 10-cycle window
    w = synthesize(sag_spec(3.0, 7.47, residual=0.24))
    assert w.rms() == pytest.approx(175.2, rel=0.01)


def test_transient_matches_closed_form_and_peaks_near_onset():
    spec = DisturbanceSpec(ClassLabel.TRANSIENT, transient_freq=1500.0, transient_damping=500.0,
                           transient_amplitude=0.8, event_start=4 / 50.0, phase=0.4, transient_phase=0.9)
    w = synthesize(spec)
    fs, tau = spec.sample_rate, 1.0 / spec.transient_damping
    ref = np.empty(spec.n_samples)
    for n in range(spec.n_samples):
        t = n / fs
        v = spec.amplitude * math.sin(2 * math.pi * 50.0 * t + 0.4)
        if spec.transient_start <= t < spec.transient_end:
            dt = t - spec.transient_start
            v += 0.8 * spec.amplitude * math.exp(-dt / tau) * math.sin(2 * math.pi * 1500.0 * dt + 0.9)
        ref[n] = v
    assert np.max(np.abs(w.samples - ref)) < 1e-9 * PEAK
    dev = np.abs(w.samples - pure_fundamental(spec))
    t_peak = np.argmax(dev) / fs
    assert spec.transient_start <= t_peak <= spec.transient_start + tau


@pytest.mark.parametrize("label", [1, 2, 3, 7, 8])
def test_event_locality(label):
    rng = np.random.default_rng(label)
    spec = random_spec(label, rng)
    w = synthesize(spec)
    lo, hi = spec.event_bounds()
    t = w.time
    outside = (t < lo - 1 / spec.sample_rate) | (t >= hi + 1 / spec.sample_rate)
    assert outside.sum() > 500
    assert np.array_equal(w.samples[outside], pure_fundamental(spec)[outside])


def test_superposition_harmonics_sag():
    harm = ((3, 0.08, 0.3), (5, 0.05, 1.1), (7, 0.03, 2.0))
    c0 = DisturbanceSpec(ClassLabel.HARMONICS, harmonics=harm, phase=0.2)
    c1 = sag_spec(2.5, 6.0, residual=0.6, phase=0.2)
    c5 = DisturbanceSpec(ClassLabel.HARMONICS_SAG, harmonics=harm, phase=0.2, magnitude=0.6,
                         event_start=c1.event_start, event_end=c1.event_end)
    assert np.allclose(synthesize(c5).samples, envelope(c1) * synthesize(c0).samples, rtol=0, atol=1e-9)


def test_determinism_including_noise():
    spec = sag_spec(noise_snr_db=36.0, seed=11)
    assert synthesize(spec) == synthesize(spec)
    assert synthesize(spec) != synthesize(spec.replace(seed=12))


@pytest.mark.parametrize("field,kw", [
    ("magnitude", dict(label=1, magnitude=0.05, event_start=0.02, event_end=0.06)),
    ("magnitude", dict(label=2, magnitude=1.95, event_start=0.02, event_end=0.06)),
    ("event_start", dict(label=1, magnitude=0.5, event_start=0.08, event_end=0.06)),
    ("event_start", dict(label=1, magnitude=0.5, event_start=0.1, event_end=0.3)),
    ("transient_freq", dict(label=3, transient_freq=7000.0, transient_damping=200.0,
                            transient_amplitude=0.5, event_start=0.05)),
    ("harmonics", dict(label=0)),
    ("flicker_freq", dict(label=4, flicker_freq=60.0, flicker_depth=0.05)),
])
def test_invalid_spec_names_field(field, kw):
    with pytest.raises(ParameterError) as exc:
        DisturbanceSpec(**kw)
    assert exc.value.field == field


def test_spec_dict_round_trip():
    spec = DisturbanceSpec(ClassLabel.TRANSIENT_HARMONICS, harmonics=((3, 0.1, 0.2),), transient_freq=900.0,
                           transient_damping=150.0, transient_amplitude=0.5, event_start=0.05, seed=4)
    assert DisturbanceSpec.from_dict(spec.to_dict()) == spec


# ---------------------------------------------------------------- noise

@pytest.mark.parametrize("snr", [20.0, 27.5, 34.0, 40.0, 45.5, 50.0, 60.0])
def test_noise_calibration(snr):
    clean = synthesize(sag_spec(2.0, 6.0, residual=0.7))
    for seed in range(5):
        assert measured_snr(clean, add_noise(clean, snr, seed)) == pytest.approx(snr, abs=0.1)


def test_noise_at_34db_is_about_two_percent():
    clean = synthesize(DisturbanceSpec(ClassLabel.HARMONICS, harmonics=((3, 0.0, 0.0),)))
    noise = add_noise(clean, 34.0, 1).samples - clean.samples
    assert np.sqrt(np.mean(noise**2)) / clean.rms() == pytest.approx(0.02, abs=0.001)


def test_noise_none_is_identity_and_zero_signal_rejected():
    w = synthesize(sag_spec())
    assert add_noise(w, None, 0) is w
    assert add_noise(w, math.inf, 0) is w
    with pytest.raises(ParameterError):
        add_noise(w * 0.0, 40.0, 0)
    with pytest.raises(ParameterError):
        add_noise(w, math.nan, 0)


def test_noise_deterministic_per_seed():
    w = synthesize(sag_spec())
    assert add_noise(w, 40, 3) == add_noise(w, 40, 3)
    assert add_noise(w, 40, 3) != add_noise(w, 40, 4)


# ---------------------------------------------------------------- datasets

def test_counts_and_labels():
    ds = make_dataset(GeneratorConfig(per_class_count=3, master_seed=5))
    assert len(ds) == 30
    assert all(n == 3 for n in ds.counts().values())
    assert all(spec.label == lab for _, lab, spec in ds)


def test_dataset_bit_identical_rerun():
    cfg = GeneratorConfig(per_class_count=2, master_seed=9, snr=SnrPolicy(0.5))
    a, b = make_dataset(cfg), make_dataset(cfg)
    assert a.specs == b.specs
    assert all(x == y for x, y in zip(a.waveforms, b.waveforms))
    assert a.digest == b.digest


def test_degenerate_ranges_fix_parameters():
    fixed = {k: (lo, lo) for k, (lo, _) in DEFAULT_RANGES.items()}
    fixed["event_cycles"] = (3.0, 3.0)
    fixed["transient_amplitude"] = (0.5, 0.5)
    cfg = GeneratorConfig(per_class_count=1, ranges=fixed, class_ranges={})
    ds = make_dataset(cfg)
    assert len(ds) == 10 and sorted(int(x) for x in ds.labels) == list(range(10))
    for spec in ds.specs:
        if spec.label.has_sag:
            assert spec.magnitude == fixed["sag_residual"][0]
        if spec.label.has_swell:
            assert spec.magnitude == fixed["swell_magnitude"][0]
        if spec.event_end is not None and (spec.label.has_sag or spec.label.has_swell):
            assert spec.event_end - spec.event_start == pytest.approx(3.0 / 50.0)
        if spec.label.has_harmonics:
            assert {a for _, a, _ in spec.harmonics} == {fixed["harmonic_amplitude"][0]}
        if spec.label.has_transient:
            assert spec.transient_amplitude == 0.5


def test_drawn_parameters_stay_in_ranges():
    cfg = GeneratorConfig(per_class_count=20, master_seed=3)
    for spec in make_dataset(cfg).specs:
        r = cfg.ranges_for(spec.label)
        if spec.label.has_sag:
            assert r["sag_residual"][0] <= spec.magnitude <= r["sag_residual"][1]
        if spec.label.has_swell:
            assert r["swell_magnitude"][0] <= spec.magnitude <= r["swell_magnitude"][1]
        if spec.label.has_transient:
            assert r["transient_freq"][0] <= spec.transient_freq <= r["transient_freq"][1]
            lo, hi = r["transient_tau"]
            assert lo - 1e-15 <= 1 / spec.transient_damping <= hi + 1e-15
        if spec.label.has_flicker:
            assert r["flicker_depth"][0] <= spec.flicker_depth <= r["flicker_depth"][1]
        bounds = spec.event_bounds()
        if bounds:
            assert 0 <= bounds[0] < bounds[1] <= spec.duration


def test_snr_policy_split():
    ds = make_dataset(GeneratorConfig(per_class_count=4, snr=SnrPolicy(0.5, (34.0, 50.0)), master_seed=2))
    for lab in range(10):
        snrs = [s.noise_snr_db for s in ds.specs if int(s.label) == lab]
        assert snrs[:2] == [None, None]
        assert all(34.0 <= s <= 50.0 for s in snrs[2:])


@pytest.mark.parametrize("bad", [{"sag_residual": (0.8, 0.4)}, {"transient_tau": (math.nan, 1.0)},
                                 {"no_such_range": (0.0, 1.0)}])
def test_empty_or_unknown_range_rejected(bad):
    name = next(iter(bad))
    with pytest.raises(ParameterError) as exc:
        GeneratorConfig(ranges=bad)
    assert exc.value.field == name


def test_per_class_count_must_be_positive():
    with pytest.raises(ParameterError):
        GeneratorConfig(per_class_count=0)


def test_item_seed_independent_of_order():
    assert item_seed(1, 3, 7) == item_seed(1, 3, 7)
    assert len({item_seed(1, c, i) for c in range(10) for i in range(100)}) == 1000


def test_config_dict_round_trip_and_presets():
    cfg = GeneratorConfig.preset("shared", per_class_count=5, master_seed=4, snr=SnrPolicy(0.3))
    assert GeneratorConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.class_ranges == {}
    assert GeneratorConfig.preset("zoned").ranges_for(1)["event_cycles"] == (2.0, 6.0)
    with pytest.raises(ParameterError):
        GeneratorConfig.preset("bogus")
