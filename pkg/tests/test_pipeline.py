import math

import numpy as np
import pytest

from conftest import sine
from pqgdr import ClassLabel, DisturbanceSpec, GeneratorConfig, SnrPolicy, SvmModel, make_dataset
from pqgdr import pipeline as P
from pqgdr.siggen import LabeledDataset


@pytest.fixture(scope="module")
def small():
    train = make_dataset(GeneratorConfig(per_class_count=20, master_seed=1, snr=SnrPolicy(1.0)))
    test = make_dataset(GeneratorConfig(per_class_count=10, master_seed=2, snr=SnrPolicy(1.0)))
    return P.train(train, grid=False), test


def clean_sines(n=4):
    spec = DisturbanceSpec(ClassLabel.HARMONICS, harmonics=((3, 0.0, 0.0),))
    return LabeledDataset([sine(50.0, phase=0.3 * i) for i in range(n)], [spec.label] * n, [spec] * n)


# ---------------------------------------------------------------- features

def test_feature_count_and_order(small):
    _, test = small
    fs = P.extract_features(test)
    assert len(fs) == len(test) == 100 and not fs.errors
    assert fs.labels == [int(x) for x in test.labels]
    X, y = fs.matrix()
    assert X.shape == (100, 2) and np.array_equal(y, fs.labels)
    assert fs.records[0]["k1"] == fs.features[0].k1
    assert len(fs.pairs()) == 100 and fs.pairs()[0][1] == ClassLabel(0)


def test_clean_sines_null_gdr():
    fs = P.extract_features(clean_sines())
    assert all(f.k2 < 0.5 for f in fs.features)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        P.extract_features(LabeledDataset([], [], []))


def test_failures_are_collected_not_fatal(small):
    model, _ = small
    ds = clean_sines(3)
    ds.waveforms[1] = ds.waveforms[1] * 0.0
    fs = P.extract_features(ds)
    assert fs.features[1] is None and fs.features[0] is not None
    assert [e.index for e in fs.errors] == [1]
    assert len(fs.matrix()[0]) == 2
    ev = P.evaluate(model.model, ds)
    assert ev.matrix.total == 2 and len(ev.errors) == 1


def test_parallel_extraction_matches_serial():
    ds = make_dataset(GeneratorConfig(per_class_count=4, master_seed=6))
    a = P.extract_features(ds, workers=1)
    b = P.extract_features(ds, workers=2)
    assert a.features == b.features


def test_worker_count(monkeypatch):
    monkeypatch.setenv(P.THREADS_ENV, "3")
    assert P.worker_count() == 3
    assert P.worker_count(2) == 2
    monkeypatch.setenv(P.THREADS_ENV, "")
    assert P.worker_count() == 1
    monkeypatch.setenv(P.THREADS_ENV, "many")
    with pytest.raises(P.ConfigurationError):
        P.worker_count()


# ---------------------------------------------------------------- confusion matrix

def test_confusion_matrix_accounting():
    y = [0, 0, 1, 1, 1, 2]
    p = [0, 1, 1, 1, 2, 2]
    cm = P.ConfusionMatrix.from_labels(y, p, classes=(0, 1, 2))
    assert cm.counts.tolist() == [[1, 1, 0], [0, 2, 1], [0, 0, 1]]
    assert cm.total == 6
    assert cm.overall == pytest.approx(100 * 4 / 6)
    assert cm.per_class() == {0: 50.0, 1: pytest.approx(200 / 3), 2: 100.0}
    assert cm.top_confusions(2) == [((0, 1), 1), ((1, 2), 1)]
    both = cm + cm
    assert both.counts.sum() == 12 and both.overall == cm.overall
    lines = cm.to_csv().splitlines()
    assert lines[0] == "true\\pred,C0,C1,C2,n,accuracy_pct"
    assert lines[1] == "C0,1,1,0,2,50.00"
    assert lines[-1].startswith("overall")
    assert "overall" in cm.format()
    assert cm.to_dict()["counts"] == cm.counts.tolist()


def test_single_class_test_set_fills_one_row(small):
    model, test = small
    idx = [i for i, lab in enumerate(test.labels) if lab == ClassLabel.FLICKER]
    cm = P.evaluate(model.model, test.subset(idx)).matrix
    assert np.count_nonzero(cm.counts.sum(1)) == 1
    assert cm.counts[4].sum() == len(idx)


def test_evaluate_conservation_and_determinism(small, tmp_path):
    model, test = small
    ev = P.evaluate(model.model, test)
    assert ev.matrix.total == len(test)
    assert ev.matrix.counts.sum(1).tolist() == [10] * 10
    model.model.save(tmp_path / "m.json")
    again = P.evaluate(SvmModel.load(tmp_path / "m.json"), test)
    assert np.array_equal(again.matrix.counts, ev.matrix.counts)


def test_class_mismatch_is_configuration_error(small):
    _, test = small
    sub = test.subset(range(30))
    X, y = P.extract_features(sub).matrix()
    partial = P.train(P.FeatureSet(list(P.extract_features(sub).features), list(y)), grid=False).model
    assert partial.classes == (0, 1, 2)
    with pytest.raises(P.ConfigurationError):
        P.evaluate(partial, test)


def test_separable_train_equals_test():
    cfg = GeneratorConfig(per_class_count=20, master_seed=5, classes=(0, 2, 3, 4, 6, 9))
    ds = make_dataset(cfg)
    res = P.train(ds)
    assert P.evaluate(res.model, ds).matrix.overall >= 99.0
    assert res.grid is not None and len(res.model.meta["grid"]) == 15


# ---------------------------------------------------------------- noise sweep

def test_renoise_calibrated_and_seeded(small):
    _, test = small
    sub = test.subset(range(0, 100, 10))
    a = P.renoise(sub, 36.0, seed=1)
    for clean, noisy in zip(sub.waveforms, a.waveforms):
        noise = noisy.samples - clean.samples
        assert 10 * math.log10(clean.power() / np.mean(noise**2)) == pytest.approx(36.0, abs=0.1)
    b = P.renoise(sub, 36.0, seed=1)
    c = P.renoise(sub, 36.0, seed=2)
    assert a.waveforms[0] == b.waveforms[0] and a.waveforms[0] != c.waveforms[0]
    assert len({s.seed for s in a.specs}) == len(sub)


def test_noise_sweep_rows(small):
    model, test = small
    sub = test.subset(range(0, 100, 5))
    res = P.noise_sweep(model.model, sub, [50, 30, 40, 34], seed=3)
    assert [r.snr_db for r in res.rows] == [30.0, 34.0, 40.0, 50.0]
    assert all(0 <= r.overall <= 100 and r.matrix.total == len(sub) for r in res.rows)
    assert len({r.seed for r in res.rows}) == 4
    lines = res.to_csv().splitlines()
    assert len(lines) == 5 and lines[0].startswith("snr_db,overall_pct,C0_pct")
    with pytest.raises(ValueError):
        P.NoiseSweepResult(list(reversed(res.rows)))
    with pytest.raises(ValueError):
        P.noise_sweep(model.model, sub, [])
