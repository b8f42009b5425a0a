"""Dataset -> features -> SVM -> confusion matrix, and the noise sweep."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import svm
from .indices import FeatureVector, analyze
from .siggen import ClassLabel, GeneratorConfig, LabeledDataset, SnrPolicy, make_dataset, synthesize
from .waveform import DegenerateSignalError, ParameterError, Waveform

log = logging.getLogger(__name__)

THREADS_ENV = "PQGDR_THREADS"


class ConfigurationError(ValueError):
    pass


def worker_count(requested: int | None = None) -> int:
    """``requested`` if given, else ``$PQGDR_THREADS``, else 1."""
    if requested is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        try:
            requested = int(env) if env else 1
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV}={env!r} is not an integer") from None
    return max(1, int(requested))


# ---------------------------------------------------------------- features

@dataclass
class ItemError:
    index: int
    label: int
    message: str


@dataclass
class FeatureSet:
    """Per-item features in dataset order; failed items hold ``None``."""

    features: list[FeatureVector | None]
    labels: list[int]
    errors: list[ItemError] = field(default_factory=list)
    records: list[dict | None] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.features)

    def pairs(self) -> list[tuple[FeatureVector, ClassLabel]]:
        return [(f, ClassLabel(lab)) for f, lab in zip(self.features, self.labels) if f is not None]

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        ok = [i for i, f in enumerate(self.features) if f is not None]
        X = np.array([self.features[i].as_array() for i in ok]).reshape(-1, 2)
        return X, np.array([self.labels[i] for i in ok], dtype=int)


def _analyze_one(w: Waveform):
    try:
        a = analyze(w)
        return a.feature, a.record(), None
    except (DegenerateSignalError, ParameterError, ValueError) as exc:
        return None, None, f"{type(exc).__name__}: {exc}"


def _map(fn, items, workers: int, chunk: int = 16):
    if workers <= 1 or len(items) < 2 * chunk:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def extract_features(ds: LabeledDataset, workers: int | None = None) -> FeatureSet:
    """One feature vector per waveform, order preserved.

    A window that cannot be analysed is recorded in ``errors`` and leaves a
    ``None`` in place; the batch carries on.
    """
    if len(ds) == 0:
        raise ValueError("dataset is empty")
    out = _map(_analyze_one, list(ds.waveforms), worker_count(workers))
    feats, recs, errors = [], [], []
    for i, ((f, rec, err), lab) in enumerate(zip(out, ds.labels)):
        feats.append(f)
        recs.append(rec)
        if err is not None:
            errors.append(ItemError(i, int(lab), err))
            log.warning("item %d (%s): %s", i, ClassLabel(lab).code, err)
    return FeatureSet(feats, [int(lab) for lab in ds.labels], errors, recs)


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    model: svm.SvmModel
    grid: svm.GridResult | None
    errors: list[ItemError]


def train(ds: LabeledDataset | FeatureSet, params: svm.SvmParams | None = None,
          grid: bool = True, seed: int = 0, workers: int | None = None) -> TrainResult:
    """Fit the one-vs-one model; with ``grid`` the (gamma, C) pair is chosen
    on a validation split first and the final model is refit on everything."""
    fs = ds if isinstance(ds, FeatureSet) else extract_features(ds, workers)
    X, y = fs.matrix()
    if len(X) == 0:
        raise ValueError("no usable training features")
    g = None
    if grid:
        g = svm.grid_search(X, y, base=params, seed=seed)
        params = g.params
    model = svm.fit(X, y, params)
    model.meta = {"train_items": int(len(X)), "feature_errors": len(fs.errors)}
    if g is not None:
        model.meta["grid"] = [list(s) for s in g.scores]
    return TrainResult(model, g, fs.errors)


# ---------------------------------------------------------------- evaluation

@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predictions."""

    counts: np.ndarray
    classes: tuple[int, ...] = tuple(int(c) for c in ClassLabel)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=int)
        k = len(self.classes)
        if self.counts.shape != (k, k):
            raise ValueError(f"counts must be {k}x{k}")

    @classmethod
    def from_labels(cls, y_true, y_pred, classes=None) -> "ConfusionMatrix":
        classes = tuple(classes) if classes is not None else tuple(int(c) for c in ClassLabel)
        idx = {c: i for i, c in enumerate(classes)}
        m = np.zeros((len(classes), len(classes)), dtype=int)
        for t, p in zip(y_true, y_pred):
            m[idx[int(t)], idx[int(p)]] += 1
        return cls(m, classes)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def overall(self) -> float:
        return 100.0 * np.trace(self.counts) / self.total if self.total else float("nan")

    def per_class(self) -> dict[int, float]:
        rows = self.counts.sum(axis=1)
        return {c: (100.0 * self.counts[i, i] / rows[i] if rows[i] else float("nan"))
                for i, c in enumerate(self.classes)}

    def top_confusions(self, n: int = 2) -> list[tuple[tuple[int, int], int]]:
        """Off-diagonal cells aggregated symmetrically, largest first (ties by class order)."""
        s = self.counts + self.counts.T
        k = len(self.classes)
        cells = [((self.classes[i], self.classes[j]), int(s[i, j]))
                 for i in range(k) for j in range(i + 1, k)]
        cells.sort(key=lambda c: -c[1])
        return cells[:n]

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.classes != other.classes:
            raise ValueError("class sets differ")
        return ConfusionMatrix(self.counts + other.counts, self.classes)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        codes = [ClassLabel(c).code for c in self.classes]
        wr.writerow(["true\\pred", *codes, "n", "accuracy_pct"])
        acc = self.per_class()
        for i, c in enumerate(self.classes):
            row = self.counts[i]
            wr.writerow([codes[i], *row.tolist(), int(row.sum()), f"{acc[c]:.2f}"])
        wr.writerow(["overall", *[""] * len(codes), self.total, f"{self.overall:.2f}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "classes": [ClassLabel(c).code for c in self.classes],
            "counts": self.counts.tolist(),
            "per_class_accuracy": {ClassLabel(c).code: v for c, v in self.per_class().items()},
            "overall_accuracy": self.overall,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def format(self) -> str:
        codes = [ClassLabel(c).code for c in self.classes]
        head = "      " + "".join(f"{c:>5}" for c in codes) + "    acc%"
        lines = [head]
        acc = self.per_class()
        for i, c in enumerate(self.classes):
            lines.append(f"{codes[i]:>5} " + "".join(f"{v:5d}" for v in self.counts[i]) + f"  {acc[c]:6.1f}")
        lines.append(f"overall {self.overall:.1f}% of {self.total}")
        return "\n".join(lines)


@dataclass
class Evaluation:
    matrix: ConfusionMatrix
    errors: list[ItemError]
    predictions: np.ndarray


def _check_classes(model: svm.SvmModel, labels) -> None:
    unknown = sorted(set(int(x) for x in labels) - set(model.classes))
    if unknown:
        raise ConfigurationError(
            f"test classes {[ClassLabel(c).code for c in unknown]} are not in the model's class set")


def evaluate(model: svm.SvmModel, test: LabeledDataset | FeatureSet, workers: int | None = None) -> Evaluation:
    """Confusion matrix of ``model`` on ``test``.

    Items whose features cannot be computed are listed in ``errors`` and left
    out of the matrix.
    """
    fs = test if isinstance(test, FeatureSet) else extract_features(test, workers)
    _check_classes(model, fs.labels)
    X, y = fs.matrix()
    pred = model.predict(X) if len(X) else np.zeros(0, dtype=int)
    cm = ConfusionMatrix.from_labels(y, pred, model.classes)
    return Evaluation(cm, fs.errors, pred)


# ---------------------------------------------------------------- noise sweep

@dataclass
class SweepRow:
    snr_db: float
    overall: float
    per_class: dict[int, float]
    seed: int
    matrix: ConfusionMatrix


@dataclass
class NoiseSweepResult:
    rows: list[SweepRow]

    def __post_init__(self):
        snrs = [r.snr_db for r in self.rows]
        if any(b <= a for a, b in zip(snrs, snrs[1:])):
            raise ValueError("SNR levels must be strictly increasing")

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        classes = self.rows[0].matrix.classes if self.rows else ()
        wr.writerow(["snr_db", "overall_pct", *[f"{ClassLabel(c).code}_pct" for c in classes], "seed"])
        for r in self.rows:
            wr.writerow([f"{r.snr_db:g}", f"{r.overall:.2f}",
                         *[f"{r.per_class[c]:.2f}" for c in classes], r.seed])
        return buf.getvalue()


def renoise(ds: LabeledDataset, snr_db: float, seed: int) -> LabeledDataset:
    """The same signals with fresh noise at ``snr_db``; per-item noise seeds
    come from (seed, snr level, item index)."""
    specs = []
    for i, spec in enumerate(ds.specs):
        ss = np.random.SeedSequence([int(seed), int(round(snr_db * 1000)), i])
        item = int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
        specs.append(spec.replace(noise_snr_db=float(snr_db), seed=item))
    return LabeledDataset([synthesize(s) for s in specs], list(ds.labels), specs, ds.config)


def noise_sweep(model: svm.SvmModel, base_test: LabeledDataset, snrs, seed: int = 0,
                workers: int | None = None) -> NoiseSweepResult:
    snrs = sorted(set(float(s) for s in snrs))
    if not snrs:
        raise ValueError("need at least one SNR level")
    _check_classes(model, base_test.labels)
    rows = []
    for k, snr in enumerate(snrs):
        level_seed = int(seed) * 1000 + k
        ev = evaluate(model, renoise(base_test, snr, level_seed), workers)
        rows.append(SweepRow(snr, ev.matrix.overall, ev.matrix.per_class(), level_seed, ev.matrix))
    return NoiseSweepResult(rows)


# ---------------------------------------------------------------- recipe

MIXED = SnrPolicy(clean_fraction=0.5, snr_range=(34.0, 50.0))
CLEAN = SnrPolicy(clean_fraction=1.0, snr_range=(34.0, 50.0))


@dataclass
class RecipeResult:
    train: TrainResult
    evaluation: Evaluation
    train_config: GeneratorConfig
    test_config: GeneratorConfig


def recipe(per_class: int = 100, train_seed: int = 1, test_seed: int = 2,
           train_snr: SnrPolicy = MIXED, test_snr: SnrPolicy = MIXED,
           preset: str = "zoned", params: svm.SvmParams | None = None, grid: bool = True,
           workers: int | None = None) -> RecipeResult:
    """Generate disjoint train/test sets, train, evaluate."""
    tr_cfg = GeneratorConfig.preset(preset, per_class_count=per_class, master_seed=train_seed, snr=train_snr)
    te_cfg = GeneratorConfig.preset(preset, per_class_count=per_class, master_seed=test_seed, snr=test_snr)
    tr = train(make_dataset(tr_cfg), params, grid=grid, workers=workers)
    ev = evaluate(tr.model, make_dataset(te_cfg), workers)
    return RecipeResult(tr, ev, tr_cfg, te_cfg)
