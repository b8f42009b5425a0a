"""Soft-margin SVM trained by sequential minimal optimisation, one-vs-one.

Binary machines follow Platt's SMO with a fully deterministic working-set
choice: the outer loop sweeps examples in index order (alternating full
sweeps and non-bound sweeps), the second index maximises |E1 - E2| with ties
going to the lowest index. The kernel matrix is precomputed; at a few
hundred points per machine that is cheaper than caching.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .waveform import ParameterError

FORMAT = "pqgdr-svm"
FORMAT_VERSION = 1

GAMMA_GRID = (0.1, 0.5, 1.0, 2.0, 5.0)
C_GRID = (1.0, 10.0, 100.0)


class TrainingError(ValueError):
    pass


class DataError(ValueError):
    """Non-finite or malformed feature input."""


class ModelLoadError(ValueError):
    pass


# ---------------------------------------------------------------- scaling

@dataclass(frozen=True)
class FeatureScaler:
    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "FeatureScaler":
        X = _finite_2d(X)
        scale = X.std(axis=0)
        # a constant column carries no information; leave it unscaled
        scale = np.where(scale > 0, scale, 1.0)
        return cls(X.mean(axis=0), scale)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.shift) / self.scale

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.shift

    def to_dict(self) -> dict:
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d) -> "FeatureScaler":
        scale = np.asarray(d["scale"], dtype=float)
        if np.any(scale <= 0):
            raise ModelLoadError("scaler scale must be positive")
        return cls(np.asarray(d["shift"], dtype=float), scale)


def _finite_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DataError(f"expected a 2-D feature array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
        raise DataError(f"non-finite features in rows {bad[:10].tolist()}")
    return X


# ---------------------------------------------------------------- kernels

@dataclass(frozen=True)
class Kernel:
    name: str = "rbf"
    gamma: float = 1.0

    def __post_init__(self):
        if self.name not in ("rbf", "linear"):
            raise ParameterError("kernel", f"unknown kernel {self.name!r}")
        if self.name == "rbf" and not self.gamma > 0:
            raise ParameterError("gamma", f"must be positive, got {self.gamma}")

    def __call__(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        if self.name == "linear":
            return A @ B.T
        d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        return np.exp(-self.gamma * np.maximum(d2, 0.0))

    def to_dict(self) -> dict:
        return {"name": self.name, "gamma": self.gamma}


@dataclass(frozen=True)
class SvmParams:
    C: float = 10.0
    kernel: str = "rbf"
    gamma: float = 1.0
    tol: float = 1e-3
    max_passes: int = 50

    def __post_init__(self):
        if not self.C > 0:
            raise ParameterError("C", f"must be positive, got {self.C}")
        if not self.tol > 0:
            raise ParameterError("tol", f"must be positive, got {self.tol}")
        if int(self.max_passes) < 1:
            raise ParameterError("max_passes", "must be >= 1")
        Kernel(self.kernel, self.gamma)

    def make_kernel(self) -> Kernel:
        return Kernel(self.kernel, self.gamma)

    def to_dict(self) -> dict:
        return {"C": self.C, "kernel": self.kernel, "gamma": self.gamma,
                "tol": self.tol, "max_passes": self.max_passes}


# ---------------------------------------------------------------- SMO

@dataclass
class SmoResult:
    alpha: np.ndarray
    b: float
    C: float
    passes: int
    steps: int
    converged: bool


class _Smo:
    """Platt's SMO on a precomputed kernel matrix. f(x) = sum a_i y_i K_i(x) + b."""

    def __init__(self, K: np.ndarray, y: np.ndarray, C: float, tol: float, eps: float = 1e-10):
        self.K = K
        self.y = y
        self.C = C
        self.tol = tol
        self.eps = eps
        n = len(y)
        self.alpha = np.zeros(n)
        self.b = 0.0
        self.f = np.zeros(n)  # decision values without bias
        self.steps = 0

    def error(self, i):
        return self.f[i] + self.b - self.y[i]

    def errors(self):
        return self.f + self.b - self.y

    def _bound(self, a):
        return (a <= 0.0) | (a >= self.C)

    def take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        K, y, C = self.K, self.y, self.C
        a1, a2 = self.alpha[i1], self.alpha[i2]
        y1, y2 = y[i1], y[i2]
        E1, E2 = self.error(i1), self.error(i2)
        s = y1 * y2
        if s < 0:
            L, H = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            L, H = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        if H - L <= 0:
            return False
        k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            new2 = min(max(a2 + y2 * (E1 - E2) / eta, L), H)
        else:
            # objective is linear along the constraint line; take the better end
            f1 = y1 * (E1 - self.b) - a1 * k11 - s * a2 * k12
            f2 = y2 * (E2 - self.b) - s * a1 * k12 - a2 * k22
            L1, H1 = a1 + s * (a2 - L), a1 + s * (a2 - H)
            obj_L = L1 * f1 + L * f2 + 0.5 * L1 * L1 * k11 + 0.5 * L * L * k22 + s * L * L1 * k12
            obj_H = H1 * f1 + H * f2 + 0.5 * H1 * H1 * k11 + 0.5 * H * H * k22 + s * H * H1 * k12
            if obj_L < obj_H - self.eps:
                new2 = L
            elif obj_L > obj_H + self.eps:
                new2 = H
            else:
                new2 = a2
        if abs(new2 - a2) < self.eps * (new2 + a2 + self.eps):
            return False
        new1 = a1 + s * (a2 - new2)
        # snap to the box so bound tests stay exact
        if new1 < self.eps * C:
            new1 = 0.0
        elif new1 > C * (1 - self.eps):
            new1 = C
        if new2 < self.eps * C:
            new2 = 0.0
        elif new2 > C * (1 - self.eps):
            new2 = C
        d1, d2 = y1 * (new1 - a1), y2 * (new2 - a2)
        b1 = self.b - E1 - d1 * k11 - d2 * k12
        b2 = self.b - E2 - d1 * k12 - d2 * k22
        if 0 < new1 < C:
            b = b1
        elif 0 < new2 < C:
            b = b2
        else:
            b = 0.5 * (b1 + b2)
        self.f += d1 * K[i1] + d2 * K[i2]
        self.alpha[i1], self.alpha[i2] = new1, new2
        self.b = b
        self.steps += 1
        return True

    def violates(self, i: int) -> bool:
        r = self.error(i) * self.y[i]
        a = self.alpha[i]
        return (r < -self.tol and a < self.C) or (r > self.tol and a > 0)

    def examine(self, i2: int) -> bool:
        if not self.violates(i2):
            return False
        free = np.flatnonzero(~self._bound(self.alpha))
        if len(free) > 1:
            gap = np.abs(self.errors()[free] - self.error(i2))
            i1 = int(free[np.argmax(gap)])
            if self.take_step(i1, i2):
                return True
        for i1 in free:
            if self.take_step(int(i1), i2):
                return True
        for i1 in range(len(self.y)):
            if self.take_step(i1, i2):
                return True
        return False

    def run(self, max_passes: int, max_steps: int) -> SmoResult:
        passes = 0
        converged = False
        while passes < max_passes and self.steps < max_steps:
            changed = sum(self.examine(i) for i in range(len(self.y)))
            passes += 1
            if changed == 0:
                converged = True
                break
            # settle the non-bound examples before the next full sweep
            while changed and self.steps < max_steps:
                free = np.flatnonzero(~self._bound(self.alpha)).tolist()
                changed = sum(self.examine(i) for i in free)
        self._settle_bias()
        return SmoResult(self.alpha, self.b, self.C, passes, self.steps, converged)

    def _settle_bias(self) -> None:
        """With every multiplier at a bound the step rule's average need not
        satisfy the KKT conditions; move b to the middle of the feasible range."""
        a, y = self.alpha, self.y
        if np.any(~self._bound(a)):
            return
        r = y - self.f
        up = ((y > 0) & (a <= 0)) | ((y < 0) & (a >= self.C))
        lo_b = r[up].max() if up.any() else -np.inf
        hi_b = r[~up].min() if (~up).any() else np.inf
        if lo_b > hi_b or lo_b <= self.b <= hi_b:
            return
        self.b = float(0.5 * (lo_b + hi_b) if np.isfinite(lo_b + hi_b) else np.clip(self.b, lo_b, hi_b))


def smo(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3, max_passes: int = 50,
        max_steps: int = 200_000) -> SmoResult:
    """Solve the soft-margin dual for labels ``y`` in {-1, +1}.

    ``max_passes`` caps the number of full sweeps; between two full sweeps
    the non-bound examples are swept until none changes. A run that ends on
    a violation-free full sweep reports ``converged``.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise TrainingError("binary labels must be -1 or +1")
    if len(np.unique(y)) < 2:
        raise TrainingError("binary training needs both labels present")
    return _Smo(np.asarray(K, dtype=float), y, float(C), float(tol)).run(int(max_passes), int(max_steps))


# ---------------------------------------------------------------- machines

@dataclass
class BinarySvm:
    """Decision f(z) > 0 votes for ``pair[0]``, otherwise ``pair[1]`` (scaled inputs)."""

    pair: tuple[int, int]
    support: np.ndarray
    coef: np.ndarray  # alpha_i * y_i
    b: float
    kernel: Kernel
    C: float
    converged: bool = True

    @classmethod
    def fit(cls, Z: np.ndarray, y: np.ndarray, pair, params: SvmParams) -> "BinarySvm":
        """``y`` holds +1 for ``pair[0]`` and -1 for ``pair[1]``."""
        kern = params.make_kernel()
        res = smo(kern(Z, Z), y, params.C, params.tol, params.max_passes)
        sv = res.alpha > 0
        return cls((int(pair[0]), int(pair[1])), Z[sv].copy(), (res.alpha * y)[sv], float(res.b),
                   kern, params.C, res.converged)

    def decision(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if len(self.support) == 0:
            return np.full(len(Z), self.b)
        return self.kernel(Z, self.support) @ self.coef + self.b

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "support": self.support.tolist(),
            "coef": self.coef.tolist(),
            "b": self.b,
            "kernel": self.kernel.to_dict(),
            "C": self.C,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d) -> "BinarySvm":
        support = np.asarray(d["support"], dtype=float).reshape(-1, 2) if d["support"] else np.zeros((0, 2))
        coef = np.asarray(d["coef"], dtype=float)
        if len(coef) != len(support):
            raise ModelLoadError(f"machine {d['pair']}: {len(coef)} coefficients for {len(support)} vectors")
        k = d["kernel"]
        return cls(tuple(int(c) for c in d["pair"]), support, coef, float(d["b"]),
                   Kernel(k["name"], float(k["gamma"])), float(d["C"]), bool(d.get("converged", True)))


def kkt_residual(K: np.ndarray, y: np.ndarray, res: SmoResult) -> float:
    """Largest violation of the soft-margin KKT conditions by an SMO solution."""
    y = np.asarray(y, dtype=float)
    m = y * (K @ (res.alpha * y) + res.b)
    return _kkt(m, res.alpha, res.C)


def _kkt(m: np.ndarray, alpha: np.ndarray, C: float) -> float:
    low = alpha <= 0
    high = alpha >= C
    mid = ~low & ~high
    viol = np.zeros(len(m))
    viol[low] = np.maximum(1.0 - m[low], 0.0)
    viol[high] = np.maximum(m[high] - 1.0, 0.0)
    viol[mid] = np.abs(m[mid] - 1.0)
    return float(viol.max()) if len(viol) else 0.0


# ---------------------------------------------------------------- one-vs-one

@dataclass
class Prediction:
    label: int
    votes: dict[int, int]
    margins: dict[int, float]
    tied: bool


@dataclass
class SvmModel:
    classes: tuple[int, ...]
    machines: list[BinarySvm]
    scaler: FeatureScaler
    params: SvmParams
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        k = len(self.classes)
        pairs = [m.pair for m in self.machines]
        expect = list(itertools.combinations(self.classes, 2))
        if sorted(pairs) != sorted(expect):
            raise TrainingError(f"expected {k * (k - 1) // 2} pairwise machines over {self.classes}")

    def predict_detail(self, X) -> list[Prediction]:
        X = _finite_2d(X)
        Z = self.scaler.transform(X)
        n = len(Z)
        idx = {c: i for i, c in enumerate(self.classes)}
        votes = np.zeros((n, len(self.classes)), dtype=int)
        margin = np.zeros((n, len(self.classes)))
        for m in self.machines:
            d = m.decision(Z)
            a, b = idx[m.pair[0]], idx[m.pair[1]]
            win_a = d > 0
            votes[win_a, a] += 1
            votes[~win_a, b] += 1
            margin[win_a, a] += np.abs(d[win_a])
            margin[~win_a, b] += np.abs(d[~win_a])
        out = []
        for v, g in zip(votes, margin):
            top = np.flatnonzero(v == v.max())
            # ties: largest summed |margin| of the winning votes, then lowest class
            best = top[np.argmax(g[top])] if len(top) > 1 else top[0]
            out.append(Prediction(
                self.classes[best],
                {c: int(v[i]) for i, c in enumerate(self.classes)},
                {c: float(g[i]) for i, c in enumerate(self.classes)},
                len(top) > 1,
            ))
        return out

    def predict(self, X) -> np.ndarray:
        return np.array([p.label for p in self.predict_detail(X)], dtype=int)

    def predict_one(self, v) -> int:
        return int(self.predict(np.asarray(v, dtype=float)[None, :])[0])

    # -- persistence

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "classes": list(self.classes),
            "params": self.params.to_dict(),
            "scaler": self.scaler.to_dict(),
            "machines": [m.to_dict() for m in self.machines],
            "meta": self.meta,
        }

    def dumps(self) -> bytes:
        return json.dumps(self.to_dict(), indent=1).encode()

    @classmethod
    def loads(cls, blob: bytes | str) -> "SvmModel":
        try:
            d = json.loads(blob)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ModelLoadError(f"model file is not valid JSON (truncated?): {exc}") from None
        if not isinstance(d, dict) or d.get("format") != FORMAT:
            raise ModelLoadError("not a model file")
        if d.get("version") != FORMAT_VERSION:
            raise ModelLoadError(f"model format version {d.get('version')} != supported {FORMAT_VERSION}")
        try:
            return cls(
                tuple(int(c) for c in d["classes"]),
                [BinarySvm.from_dict(m) for m in d["machines"]],
                FeatureScaler.from_dict(d["scaler"]),
                SvmParams(**d["params"]),
                d.get("meta", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ModelLoadError):
                raise
            raise ModelLoadError(f"malformed model file: {exc!r}") from None

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "SvmModel":
        with open(path, "rb") as fh:
            return cls.loads(fh.read())


def fit(X, y, params: SvmParams | None = None, classes=None) -> SvmModel:
    """Fit the scaler on all of ``X`` and one binary machine per class pair.

    ``classes`` (default: the labels present) fixes the class set; a listed
    class with no examples is an error.
    """
    params = params or SvmParams()
    X = _finite_2d(X)
    y = np.asarray(y, dtype=int)
    if len(X) != len(y):
        raise DataError(f"{len(X)} feature rows for {len(y)} labels")
    present = sorted(set(y.tolist()))
    classes = tuple(sorted(int(c) for c in classes)) if classes is not None else tuple(present)
    missing = [c for c in classes if c not in present]
    if missing:
        raise TrainingError(f"no training examples for class(es) {', '.join(f'C{c}' for c in missing)}")
    if len(classes) < 2:
        raise TrainingError("need at least two classes")
    scaler = FeatureScaler.fit(X)
    Z = scaler.transform(X)
    machines = []
    for a, b in itertools.combinations(classes, 2):
        sel = (y == a) | (y == b)
        machines.append(BinarySvm.fit(Z[sel], np.where(y[sel] == a, 1.0, -1.0), (a, b), params))
    return SvmModel(classes, machines, scaler, params)


# ---------------------------------------------------------------- model selection

def validation_split(y, fraction: float = 0.25, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified split: per class, a ``fraction`` of the items goes to validation."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, val = [], []
    for c in sorted(set(y.tolist())):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        k = int(math.floor(fraction * len(idx)))
        if len(idx) > 1:
            k = min(max(k, 1), len(idx) - 1)
        else:
            k = 0
        val.extend(idx[:k].tolist())
        train.extend(idx[k:].tolist())
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(val, dtype=int))


@dataclass
class GridResult:
    params: SvmParams
    scores: list[tuple[float, float, float]]  # (gamma, C, validation accuracy)


def grid_search(X, y, gammas=GAMMA_GRID, Cs=C_GRID, base: SvmParams | None = None,
                fraction: float = 0.25, seed: int = 0) -> GridResult:
    """Pick (gamma, C) by accuracy on a stratified validation split.

    Ties keep the first grid point in (gamma, C) order. The caller refits on
    the full training set with the returned parameters.
    """
    base = base or SvmParams()
    X = _finite_2d(X)
    y = np.asarray(y, dtype=int)
    tr, va = validation_split(y, fraction, seed)
    if len(va) == 0:
        raise TrainingError("validation split is empty; need at least two examples per class")
    classes = sorted(set(y.tolist()))
    if base.kernel == "linear":
        gammas = (base.gamma,)  # unused by the linear kernel
    scores = []
    best, best_acc = None, -1.0
    for g in gammas:
        for C in Cs:
            p = SvmParams(C=C, kernel=base.kernel, gamma=g, tol=base.tol, max_passes=base.max_passes)
            model = fit(X[tr], y[tr], p, classes)
            acc = float(np.mean(model.predict(X[va]) == y[va]))
            scores.append((g, C, acc))
            if acc > best_acc:
                best, best_acc = p, acc
    return GridResult(best, scores)
