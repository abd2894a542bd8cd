"""Model training, holdout/k-fold evaluation, confusion metrics and ROC/AUC.

Labels are 1 for the positive (patient) class and 0 for controls.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import svm
from .errors import InvalidSpecError
from .trees import BaggedTrees, DecisionTree


class ModelKind(str, Enum):
    SVM_FINE = "SvmGaussianFine"
    SVM_COARSE = "SvmGaussianCoarse"
    BAGGED_TREES = "BaggedTrees"


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind = ModelKind.SVM_FINE
    box_c: float = 1.0
    n_trees: int = 30
    seed: int = 0
    smo_tol: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.box_c <= 0:
            raise InvalidSpecError("box_c must be > 0")
        if self.n_trees < 1:
            raise InvalidSpecError("n_trees must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


@dataclass
class Standardizer:
    """Median imputation of missing values followed by z-scoring."""

    mean: np.ndarray
    sd: np.ndarray
    keep: np.ndarray  # column indices with nonzero training sd
    fill: np.ndarray | None = None  # training medians used for NaN entries

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        fill = np.zeros(X.shape[1])
        for j in range(X.shape[1]):
            ok = np.isfinite(X[:, j])
            if ok.any():
                fill[j] = np.median(X[ok, j])
        X = np.where(np.isfinite(X), X, fill)
        mean = X.mean(axis=0)
        sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
        keep = np.flatnonzero(sd > 1e-12 * np.maximum(1.0, np.abs(mean)))
        return cls(mean, sd, keep, fill)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.fill is not None:
            X = np.where(np.isfinite(X), X, self.fill)
        return (X[:, self.keep] - self.mean[self.keep]) / self.sd[self.keep]


@dataclass
class TrainedClassifier:
    kind: ModelKind
    feature_names: list[str]
    scaler: Standardizer
    dropped: list[str] = field(default_factory=list)
    # SVM
    kernel_scale: float | None = None
    support_vectors: np.ndarray | None = None
    dual_coef: np.ndarray | None = None  # alpha_i * y_i for support vectors
    bias: float = 0.0
    solver: dict = field(default_factory=dict)
    # bagging
    ensemble: BaggedTrees | None = None

    @property
    def threshold(self) -> float:
        return 0.5 if self.kind is ModelKind.BAGGED_TREES else 0.0

    def decision_scores(self, X) -> np.ndarray:
        Z = self.scaler.transform(np.asarray(X, dtype=float))
        if self.kind is ModelKind.BAGGED_TREES:
            return self.ensemble.score(Z)
        if self.support_vectors.shape[0] == 0:
            return np.full(Z.shape[0], self.bias)
        K = svm.gaussian_kernel(Z, self.support_vectors, self.kernel_scale)
        return K @ self.dual_coef + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.decision_scores(X) > self.threshold).astype(int)

    def to_json(self) -> dict:
        d = {"kind": self.kind.value, "feature_names": self.feature_names,
             "standardization": {"mean": self.scaler.mean.tolist(), "sd": self.scaler.sd.tolist(),
                                 "keep": self.scaler.keep.tolist(),
                                 "fill": None if self.scaler.fill is None else self.scaler.fill.tolist()},
             "dropped_features": self.dropped}
        if self.kind is ModelKind.BAGGED_TREES:
            d["n_trees"] = self.ensemble.n_trees
            d["seed"] = self.ensemble.seed
            d["trees"] = [t.to_json() for t in self.ensemble.trees]
        else:
            d.update(kernel_scale=self.kernel_scale, support_vectors=self.support_vectors.tolist(),
                     dual_coef=self.dual_coef.tolist(), bias=self.bias, solver=self.solver)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TrainedClassifier":
        st = d["standardization"]
        fill = st.get("fill")
        scaler = Standardizer(np.array(st["mean"], dtype=float), np.array(st["sd"], dtype=float),
                              np.array(st["keep"], dtype=int),
                              None if fill is None else np.array(fill, dtype=float))
        kind = ModelKind(d["kind"])
        m = cls(kind, list(d["feature_names"]), scaler, list(d.get("dropped_features", [])))
        if kind is ModelKind.BAGGED_TREES:
            m.ensemble = BaggedTrees(d["n_trees"], d["seed"])
            m.ensemble.trees = [DecisionTree.from_json(t) for t in d["trees"]]
        else:
            m.kernel_scale = float(d["kernel_scale"])
            m.support_vectors = np.array(d["support_vectors"], dtype=float).reshape(-1, scaler.keep.size)
            m.dual_coef = np.array(d["dual_coef"], dtype=float)
            m.bias = float(d["bias"])
            m.solver = dict(d.get("solver", {}))
        return m

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "TrainedClassifier":
        return cls.from_json(json.loads(Path(path).read_text()))


def _check_labels(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y).astype(int)
    if not set(np.unique(y)) <= {0, 1}:
        raise ValueError("labels must be 0/1")
    return y


def _names(names, d):
    return list(names) if names is not None else [f"x{j}" for j in range(d)]


def train_svm_gaussian(X, y, preset: str = svm.FINE, box_c: float = 1.0,
                       feature_names=None, tol: float = 1e-3) -> TrainedClassifier:
    X = np.asarray(X, dtype=float)
    y = _check_labels(y)
    if np.unique(y).size < 2:
        raise ValueError("SVM training needs both classes")
    names = _names(feature_names, X.shape[1])
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    d = max(1, Z.shape[1])
    scale = svm.kernel_scale(preset, d)
    ys = np.where(y == 1, 1.0, -1.0)
    K = svm.gaussian_kernel(Z, Z, scale)
    res = svm.smo_solve(K, ys, box_c, tol=tol)
    sv = res.alpha > 0
    dropped = [names[j] for j in range(len(names)) if j not in set(scaler.keep.tolist())]
    kind = ModelKind.SVM_FINE if preset == svm.FINE else ModelKind.SVM_COARSE
    return TrainedClassifier(kind, names, scaler, dropped, kernel_scale=scale,
                             support_vectors=Z[sv], dual_coef=(res.alpha * ys)[sv], bias=res.b,
                             solver={"iterations": res.iterations, "kkt_gap": res.kkt_gap,
                                     "tol": tol, "box_c": box_c})


def train_bagged_trees(X, y, n_trees: int = 30, seed: int = 0, feature_names=None) -> TrainedClassifier:
    X = np.asarray(X, dtype=float)
    y = _check_labels(y)
    names = _names(feature_names, X.shape[1])
    scaler = Standardizer.fit(X)
    ens = BaggedTrees(n_trees, seed).fit(scaler.transform(X), y)
    dropped = [names[j] for j in range(len(names)) if j not in set(scaler.keep.tolist())]
    return TrainedClassifier(ModelKind.BAGGED_TREES, names, scaler, dropped, ensemble=ens)


def train(X, y, spec: ModelSpec, feature_names=None, seed: int | None = None) -> TrainedClassifier:
    if spec.kind is ModelKind.BAGGED_TREES:
        return train_bagged_trees(X, y, spec.n_trees, spec.seed if seed is None else seed, feature_names)
    preset = svm.FINE if spec.kind is ModelKind.SVM_FINE else svm.COARSE
    return train_svm_gaussian(X, y, preset, spec.box_c, feature_names, spec.smo_tol)


def split_holdout(labels, fraction: float = 0.8, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/validation index split."""
    y = _check_labels(labels)
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie strictly between 0 and 1, got {fraction}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B1]))
    train, valid = [], []
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        if idx.size < 2:
            raise ValueError(f"class {c} has {idx.size} members; need >= 2")
        idx = rng.permutation(idx)
        k = int(np.floor(fraction * idx.size + 0.5))
        k = min(max(k, 1), idx.size - 1)
        train.append(idx[:k])
        valid.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(valid))


def stratified_folds(labels, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Disjoint, class-balanced test folds covering every index once."""
    y = _check_labels(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D]))
    folds = [[] for _ in range(k)]
    offset = 0
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        if idx.size < k:
            raise ValueError(f"class {c} has {idx.size} members, fewer than k={k}")
        for pos, i in enumerate(rng.permutation(idx)):
            folds[(pos + offset) % k].append(int(i))
        offset += idx.size % k
    return [np.sort(np.array(f, dtype=int)) for f in folds]


def roc_auc(scores, labels) -> tuple[list[tuple[float, float]], float]:
    """ROC points over all unique thresholds and trapezoidal AUC."""
    s = np.asarray(scores, dtype=float)
    y = _check_labels(labels)
    n_pos, n_neg = int((y == 1).sum()), int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each run of tied scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y == 1)[ends]
    fp = np.cumsum(y == 0)[ends]
    fpr = np.r_[0.0, fp / n_neg]
    tpr = np.r_[0.0, tp / n_pos]
    # trapezoid area on integer counts, divided once so ties give exact half credit
    tp0, fp0 = np.r_[0, tp], np.r_[0, fp]
    area = int(np.sum(np.diff(fp0) * (tp0[1:] + tp0[:-1])))
    auc = area / (2 * n_pos * n_neg)
    return list(zip(fpr.tolist(), tpr.tolist())), auc


@dataclass
class EvalReport:
    confusion: dict  # tp, fn, fp, tn
    sensitivity: float
    specificity: float
    accuracy: float
    roc_points: list
    auc_per_fold: list
    auc_mean: float
    model: dict = field(default_factory=dict)
    features: list = field(default_factory=list)

    @classmethod
    def from_predictions(cls, y_true, y_pred, **kw) -> "EvalReport":
        y_true = _check_labels(y_true)
        y_pred = _check_labels(y_pred)
        tp = int(np.sum((y_true == 1) & (y_pred == 1)))
        fn = int(np.sum((y_true == 1) & (y_pred == 0)))
        fp = int(np.sum((y_true == 0) & (y_pred == 1)))
        tn = int(np.sum((y_true == 0) & (y_pred == 0)))
        return cls({"tp": tp, "fn": fn, "fp": fp, "tn": tn},
                   tp / (tp + fn) if tp + fn else 0.0,
                   tn / (tn + fp) if tn + fp else 0.0,
                   (tp + tn) / y_true.size, **kw)

    def to_json(self) -> dict:
        return asdict(self)


def cross_validate(X, y, spec: ModelSpec, k: int = 5, seed: int = 0, feature_names=None) -> EvalReport:
    """Stratified k-fold CV; standardisation and fitting happen inside each fold."""
    X = np.asarray(X, dtype=float)
    y = _check_labels(y)
    folds = stratified_folds(y, k, seed)
    pred = np.zeros(y.size, dtype=int)
    scores = np.zeros(y.size)
    aucs = []
    for f, test in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(y.size), test)
        model = train(X[train_idx], y[train_idx], spec, feature_names,
                      seed=int(np.random.SeedSequence([spec.seed, seed, f]).generate_state(1)[0]))
        s = model.decision_scores(X[test])
        scores[test] = s
        pred[test] = (s > model.threshold).astype(int)
        if np.unique(y[test]).size == 2:
            aucs.append(roc_auc(s, y[test])[1])
    roc_points, _ = roc_auc(scores, y)
    return EvalReport.from_predictions(
        y, pred, roc_points=roc_points, auc_per_fold=aucs,
        auc_mean=float(np.mean(aucs)) if aucs else float("nan"),
        model=spec.to_json(), features=_names(feature_names, X.shape[1]))


def evaluate(model: TrainedClassifier, X, y) -> EvalReport:
    y = _check_labels(y)
    s = model.decision_scores(X)
    pts, auc = roc_auc(s, y) if np.unique(y).size == 2 else ([], float("nan"))
    return EvalReport.from_predictions(y, (s > model.threshold).astype(int), roc_points=pts,
                                       auc_per_fold=[auc], auc_mean=auc,
                                       features=model.feature_names)
