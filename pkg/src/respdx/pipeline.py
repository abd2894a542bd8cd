"""End-to-end orchestration: data -> preprocess -> features -> rank -> models -> causal -> bundle."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import platform
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, causal, changepoint, classifiers, features, rqa, stats, synth
from .dataset_io import read_dataset
from .errors import InvalidSpecError, PipelineError
from .session import BreathSession, TestKind
from .signal import FilterSpec, design_bandpass, filter_zero_phase

DEFAULT_MODELS = {
    TestKind.NORMAL: classifiers.ModelKind.SVM_FINE,
    TestKind.HOLD: classifiers.ModelKind.BAGGED_TREES,
    TestKind.DEEP: classifiers.ModelKind.SVM_COARSE,
}
PARTIAL_SUFFIX = "_partial"
EXECUTION_KEYS = ("out", "workers")


@dataclass(frozen=True)
class ChangePointOptions:
    penalty: float | None = None  # None: 3 ln n
    min_seg_s: float = 5.0
    signal: str = "raw"
    fallback: bool = True

    def __post_init__(self):
        if self.signal not in changepoint.CP_SIGNALS:
            raise InvalidSpecError(f"changepoint.signal must be one of {changepoint.CP_SIGNALS}")
        if self.min_seg_s <= 0:
            raise InvalidSpecError("changepoint.min_seg_s must be > 0")
        if self.penalty is not None and not self.penalty > 0:
            raise InvalidSpecError("changepoint.penalty must be > 0")


@dataclass(frozen=True)
class RankingPolicy:
    alpha: float = 0.05
    min_selected: int = 8

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InvalidSpecError("ranking.alpha must lie in (0, 1)")
        if self.min_selected < 1:
            raise InvalidSpecError("ranking.min_selected must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    dataset: str | None = None
    synth: synth.CohortSpec | None = None
    filter: FilterSpec = field(default_factory=FilterSpec)
    features: features.FeatureOptions = field(default_factory=features.FeatureOptions)
    changepoint: ChangePointOptions = field(default_factory=ChangePointOptions)
    ranking: RankingPolicy = field(default_factory=RankingPolicy)
    models: dict = field(default_factory=dict)  # TestKind -> ModelSpec
    cv_k: int = 5
    holdout_fraction: float = 0.8
    out: str = "out"
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise InvalidSpecError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.dataset is None and self.synth is None:
            object.__setattr__(self, "synth", synth.CohortSpec(seed=self.seed))
        models = {TestKind(k): v for k, v in self.models.items()}
        for kind in TestKind:
            if kind not in models:
                models[kind] = classifiers.ModelSpec(DEFAULT_MODELS[kind], seed=self.seed)
        object.__setattr__(self, "models", models)
        if self.cv_k < 2:
            raise InvalidSpecError("cv_k must be >= 2")
        if not 0 < self.holdout_fraction < 1:
            raise InvalidSpecError("holdout_fraction must lie in (0, 1)")
        if self.workers < 1:
            raise InvalidSpecError("workers must be >= 1")

    def to_json(self) -> dict:
        f = self.features
        return {
            "seed": self.seed,
            "dataset": self.dataset,
            "synth": None if self.synth is None else self.synth.to_json(),
            "filter": dataclasses.asdict(self.filter),
            "features": {"band_hz": list(f.band_hz), "psd": dataclasses.asdict(f.psd),
                         "rqa": dataclasses.asdict(f.rqa), "min_peak_distance_s": f.min_peak_distance_s,
                         "window_after_s": f.window_after_s},
            "changepoint": dataclasses.asdict(self.changepoint),
            "ranking": dataclasses.asdict(self.ranking),
            "models": {k.value: v.to_json() for k, v in self.models.items()},
            "cv_k": self.cv_k,
            "holdout_fraction": self.holdout_fraction,
            "out": self.out,
            "workers": self.workers,
        }

    @classmethod
    def from_json(cls, d: dict, base_dir: str | Path | None = None) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise InvalidSpecError("config must be a JSON object")
        _check_keys(d, cls, "config")
        if "seed" not in d:
            raise InvalidSpecError("config.seed is required")
        kw = dict(d)
        seed = kw["seed"]
        if kw.get("dataset") is not None:
            path = Path(kw["dataset"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            if not path.is_dir():
                raise InvalidSpecError(f"dataset directory {path} does not exist")
            kw["dataset"] = str(path)
        if kw.get("synth") is not None:
            s = dict(kw["synth"])
            _check_keys(s, synth.CohortSpec, "synth")
            s.setdefault("seed", seed)
            kw["synth"] = synth.CohortSpec.from_json(s)
        if "filter" in kw:
            kw["filter"] = _build(FilterSpec, kw["filter"], "filter")
        if "features" in kw:
            fd = dict(kw["features"])
            _check_keys(fd, features.FeatureOptions, "features")
            if "band_hz" in fd:
                fd["band_hz"] = tuple(float(v) for v in fd["band_hz"])
            if "psd" in fd:
                fd["psd"] = _build(features.PsdOptions, fd["psd"], "features.psd")
            if "rqa" in fd:
                fd["rqa"] = _build(rqa.RqaConfig, fd["rqa"], "features.rqa")
            kw["features"] = features.FeatureOptions(**fd)
        if "changepoint" in kw:
            kw["changepoint"] = _build(ChangePointOptions, kw["changepoint"], "changepoint")
        if "ranking" in kw:
            kw["ranking"] = _build(RankingPolicy, kw["ranking"], "ranking")
        if "models" in kw:
            models = {}
            for k, v in kw["models"].items():
                v = dict(v)
                v.setdefault("seed", seed)
                models[TestKind(k)] = _build(classifiers.ModelSpec, v, f"models.{k}")
            kw["models"] = models
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise InvalidSpecError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise InvalidSpecError(f"config file {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise InvalidSpecError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_json(data, base_dir=path.parent)


def _check_keys(d: dict, cls, where: str) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise InvalidSpecError(f"{where}: unknown keys {unknown}")


def _build(cls, d: dict, where: str):
    if not isinstance(d, dict):
        raise InvalidSpecError(f"{where} must be an object")
    _check_keys(d, cls, where)
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise InvalidSpecError(f"{where}: {exc}") from exc


# ---------------------------------------------------------------- per-session work

@dataclass
class SessionResult:
    session_id: str
    participant_id: str
    test_kind: TestKind
    vector: features.FeatureVector
    rqa_params: dict
    changepoint: dict | None
    psd: tuple[np.ndarray, np.ndarray]
    recurrence_pairs: np.ndarray | None = None


def process_session(session: BreathSession, cfg: PipelineConfig, keep_pairs: bool = False) -> SessionResult:
    """Filter, segment and featurise one session. Pure given its inputs."""
    coeffs = design_bandpass(cfg.filter, session.sample_rate)
    sess = dataclasses.replace(session, filtered=filter_zero_phase(session.raw, coeffs))
    cp_json, cp = None, None
    if sess.test_kind.segmented:
        o = cfg.changepoint
        cp = changepoint.detect_primary(sess, o.penalty, o.min_seg_s, o.fallback, on=o.signal)
        cp_json = cp.to_json(sess.sample_rate)
        cp_json["min_seg"] = cp.min_seg
    x = sess.signal()
    rqa_result = rqa.analyze(x, cfg.features.rqa)
    vec = features.extract_vector(sess, cp, cfg.features, rqa_result=rqa_result)
    psd = features.welch_psd(x, cfg.features.psd)
    pairs = rqa.sparse_pairs(rqa_result[1]) if keep_pairs else None
    return SessionResult(sess.session_id, sess.participant_id, sess.test_kind, vec,
                         rqa_result[2], cp_json, psd, pairs)


def _process_star(args):
    return process_session(*args)


# ---------------------------------------------------------------- stages

@dataclass
class KindResult:
    kind: TestKind
    ranking: stats.RankingReport
    cv: classifiers.EvalReport
    holdout: classifiers.EvalReport
    selected: list[str]
    train_ids: list[str]
    valid_ids: list[str]
    model: classifiers.TrainedClassifier


@dataclass
class ReportBundle:
    config: PipelineConfig
    kinds: dict  # TestKind -> KindResult
    sessions: dict  # session_id -> SessionResult
    causal: dict
    participants: list

    def eval_reports(self) -> dict:
        return {k.value: {"cv": r.cv.to_json(), "holdout": r.holdout.to_json()} for k, r in self.kinds.items()}

    def metadata(self) -> dict:
        sessions = {}
        for sid in sorted(self.sessions):
            r = self.sessions[sid]
            sessions[sid] = {"test_kind": r.test_kind.value, "rqa": r.rqa_params, "changepoint": r.changepoint}
        models = {}
        for k, r in self.kinds.items():
            m = r.model
            models[k.value] = {"kind": m.kind.value, "decision_threshold": m.threshold,
                               "kernel_scale": m.kernel_scale, "features": m.feature_names,
                               "dropped_features": m.dropped}
        return {
            "package_version": __version__,
            "numpy_version": np.__version__,
            "scipy_version": scipy.__version__,
            # output location and worker count do not affect results; they live in run_info.json
            "resolved_config": {k: v for k, v in self.config.to_json().items() if k not in EXECUTION_KEYS},
            "defaults": {
                "changepoint_penalty": "3 ln(n) unless configured",
                "rqa_epsilon_policy": f"quantile giving recurrence rate {self.config.features.rqa.target_rate}",
                "rqa_delay_policy": "first autocorrelation minimum" if self.config.features.rqa.delay is None
                else "configured",
                "rqa_theiler_policy": "(m - 1) * delay" if self.config.features.rqa.theiler is None
                else "configured",
                "kernel_scale_policy": {"SvmGaussianFine": "sqrt(d)/4", "SvmGaussianCoarse": "4*sqrt(d)"},
                "decision_thresholds": {"svm": 0.0, "bagged_trees": 0.5},
            },
            "models": models,
            "sessions": sessions,
        }

    def report(self) -> dict:
        kinds = {}
        for k, r in self.kinds.items():
            kinds[k.value] = {"cv": r.cv.to_json(), "holdout": r.holdout.to_json(),
                              "selected_features": r.selected, "n_train": len(r.train_ids),
                              "n_valid": len(r.valid_ids), "train_ids": r.train_ids, "valid_ids": r.valid_ids}
        return {"kinds": kinds, "causal": self.causal, "metadata": self.metadata()}


def load_data(cfg: PipelineConfig) -> synth.Dataset:
    if cfg.dataset is not None:
        return read_dataset(cfg.dataset)
    return synth.generate_cohort(cfg.synth)


def representative_sessions(ds: synth.Dataset) -> set[str]:
    """First participant of each group, for every test kind (recurrence plot export)."""
    firsts = {}
    for p in ds.participants:
        firsts.setdefault(p.group, p.id)
    return {s.session_id for (pid, _), s in ds.sessions.items() if pid in firsts.values()}


def featurise(ds: synth.Dataset, cfg: PipelineConfig) -> dict[str, SessionResult]:
    keys = sorted(ds.sessions, key=lambda k: (k[0], k[1].value))
    reps = representative_sessions(ds)
    jobs = [(ds.sessions[k], cfg, ds.sessions[k].session_id in reps) for k in keys]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_process_star, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    else:
        results = [_process_star(j) for j in jobs]
    return {r.session_id: r for r in results}


def feature_matrix(results: list[SessionResult], names: list[str]) -> np.ndarray:
    X = np.full((len(results), len(names)), np.nan)
    for i, r in enumerate(results):
        for j, n in enumerate(names):
            v = r.vector.features.get(n)
            if v is not None:
                X[i, j] = v
    return X


def kind_results(ds: synth.Dataset, sessions: dict[str, SessionResult], kind: TestKind):
    labels = {p.id: p.label for p in ds.participants}
    rows = sorted((r for r in sessions.values() if r.test_kind is kind), key=lambda r: r.participant_id)
    names = features.feature_names(kind)
    X = feature_matrix(rows, names)
    y = np.array([labels[r.participant_id] for r in rows], dtype=int)
    return rows, names, X, y


def model_stage(rows, names, X, y, kind: TestKind, cfg: PipelineConfig) -> KindResult:
    """80/20 split; KS ranking and k-fold CV on the training part; holdout evaluation."""
    seed = int(np.random.SeedSequence([cfg.seed, list(TestKind).index(kind)]).generate_state(1)[0])
    train_idx, valid_idx = classifiers.split_holdout(y, cfg.holdout_fraction, seed)
    ranking = stats.rank_features(X[train_idx], y[train_idx], names,
                                  cfg.ranking.alpha, cfg.ranking.min_selected)
    selected = ranking.selected
    if not selected:
        raise ValueError(f"no usable features for {kind.value}")
    cols = [names.index(n) for n in selected]
    Xs = X[:, cols]
    spec = cfg.models[kind]
    cv = classifiers.cross_validate(Xs[train_idx], y[train_idx], spec, cfg.cv_k, seed, selected)
    model = classifiers.train(Xs[train_idx], y[train_idx], spec, selected)
    holdout = classifiers.evaluate(model, Xs[valid_idx], y[valid_idx])
    holdout.model = spec.to_json()
    ids = [r.participant_id for r in rows]
    return KindResult(kind, ranking, cv, holdout, selected,
                      [ids[i] for i in train_idx], [ids[i] for i in valid_idx], model)


def causal_stage(ds: synth.Dataset, sessions: dict[str, SessionResult]) -> dict:
    treated = [causal.Covariates(p.id, p.age, p.gender, p.bmi) for p in ds.participants if p.label == 1]
    controls = [causal.Covariates(p.id, p.age, p.gender, p.bmi) for p in ds.participants if p.label == 0]
    if len(controls) < len(treated):
        # 1:1 without replacement needs the larger group on the control side
        treated, controls = controls, treated
        swapped = True
    else:
        swapped = False
    matched = causal.optimal_match(treated, controls)
    by_id = {c.id: c for c in treated + controls}
    pre = causal.balance_table(treated, controls)
    post = causal.balance_table([by_id[a] for a, _ in matched.pairs], [by_id[b] for _, b in matched.pairs])
    effects = {}
    for kind in TestKind:
        per = {}
        rows = [r for r in sessions.values() if r.test_kind is kind]
        for name in features.feature_names(kind):
            values = {r.participant_id: r.vector.features.get(name) for r in rows}
            try:
                eff = causal.ace(matched, values, name)
            except ValueError as exc:
                per[name] = {"ace": None, "acep_percent": None, "t": None, "p": None,
                             "n_pairs": None, "note": str(exc)}
                continue
            d = eff.to_json()
            d.pop("feature")
            if swapped:
                d["ace"] = -d["ace"]
                d["t"] = -d["t"]
                d["note"] = "groups swapped for matching; effect sign restored to treated minus control"
            per[name] = d
        effects[kind.value] = per
    return {
        "pre_smd": {k: v["smd"] for k, v in pre.items()},
        "post_smd": {k: v["smd"] for k, v in post.items()},
        "balance_pre": pre,
        "balance_post": post,
        "pairs": [list(p) for p in matched.pairs],
        "total_distance": matched.total_distance,
        "effects": effects,
    }


# ---------------------------------------------------------------- output

def clean_json(obj):
    """Plain JSON tree: numpy scalars unwrapped, NaN/Inf mapped to null."""
    if isinstance(obj, dict):
        return {str(k): clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean_json(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, TestKind):
        return obj.value
    return obj


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(clean_json(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return v


def write_feature_csv(path: Path, rows: list[SessionResult], names: list[str], labels: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["session_id", "participant", "label", *names])
        for r in rows:
            w.writerow([r.session_id, r.participant_id, labels[r.participant_id],
                        *[_csv_value(r.vector.features.get(n)) for n in names]])


def _write_rows(target, header, rows) -> None:
    """Write CSV rows to a path or an already open text stream."""
    if hasattr(target, "write"):
        w = csv.writer(target)
        w.writerow(header)
        w.writerows(rows)
        return
    with open(target, "w", newline="") as fh:
        _write_rows(fh, header, rows)


def write_ranking_csv(target, report: stats.RankingReport) -> None:
    _write_rows(target, ["name", "D", "p", "rank", "selected"],
                [[r.name, repr(r.ks_statistic), repr(r.p_value), r.rank, int(r.selected)] for r in report.ranked])


def write_eval_csv(target, reports: dict) -> None:
    rows = []
    for name, rep in reports.items():
        c = rep.confusion
        rows.append([name, c["tp"], c["fn"], c["fp"], c["tn"], repr(rep.sensitivity),
                     repr(rep.specificity), repr(rep.accuracy), _csv_value(rep.auc_mean)])
    _write_rows(target, ["report", "tp", "fn", "fp", "tn", "sensitivity", "specificity", "accuracy",
                         "auc_mean"], rows)


def write_bundle(bundle: ReportBundle, out: Path, labels: dict, fmt: str = "json") -> None:
    plots = out / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    for kind, r in bundle.kinds.items():
        k = kind.value
        dump_json(r.ranking.to_json(), out / f"ranking_{k}.json")
        dump_json({"cv": r.cv.to_json(), "holdout": r.holdout.to_json()}, out / f"eval_{k}.json")
        dump_json(r.model.to_json(), out / f"model_{k}.json")
        if fmt == "csv":
            write_ranking_csv(out / f"ranking_{k}.csv", r.ranking)
            write_eval_csv(out / f"eval_{k}.csv", {"cv": r.cv, "holdout": r.holdout})
        with open(plots / f"roc_{k}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["split", "fpr", "tpr"])
            for split, rep in (("cv", r.cv), ("holdout", r.holdout)):
                for fpr, tpr in rep.roc_points:
                    w.writerow([split, repr(float(fpr)), repr(float(tpr))])
        rows = sorted((s for s in bundle.sessions.values() if s.test_kind is kind),
                      key=lambda s: s.participant_id)
        write_feature_csv(plots / f"features_{k}.csv", rows, features.feature_names(kind), labels)
        with open(plots / f"psd_{k}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["session_id", "label", "f_hz", "psd"])
            for s in rows:
                f, p = s.psd
                for fi, pi in zip(f, p):
                    w.writerow([s.session_id, labels[s.participant_id], repr(float(fi)), repr(float(pi))])
    for sid in sorted(bundle.sessions):
        s = bundle.sessions[sid]
        if s.recurrence_pairs is None:
            continue
        with open(plots / f"recurrence_{sid}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j"])
            w.writerows(s.recurrence_pairs.tolist())
    dump_json(bundle.causal, out / "causal.json")
    dump_json(bundle.report(), out / "report.json")


def _finalise_dir(partial: Path, out: Path) -> None:
    if out.exists():
        if not (out / "report.json").exists() and any(out.iterdir()):
            raise PipelineError("report", f"refusing to replace non-bundle directory {out}")
        shutil.rmtree(out)
    partial.rename(out)


def run_pipeline(cfg: PipelineConfig, out: str | Path | None = None, fmt: str = "json") -> ReportBundle:
    """Run every stage; on failure the work so far is left in ``<out>_partial``."""
    out = Path(out if out is not None else cfg.out)
    partial = out.with_name(out.name + PARTIAL_SUFFIX)
    started = time.time()
    stage = "data"
    try:
        ds = load_data(cfg)
        if partial.exists():
            shutil.rmtree(partial)
        partial.mkdir(parents=True)
        labels = {p.id: p.label for p in ds.participants}
        stage = "features"
        sessions = featurise(ds, cfg)
        kinds = {}
        for kind in TestKind:
            rows, names, X, y = kind_results(ds, sessions, kind)
            if not rows:
                continue
            stage = f"model:{kind.value}"
            kinds[kind] = model_stage(rows, names, X, y, kind, cfg)
            dump_json(kinds[kind].ranking.to_json(), partial / f"ranking_{kind.value}.json")
        stage = "causal"
        causal_report = causal_stage(ds, sessions)
        bundle = ReportBundle(cfg, kinds, sessions, causal_report, ds.participants)
        stage = "report"
        write_bundle(bundle, partial, labels, fmt)
        dump_json({"started_unix": started, "finished_unix": time.time(),
                   "elapsed_s": time.time() - started, "workers": cfg.workers, "out": str(out),
                   "python": platform.python_version(), "pid": os.getpid()},
                  partial / "run_info.json")
        _finalise_dir(partial, out)
        return bundle
    except PipelineError:
        raise
    except Exception as exc:
        if partial.exists():
            (partial / "error.txt").write_text(f"[stage={stage}] {type(exc).__name__}: {exc}\n")
        raise PipelineError(stage, f"{type(exc).__name__}: {exc}") from exc
