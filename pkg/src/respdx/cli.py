"""Command-line entry point. Exit codes: 0 success, 1 stage failure, 2 usage error."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from . import causal, changepoint, classifiers, features, peaks, stats, synth
from .dataset_io import MANIFEST, PARTICIPANTS, read_dataset, read_participants, session_filename, write_dataset
from .errors import InvalidSpecError, PipelineError
from .pipeline import (PipelineConfig, causal_stage, clean_json, dump_json, featurise, kind_results,
                       run_pipeline, write_eval_csv, write_feature_csv, write_ranking_csv)
from .session import TestKind
from .signal import FilterSpec, TimeSeries, preprocess, read_signal_csv, write_signal_csv


def _config(args) -> PipelineConfig:
    """Config from --config (if any) with --seed/--out/--workers overrides applied."""
    base_dir = None
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise PipelineError("parse", f"config file {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise PipelineError("parse", f"{path}: invalid JSON: {exc}") from exc
        base_dir = path.parent
    else:
        data = {}
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
        if isinstance(data.get("synth"), dict):
            data["synth"]["seed"] = args.seed
    data.setdefault("seed", 0)
    if getattr(args, "data", None):
        data["dataset"] = args.data
        base_dir = None
    if getattr(args, "out", None):
        data["out"] = args.out
    if getattr(args, "workers", None):
        data["workers"] = args.workers
    try:
        return PipelineConfig.from_json(data, base_dir)
    except InvalidSpecError as exc:
        raise PipelineError("parse", str(exc)) from exc


def _emit(obj, out: str | None) -> None:
    text = json.dumps(clean_json(obj), indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _kinds(args) -> list[TestKind]:
    return [TestKind(args.test_kind)] if args.test_kind else list(TestKind)


def _read_matrix(path: str):
    """Feature CSV as written by ``features``: session_id, participant, label, then features."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["session_id", "participant", "label"]:
            raise ValueError(f"{path}: expected leading columns session_id,participant,label")
        rows = [r for r in reader if r]
    names = header[3:]
    X = np.array([[float(v) if v != "" else np.nan for v in r[3:]] for r in rows], dtype=float).reshape(
        len(rows), len(names))
    y = np.array([int(r[2]) for r in rows], dtype=int)
    return [r[1] for r in rows], names, X, y


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> None:
    cfg = _config(args)
    spec = cfg.synth if cfg.synth is not None else synth.CohortSpec(seed=cfg.seed)
    write_dataset(synth.generate_cohort(spec), args.out or cfg.out)


def cmd_preprocess(args) -> None:
    cfg = _config(args)
    src = Path(cfg.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = read_dataset(src)
    for (pid, kind), sess in ds.sessions.items():
        write_signal_csv(preprocess(sess.raw, cfg.filter), out / session_filename(pid, kind))
    for name in (PARTICIPANTS, MANIFEST):
        if (src / name).exists():
            shutil.copyfile(src / name, out / name)


def cmd_features(args) -> None:
    cfg = _config(args)
    ds = read_dataset(cfg.dataset)
    sessions = featurise(ds, cfg)
    labels = {p.id: p.label for p in ds.participants}
    out = Path(args.out)
    kinds = _kinds(args)
    if len(kinds) > 1 or out.suffix == "":
        out.mkdir(parents=True, exist_ok=True)
    for kind in kinds:
        rows, names, _, _ = kind_results(ds, sessions, kind)
        target = out / f"features_{kind.value}.{args.format}" if out.is_dir() else out
        if args.format == "csv":
            write_feature_csv(target, rows, names, labels)
        else:
            dump_json([r.vector.to_json() for r in rows], target)


def cmd_rank(args) -> None:
    cfg = _config(args)
    _, names, X, y = _read_matrix(args.features)
    report = stats.rank_features(X, y, names, cfg.ranking.alpha, cfg.ranking.min_selected)
    for w in report.warnings:
        print(f"warning: {w['feature']}: {w['reason']}", file=sys.stderr)
    if args.format == "csv":
        write_ranking_csv(Path(args.out) if args.out else sys.stdout, report)
    else:
        _emit(report.to_json(), args.out)


def _selected(args, names):
    if not args.ranking:
        return names
    data = json.loads(Path(args.ranking).read_text())
    ranked = data["features"] if isinstance(data, dict) else data
    chosen = [r["name"] for r in ranked if r["selected"]]
    missing = [n for n in chosen if n not in names]
    if missing:
        raise ValueError(f"ranking names {missing} are not columns of the feature matrix")
    return chosen


def _model_spec(cfg: PipelineConfig, args) -> classifiers.ModelSpec:
    if args.model_kind:
        return dataclasses.replace(cfg.models[TestKind.NORMAL], kind=classifiers.ModelKind(args.model_kind))
    return cfg.models[TestKind(args.test_kind or "normal")]


def cmd_train(args) -> None:
    cfg = _config(args)
    _, names, X, y = _read_matrix(args.features)
    chosen = _selected(args, names)
    cols = [names.index(n) for n in chosen]
    model = classifiers.train(X[:, cols], y, _model_spec(cfg, args), chosen)
    model.save(args.out)


def cmd_eval(args) -> None:
    cfg = _config(args)
    _, names, X, y = _read_matrix(args.features)
    if args.model:
        model = classifiers.TrainedClassifier.load(args.model)
        missing = [n for n in model.feature_names if n not in names]
        if missing:
            raise ValueError(f"feature matrix lacks model features {missing}")
        report = classifiers.evaluate(model, X[:, [names.index(n) for n in model.feature_names]], y)
    else:
        chosen = _selected(args, names)
        cols = [names.index(n) for n in chosen]
        report = classifiers.cross_validate(X[:, cols], y, _model_spec(cfg, args), cfg.cv_k, cfg.seed, chosen)
    if args.format == "csv":
        write_eval_csv(Path(args.out) if args.out else sys.stdout, {"eval": report})
    else:
        _emit(report.to_json(), args.out)


def cmd_causal(args) -> None:
    cfg = _config(args)
    if args.features:
        people = read_participants(Path(cfg.dataset) / PARTICIPANTS)
        treated = [causal.Covariates(p.id, p.age, p.gender, p.bmi) for p in people if p.label == 1]
        controls = [causal.Covariates(p.id, p.age, p.gender, p.bmi) for p in people if p.label == 0]
        matched = causal.optimal_match(treated, controls)
        by_id = {c.id: c for c in treated + controls}
        effects = {}
        for path in args.features:
            pids, names, X, _ = _read_matrix(path)
            per = {}
            for j, n in enumerate(names):
                vals = {pid: (None if np.isnan(v) else float(v)) for pid, v in zip(pids, X[:, j])}
                try:
                    d = causal.ace(matched, vals, n).to_json()
                    d.pop("feature")
                except ValueError as exc:
                    d = {"ace": None, "acep_percent": None, "t": None, "p": None, "n_pairs": None,
                         "note": str(exc)}
                per[n] = d
            effects[Path(path).stem] = per
        report = {
            "pre_smd": {k: v["smd"] for k, v in causal.balance_table(treated, controls).items()},
            "post_smd": {k: v["smd"] for k, v in causal.balance_table(
                [by_id[a] for a, _ in matched.pairs], [by_id[b] for _, b in matched.pairs]).items()},
            "pairs": [list(p) for p in matched.pairs],
            "effects": effects,
        }
    else:
        ds = read_dataset(cfg.dataset)
        report = causal_stage(ds, featurise(ds, cfg))
    _emit(report, args.out)


def cmd_pipeline(args) -> None:
    cfg = _config(args)
    if cfg.dataset is None and cfg.synth is None:
        raise PipelineError("parse", "config names neither a dataset nor a synthetic cohort")
    bundle = run_pipeline(cfg, fmt=args.format)
    for kind, r in bundle.kinds.items():
        print(f"{kind.value}: cv accuracy={r.cv.accuracy:.3f} auc_mean={r.cv.auc_mean:.3f} "
              f"holdout accuracy={r.holdout.accuracy:.3f}")
    print(f"bundle written to {cfg.out}")


def _signal_arg(args) -> TimeSeries:
    x = read_signal_csv(args.signal)
    return x if args.raw else preprocess(x, FilterSpec())


def cmd_peaks(args) -> None:
    x = _signal_arg(args)
    found = peaks.detect_breaths(x, args.min_distance_s)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["index", "t", "height", "prominence", "width_s"])
        for p in found:
            w.writerow([p.index, repr(float(x.times[p.index])), repr(float(p.height)), repr(float(p.prominence)),
                        repr(float(p.width_samples / x.sample_rate))])
    finally:
        if args.out:
            fh.close()


def cmd_changepoint(args) -> None:
    x = read_signal_csv(args.signal)
    if args.filtered:
        x = preprocess(x, FilterSpec())
    min_seg = max(1, int(round(args.min_seg_s * x.sample_rate)))
    res = changepoint.pelt(x, args.penalty, min_seg)
    _emit(res.to_json(x.sample_rate), args.out)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="respdx", description="Respiratory-signal screening pipeline.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="pipeline config JSON")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output file or directory")
        sp.add_argument("--test-kind", choices=[k.value for k in TestKind])
        sp.add_argument("--format", choices=["json", "csv"], default="json")
        if data:
            sp.add_argument("--data", help="dataset directory (overrides config)")
        return sp

    sp = common(sub.add_parser("synth", help="write a synthetic dataset"), data=False)
    sp.set_defaults(func=cmd_synth)
    sp = common(sub.add_parser("preprocess", help="band-pass filter every session"))
    sp.set_defaults(func=cmd_preprocess, need_data=True, need_out=True)
    sp = common(sub.add_parser("features", help="emit feature matrices"))
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_features, need_data=True, need_out=True)
    sp = common(sub.add_parser("rank", help="KS ranking of a feature matrix"))
    sp.add_argument("--features", required=True, help="feature CSV")
    sp.set_defaults(func=cmd_rank)
    for name, func, help_ in (("train", cmd_train, "fit a model"), ("eval", cmd_eval, "k-fold CV or model evaluation")):
        sp = common(sub.add_parser(name, help=help_))
        sp.add_argument("--features", required=True, help="feature CSV")
        sp.add_argument("--ranking", help="ranking JSON; only selected features are used")
        sp.add_argument("--model-kind", choices=[k.value for k in classifiers.ModelKind])
        if name == "eval":
            sp.add_argument("--model", help="trained model JSON; omit for cross-validation")
        sp.set_defaults(func=func, need_out=name == "train")
    sp = common(sub.add_parser("causal", help="matching and average causal effects"))
    sp.add_argument("--features", nargs="*", help="feature CSVs; omit to extract from the dataset")
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_causal, need_data=True)
    sp = common(sub.add_parser("pipeline", help="run every stage and write the report bundle"))
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_pipeline)
    sp = sub.add_parser("peaks", help="dump detected breaths of one signal CSV")
    sp.add_argument("--signal", required=True)
    sp.add_argument("--raw", action="store_true", help="skip the band-pass filter")
    sp.add_argument("--min-distance-s", type=float, default=1.0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_peaks)
    sp = sub.add_parser("changepoint", help="PELT change points of one signal CSV")
    sp.add_argument("--signal", required=True)
    sp.add_argument("--filtered", action="store_true", help="search the band-passed signal")
    sp.add_argument("--penalty", type=float)
    sp.add_argument("--min-seg-s", type=float, default=5.0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_changepoint)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "need_out", False) and not args.out:
        parser.error(f"{args.command} requires --out")
    try:
        if getattr(args, "need_data", False):
            cfg = _config(args)
            if cfg.dataset is None:
                parser.error(f"{args.command} requires --data or a config with a dataset path")
        args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: [stage={args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
