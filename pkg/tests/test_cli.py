import csv
import json

import numpy as np
import pytest

from respdx.cli import main
from respdx.session import TestKind
from respdx.signal import TimeSeries, write_signal_csv


def test_synth_file_contract(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 0, "synth": {"n_treated": 2, "n_control": 3}}))
    out = tmp_path / "d"
    assert main(["synth", "--config", str(cfg), "--seed", "7", "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"participants.csv", "manifest.json"} <= names
    with open(out / "participants.csv") as fh:
        ids = [r["id"] for r in csv.DictReader(fh)]
    assert len(ids) == 5
    assert {f"{i}_{k.value}.csv" for i in ids for k in TestKind} == names - {"participants.csv", "manifest.json"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["spec"]["seed"] == 7


def test_synth_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["rank", "--bogus"])
    assert info.value.code == 2


def test_missing_dataset_fails_at_parse(tmp_path, capsys):
    code = main(["pipeline", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "stage=parse" in capsys.readouterr().err
    assert not (tmp_path / "o").exists() and not (tmp_path / "o_partial").exists()


def write_matrix(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def test_rank_all_null_column(tmp_path, capsys):
    rng = np.random.default_rng(0)
    rows = [[f"s{k}", f"p{k}", k % 2, rng.standard_normal() + 3 * (k % 2), ""] for k in range(20)]
    path = tmp_path / "f.csv"
    write_matrix(path, ["session_id", "participant", "label", "good", "empty"], rows)
    out = tmp_path / "rank.json"
    assert main(["rank", "--features", str(path), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert [r["name"] for r in report["features"]] == ["good"]
    assert report["warnings"][0]["feature"] == "empty"
    assert "empty" in capsys.readouterr().err


@pytest.fixture(scope="module")
def feature_dir(small_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("feat")
    assert main(["features", "--data", str(small_dataset), "--seed", "3", "--out", str(out), "--format", "csv"]) == 0
    return out


def test_features_rank_train_eval_chain(feature_dir, tmp_path):
    fcsv = feature_dir / "features_hold.csv"
    with open(fcsv) as fh:
        header = next(csv.reader(fh))
    assert len(header) == 3 + 56
    ranking = tmp_path / "r.json"
    assert main(["rank", "--features", str(fcsv), "--out", str(ranking)]) == 0
    model = tmp_path / "m.json"
    assert main(["train", "--features", str(fcsv), "--ranking", str(ranking), "--test-kind", "hold",
                 "--out", str(model)]) == 0
    ev = tmp_path / "e.json"
    assert main(["eval", "--features", str(fcsv), "--model", str(model), "--out", str(ev)]) == 0
    assert json.loads(ev.read_text())["accuracy"] >= 0.0
    cv = tmp_path / "cv.csv"
    assert main(["eval", "--features", str(fcsv), "--ranking", str(ranking), "--model-kind", "BaggedTrees",
                 "--format", "csv", "--out", str(cv)]) == 0
    assert cv.read_text().splitlines()[0]


def test_causal_from_feature_files(feature_dir, small_dataset, tmp_path):
    out = tmp_path / "causal.json"
    files = [str(feature_dir / f"features_{k.value}.csv") for k in TestKind]
    assert main(["causal", "--data", str(small_dataset), "--features", *files, "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert len(report["pairs"]) == 7
    assert set(report["effects"]) == {f"features_{k.value}" for k in TestKind}


def test_preprocess_writes_filtered_sessions(small_dataset, tmp_path):
    out = tmp_path / "filtered"
    assert main(["preprocess", "--data", str(small_dataset), "--out", str(out)]) == 0
    assert len(list(out.glob("*_normal.csv"))) == 15


def test_peaks_and_changepoint_dumps(tmp_path, capsys):
    t = np.arange(1800) / 10.0
    x = np.sin(2 * np.pi * 0.25 * t)
    x[900:] = 0.0
    sig = tmp_path / "s.csv"
    write_signal_csv(TimeSeries(x, 10.0), sig)
    out = tmp_path / "p.csv"
    assert main(["peaks", "--signal", str(sig), "--raw", "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["index", "t", "height", "prominence", "width_s"]
    assert len(rows) == 23  # one breath every 4 s over the first 90 s
    assert main(["changepoint", "--signal", str(sig)]) == 0
    dump = json.loads(capsys.readouterr().out)
    assert abs(dump["primary_s"] - 90.0) <= 2.0


def test_pipeline_subcommand(small_dataset, tmp_path, capsys):
    out = tmp_path / "bundle"
    assert main(["pipeline", "--data", str(small_dataset), "--seed", "3", "--out", str(out),
                 "--format", "csv"]) == 0
    assert (out / "eval_normal.csv").is_file() and (out / "ranking_deep.csv").is_file()
    assert "bundle written" in capsys.readouterr().out
