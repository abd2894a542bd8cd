import json
from pathlib import Path

import pytest

from respdx.errors import InvalidSpecError, PipelineError
from respdx.pipeline import PARTIAL_SUFFIX, PipelineConfig, run_pipeline
from respdx.session import TestKind


def report_files(out: Path) -> dict:
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "run_info.json"}


@pytest.fixture(scope="module")
def bundle_dir(small_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "bundle"
    cfg = PipelineConfig.from_json({"seed": 3, "dataset": str(small_dataset), "out": str(out)})
    return run_pipeline(cfg), out


def test_bundle_structure(bundle_dir):
    bundle, out = bundle_dir
    assert set(bundle.kinds) == set(TestKind)
    for kind in TestKind:
        for stem in ("eval", "ranking", "model"):
            assert (out / f"{stem}_{kind.value}.json").is_file()
        assert (out / "plots" / f"roc_{kind.value}.csv").is_file()
        assert (out / "plots" / f"psd_{kind.value}.csv").is_file()
        assert (out / "plots" / f"features_{kind.value}.csv").is_file()
    assert list((out / "plots").glob("recurrence_*.csv"))
    causal = json.loads((out / "causal.json").read_text())
    assert {"pre_smd", "post_smd", "pairs", "effects"} <= set(causal)
    assert not out.with_name(out.name + PARTIAL_SUFFIX).exists()


def test_metadata_records_resolved_defaults(bundle_dir):
    _, out = bundle_dir
    meta = json.loads((out / "report.json").read_text())["metadata"]
    assert meta["resolved_config"]["seed"] == 3
    one = next(iter(meta["sessions"].values()))
    assert {"dimension", "delay", "theiler", "threshold", "target_rate"} <= set(one["rqa"])
    for kind in TestKind:
        assert meta["models"][kind.value]["kind"]
    hold = [s for s in meta["sessions"].values() if s["test_kind"] == "hold"][0]
    assert hold["changepoint"]["penalty"] > 0


def test_rerun_is_byte_identical(bundle_dir, small_dataset, tmp_path):
    _, out = bundle_dir
    cfg = PipelineConfig.from_json({"seed": 3, "dataset": str(small_dataset), "out": str(tmp_path / "again")})
    run_pipeline(cfg)
    assert report_files(tmp_path / "again") == report_files(out)


def test_missing_dataset_is_a_parse_error(tmp_path):
    with pytest.raises(InvalidSpecError):
        PipelineConfig.from_json({"seed": 1, "dataset": str(tmp_path / "nope"), "out": str(tmp_path / "o")})
    assert list(tmp_path.iterdir()) == []


def test_unknown_config_key_rejected():
    with pytest.raises(InvalidSpecError):
        PipelineConfig.from_json({"seed": 1, "sed": 2})


def test_seed_is_mandatory():
    with pytest.raises(InvalidSpecError):
        PipelineConfig.from_json({})


def test_config_round_trip(small_dataset):
    cfg = PipelineConfig.from_json({"seed": 9, "dataset": str(small_dataset), "cv_k": 4})
    assert PipelineConfig.from_json(cfg.to_json()).to_json() == cfg.to_json()


def test_stage_failure_keeps_partial_output(small_dataset, tmp_path):
    # a single class in the data makes the model stage fail
    broken = tmp_path / "data"
    broken.mkdir()
    for p in Path(small_dataset).iterdir():
        (broken / p.name).write_bytes(p.read_bytes())
    rows = (broken / "participants.csv").read_text().splitlines()
    (broken / "participants.csv").write_text(
        "\n".join([rows[0]] + [r.replace(",covid,", ",healthy,") for r in rows[1:]]) + "\n")
    cfg = PipelineConfig.from_json({"seed": 1, "dataset": str(broken), "out": str(tmp_path / "b")})
    with pytest.raises(PipelineError) as info:
        run_pipeline(cfg)
    assert info.value.stage.startswith("model:") or info.value.stage == "causal"
    partial = tmp_path / ("b" + PARTIAL_SUFFIX)
    assert (partial / "error.txt").is_file()
    assert not (tmp_path / "b").exists()
