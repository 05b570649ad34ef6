from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from conftest import FIXTURES
from mieqa.backends import RecordingBackend
from mieqa.cli import main
from mieqa.fixtures import build_fixture_dataset
from mieqa.model import TaskKind, load_schema, read_dataset, write_dataset
from mieqa.oracle import OracleBackend
from mieqa.pipeline import PipelineConfig
from mieqa.runner import run_dataset


@pytest.fixture()
def runner():
    return CliRunner()


MRE_DS = str(FIXTURES / "mre.jsonl")
MNER_DS = str(FIXTURES / "mner.jsonl")


def test_run_oracle_mre_prints_perfect_f1(runner, tmp_path):
    result = runner.invoke(
        main,
        ["run", "--dataset", MRE_DS, "--schema", "mnre_v2", "--backend", "oracle",
         "--method", "mqa", "--out", str(tmp_path / "out")],
    )
    assert result.exit_code == 0, result.output
    assert "F1=100.0" in result.output
    for name in ("predictions.jsonl", "report.json", "manifest.json"):
        assert (tmp_path / "out" / name).exists()


def test_run_always_nota_backend_emits_nothing(runner, tmp_path):
    result = runner.invoke(
        main,
        ["run", "--dataset", MRE_DS, "--schema", "mnre_v2",
         "--backend", "always-nota", "--out", str(tmp_path / "out")],
    )
    assert result.exit_code == 0, result.output
    assert "F1=0.0" in result.output
    rows = (tmp_path / "out" / "predictions.jsonl").read_text().splitlines()[1:]
    assert all(json.loads(r)["items"] == [] for r in rows)


def test_gold_span_method_rejected_for_mre(runner, tmp_path):
    result = runner.invoke(
        main,
        ["run", "--dataset", MRE_DS, "--schema", "mnre_v2",
         "--method", "mqa-gold-span", "--out", str(tmp_path / "out")],
    )
    assert result.exit_code == 2
    assert "gold-span" in result.output


def test_schema_task_mismatch_is_config_error(runner, tmp_path):
    result = runner.invoke(
        main,
        ["run", "--dataset", MRE_DS, "--schema", "twitter17", "--out", str(tmp_path / "o")],
    )
    assert result.exit_code == 2


def test_strict_transcript_miss_is_backend_fatal(runner, tmp_path):
    transcript = tmp_path / "empty.jsonl"
    transcript.write_text("")
    result = runner.invoke(
        main,
        ["run", "--dataset", MRE_DS, "--schema", "mnre_v2",
         "--backend", f"transcript-strict:{transcript}", "--out", str(tmp_path / "out")],
    )
    assert result.exit_code == 4


def test_eval_round_trips_run_predictions(runner, tmp_path):
    out = tmp_path / "out"
    run = runner.invoke(
        main,
        ["run", "--dataset", MRE_DS, "--schema", "mnre_v2", "--out", str(out)],
    )
    assert run.exit_code == 0
    result = runner.invoke(
        main,
        ["eval", "--gold", MRE_DS, "--predictions", str(out / "predictions.jsonl"),
         "--schema", "mnre_v2", "--out", str(tmp_path / "report.json")],
    )
    assert result.exit_code == 0, result.output
    assert "F1=100.0" in result.output
    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["metrics"]["percent"]["f1"] == "100.0"


def test_eval_empty_predictions_scores_zero(runner, tmp_path):
    preds = tmp_path / "preds.jsonl"
    preds.write_text(
        json.dumps({"record": "predictions", "version": 1, "task": "mre",
                    "schema_id": "mnre_v2.v1", "method": "mqa"}) + "\n"
    )
    result = runner.invoke(
        main, ["eval", "--gold", MRE_DS, "--predictions", str(preds), "--schema", "mnre_v2"]
    )
    assert result.exit_code == 0
    assert "F1=0.0" in result.output


def test_eval_flags_degenerate_gold_nota_only_set(runner, tmp_path):
    gold_lines = [
        json.dumps({"record": "dataset", "version": 1, "schema_id": "mnre_v2.v1", "task": "mre"}),
        json.dumps({
            "id": "only", "task": "mre",
            "sentence": {"text": "Ana saw Lima", "tokens": ["Ana", "saw", "Lima"]},
            "image": None,
            "gold": {"head": {"surface": "Ana", "char_start": 0}, "head_type": "per",
                     "tail": {"surface": "Lima", "char_start": 8}, "tail_type": "loc",
                     "relation": "none"},
        }),
    ]
    gold = tmp_path / "gold.jsonl"
    gold.write_text("\n".join(gold_lines) + "\n")
    preds = tmp_path / "preds.jsonl"
    preds.write_text(
        json.dumps({"record": "predictions", "version": 1, "task": "mre",
                    "schema_id": "mnre_v2.v1", "method": "mqa"}) + "\n"
        + json.dumps({"id": "only", "items": []}) + "\n"
    )
    result = runner.invoke(
        main, ["eval", "--gold", str(gold), "--predictions", str(preds), "--schema", "mnre_v2"]
    )
    assert result.exit_code == 0
    assert "[degenerate]" in result.output


def test_validate_clean_fixture(runner):
    result = runner.invoke(main, ["validate", "--dataset", MNER_DS, "--schema", "twitter17"])
    assert result.exit_code == 0
    assert "no violations" in result.output


def test_validate_reports_violations_with_data_exit_code(runner, tmp_path):
    lines = Path(MNER_DS).read_text().splitlines()
    broken = json.loads(lines[1])
    broken["gold"] = [{"surface": "Atlantis", "label": "location", "char_start": -1}]
    lines[1] = json.dumps(broken)
    path = tmp_path / "broken.jsonl"
    path.write_text("\n".join(lines) + "\n")
    result = runner.invoke(main, ["validate", "--dataset", str(path), "--schema", "twitter17"])
    assert result.exit_code == 3
    assert "Atlantis" in result.output


def test_robustness_needs_two_runs(runner, tmp_path):
    result = runner.invoke(
        main,
        ["robustness", "--dataset", MRE_DS, "--schema", "mnre_v2",
         "--variants", "1", "--orders", "0", "--out", str(tmp_path)],
    )
    assert result.exit_code == 2


def test_robustness_oracle_rows_are_identical_with_zero_std(runner, tmp_path):
    result = runner.invoke(
        main,
        ["robustness", "--dataset", MRE_DS, "--schema", "mnre_v2",
         "--variants", "1,2,3,4", "--orders", "0,7", "--out", str(tmp_path / "rob")],
    )
    assert result.exit_code == 0, result.output
    payload = json.loads((tmp_path / "rob" / "robustness.json").read_text())
    assert payload["n_runs"] == 8
    assert {row["f1"] for row in payload["rows"]} == {1.0}
    assert payload["display"] == "100.0 ± 0.0"
    assert "F1 over 8 runs: 100.0 ± 0.0" in result.output


def test_sample_fewshot_counts_match_plan(runner, tmp_path):
    result = runner.invoke(
        main,
        ["sample", "--dataset", MNER_DS, "--schema", "twitter17",
         "--k", "10", "--seed", "3", "--mode", "fewshot", "--out", str(tmp_path)],
    )
    assert result.exit_code == 0, result.output
    lines = (tmp_path / "train_ids.txt").read_text().splitlines()
    header = [l for l in lines if l.startswith("#")]
    ids = [l for l in lines if not l.startswith("#")]
    assert len(ids) == 10
    assert any("plan:" in h for h in header)
    assert any("dataset_sha256:" in h for h in header)


def test_sample_med_split_partitions(runner, tmp_path):
    big = build_fixture_dataset(TaskKind.MTED, size=600)
    ds_path = tmp_path / "mted600.jsonl"
    write_dataset(ds_path, big)
    result = runner.invoke(
        main,
        ["sample", "--dataset", str(ds_path), "--schema", "m2e2_text",
         "--k", "50", "--mode", "med-split", "--out", str(tmp_path / "split")],
    )
    assert result.exit_code == 0, result.output

    def ids_of(name):
        lines = (tmp_path / "split" / f"{name}_ids.txt").read_text().splitlines()
        return [l for l in lines if not l.startswith("#")]

    train, val, test = ids_of("train"), ids_of("val"), ids_of("test")
    assert (len(train), len(val), len(test)) == (50, 200, 350)
    assert not set(train) & set(val) and not set(val) & set(test)


def test_sample_same_seed_twice_writes_identical_files(runner, tmp_path):
    args = ["sample", "--dataset", MNER_DS, "--schema", "twitter17",
            "--k", "12", "--seed", "8", "--mode", "fewshot"]
    assert runner.invoke(main, args + ["--out", str(tmp_path / "a")]).exit_code == 0
    assert runner.invoke(main, args + ["--out", str(tmp_path / "b")]).exit_code == 0
    assert (tmp_path / "a/train_ids.txt").read_bytes() == (tmp_path / "b/train_ids.txt").read_bytes()


def test_static_backend_spec(runner, tmp_path):
    result = runner.invoke(
        main,
        ["run", "--dataset", MRE_DS, "--schema", "mnre_v2",
         "--backend", "static:C", "--out", str(tmp_path / "out")],
    )
    assert result.exit_code == 0, result.output  # always answers letter C


def test_unknown_backend_spec_is_config_error(runner, tmp_path):
    result = runner.invoke(
        main,
        ["run", "--dataset", MRE_DS, "--schema", "mnre_v2",
         "--backend", "quantum", "--out", str(tmp_path / "out")],
    )
    assert result.exit_code == 2
    assert "unknown backend spec" in result.output


def test_config_file_supplies_defaults_and_flags_override(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "dataset_path": MRE_DS, "schema_name": "mnre_v2", "option_seed": 3,
    }))
    result = runner.invoke(main, ["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    assert result.exit_code == 0, result.output
    assert "option_seed=3" in result.output
    override = runner.invoke(
        main, ["run", "--config", str(cfg), "--option-seed", "5", "--out", str(tmp_path / "b")]
    )
    assert "option_seed=5" in override.output


def test_config_file_rejects_unknown_keys(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dataset_path": MRE_DS, "schema_name": "mnre_v2", "nope": 1}))
    result = runner.invoke(main, ["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert result.exit_code == 2
    assert "unknown keys" in result.output


def test_missing_dataset_without_config_is_config_error(runner, tmp_path):
    result = runner.invoke(main, ["run", "--out", str(tmp_path / "o")])
    assert result.exit_code == 2
    assert "dataset" in result.output


def test_warm_cache_rerun_makes_zero_backend_calls(runner, tmp_path):
    # record a transcript from an oracle run, then replay it twice with a cache
    dataset = read_dataset(MRE_DS)
    schema = load_schema("mnre_v2")
    transcript = tmp_path / "transcript.jsonl"
    recorder = RecordingBackend(OracleBackend(dataset, schema), transcript)
    run_dataset(dataset, schema, recorder, PipelineConfig())

    cache = tmp_path / "cache"
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        result = runner.invoke(
            main,
            ["run", "--dataset", MRE_DS, "--schema", "mnre_v2",
             "--backend", f"transcript-strict:{transcript}",
             "--cache-dir", str(cache), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        outs.append(out)

    first, second = outs
    assert (first / "predictions.jsonl").read_bytes() == (second / "predictions.jsonl").read_bytes()
    assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()
    manifest = json.loads((second / "manifest.json").read_text())
    assert manifest["backend"]["calls"] == 0  # inner backend never invoked
    assert manifest["backend"]["cache_hits"] == len(dataset)
