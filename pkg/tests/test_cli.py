import csv
import json

import pytest

from stresstwin.cli import EXIT_DATA, EXIT_OK, main
from stresstwin.pipeline import (
    FEATURE_CSV_COLUMNS,
    LABELED_CSV_COLUMNS,
    REPORT_CSV_COLUMNS,
    read_rows_csv,
)


@pytest.fixture(scope="session")
def synthetic_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthetic_run")
    code = main(["run", "--synthetic", "--out-dir", str(out), "--svg"])
    assert code == EXIT_OK
    return out


class TestRunArtifacts:
    def test_all_artifacts_exist(self, synthetic_run):
        expected = [
            "ingest_summary.json",
            "baseline.json",
            "features.csv",
            "labeled.csv",
            "model.json",
            "split.json",
            "eval_report.json",
            "confusion_matrix.csv",
            "shap_summary.csv",
            "shap_beeswarm.csv",
            "shap_summary.svg",
            "report.csv",
            "trace.jsonl",
        ]
        for name in expected:
            assert (synthetic_run / name).exists(), name

    def test_features_schema(self, synthetic_run):
        with open(synthetic_run / "features.csv", newline="") as fh:
            header = next(csv.reader(fh))
        assert header == list(FEATURE_CSV_COLUMNS)
        assert len(header) == 16

    def test_labeled_schema(self, synthetic_run):
        with open(synthetic_run / "labeled.csv", newline="") as fh:
            header = next(csv.reader(fh))
        assert header == list(LABELED_CSV_COLUMNS)

    def test_report_schema(self, synthetic_run):
        with open(synthetic_run / "report.csv", newline="") as fh:
            header = next(csv.reader(fh))
        assert header == list(REPORT_CSV_COLUMNS)

    def test_labeled_rows_are_typed(self, synthetic_run):
        rows = read_rows_csv(synthetic_run / "labeled.csv")
        valid = [r for r in rows if r["valid"]]
        assert valid
        for row in valid[:20]:
            assert isinstance(row["rule_level"], int)
            assert 0.0 <= row["stress_score"] <= 1.0

    def test_invalid_rows_have_blank_labels(self, synthetic_run):
        rows = read_rows_csv(synthetic_run / "labeled.csv")
        invalid = [r for r in rows if not r["valid"]]
        assert invalid, "synthetic set should include warm-up invalid windows"
        assert all(r["rule_level"] is None for r in invalid)

    def test_model_is_versioned_json(self, synthetic_run):
        payload = json.loads((synthetic_run / "model.json").read_text())
        assert payload["format_version"] == 1
        assert payload["n_features"] == 13
        assert len(payload["trees"]) == 100

    def test_eval_report_contents(self, synthetic_run):
        payload = json.loads((synthetic_run / "eval_report.json").read_text())
        assert 0.0 <= payload["accuracy"] <= 1.0
        assert len(payload["confusion"]) == 5

    def test_trace_lines_parse(self, synthetic_run):
        lines = (synthetic_run / "trace.jsonl").read_text().splitlines()
        assert lines
        kinds = set()
        for line in lines:
            event = json.loads(line)
            kinds.add(event["kind"])
        assert {"SensorChunk", "WindowReady", "Inference", "StrategyTick", "CommandIssued"} <= kinds

    def test_baseline_fields(self, synthetic_run):
        payload = json.loads((synthetic_run / "baseline.json").read_text())
        assert set(payload) == {"sdnn", "bpm", "qtc", "lfhf", "source_record"}
        assert payload["source_record"] == "S00"

    def test_svg_emitted(self, synthetic_run):
        text = (synthetic_run / "shap_summary.svg").read_text()
        assert text.startswith("<svg")
        assert "rel_sdnn" in text


class TestExitCodes:
    def test_unknown_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_data_dir_is_data_error(self, tmp_path):
        code = main(["baseline", "--data-dir", str(tmp_path), "--out-dir", str(tmp_path)])
        assert code == EXIT_DATA

    def test_individual_steps_rerun_on_existing_artifacts(self, synthetic_run):
        data_dir = synthetic_run / "synthetic_records"
        code = main(
            [
                "label",
                "--data-dir",
                str(data_dir),
                "--out-dir",
                str(synthetic_run),
                "--clean-record",
                "S00",
            ]
        )
        assert code == EXIT_OK

    def test_retraining_reproduces_model_bytes(self, synthetic_run, tmp_path):
        data_dir = synthetic_run / "synthetic_records"
        code = main(
            [
                "train",
                "--data-dir",
                str(data_dir),
                "--out-dir",
                str(synthetic_run),
                "--clean-record",
                "S00",
                "--model",
                str(tmp_path / "model2.json"),
                "--split",
                str(tmp_path / "split2.json"),
            ]
        )
        assert code == EXIT_OK
        assert (tmp_path / "model2.json").read_bytes() == (synthetic_run / "model.json").read_bytes()
        assert (tmp_path / "split2.json").read_bytes() == (synthetic_run / "split.json").read_bytes()

    def test_scripted_simulate_without_model(self, synthetic_run, tmp_path):
        data_dir = synthetic_run / "synthetic_records"
        out = tmp_path / "scripted_trace.jsonl"
        code = main(
            [
                "simulate",
                "--data-dir",
                str(data_dir),
                "--out-dir",
                str(tmp_path),
                "--clean-record",
                "S00",
                "--records",
                "S00e24",
                "--scripted",
                "[[0,1],[60,3]]",
                "--out",
                str(out),
            ]
        )
        assert code == EXIT_OK
        assert out.exists()
