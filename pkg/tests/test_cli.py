"""Command-line interface: subcommands, artifacts, and exit codes."""

import json
import sys

import pytest

from heterotune import CampaignReport, bundled_data_path
from heterotune.cli import main

REPLAY = f"replay:{bundled_data_path('ida_512x32768_em')}"


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ----- space-info -----------------------------------------------------------------


def test_space_info(capsys):
    code, out, _ = run(capsys, "space-info", "--space", "emil")
    assert code == 0
    assert "cardinality: 14544" in out
    assert "CPU-A" in out


def test_space_info_from_file(capsys, tmp_path):
    path = tmp_path / "custom.yaml"
    path.write_text(
        "name: custom\n"
        "parameters:\n"
        "  - name: V\n"
        "    kind: range\n"
        "    min: 0\n"
        "    max: 4\n"
    )
    code, out, _ = run(capsys, "space-info", "--space", str(path))
    assert code == 0
    assert "cardinality: 5" in out


def test_unknown_space_is_usage_error(capsys):
    code, _, err = run(capsys, "space-info", "--space", "neither")
    assert code == 1
    assert "neither" in err


# ----- em --------------------------------------------------------------------------


def test_em_replay_finds_recorded_optimum(capsys, tmp_path):
    out_path = tmp_path / "em.json"
    code, out, _ = run(
        capsys, "em", "--space", "ida", "--eval", REPLAY, "--out", str(out_path)
    )
    assert code == 0
    assert "method: EM" in out
    assert "best: CPU-W=0, GPU-W=100" in out
    assert "efficiency: 3.169000 MB/J" in out
    assert "evaluations: 101" in out
    report = CampaignReport.load(out_path)
    assert report.best_value == pytest.approx(3.169, rel=1e-12)


def test_em_report_omits_wall_time(capsys, tmp_path):
    out_path = tmp_path / "em.json"
    code, _, _ = run(
        capsys, "em", "--space", "ida", "--eval", "oracle:ida-pcc",
        "--out", str(out_path),
    )
    assert code == 0
    doc = json.loads(out_path.read_text())
    assert "wall_time_s" not in doc
    assert doc["method"] == "EM"
    assert doc["evaluations_used"] == 101


# ----- aml -------------------------------------------------------------------------


def test_aml_with_budget_and_trace(capsys, tmp_path):
    out_path = tmp_path / "aml.json"
    trace_path = tmp_path / "trace.csv"
    code, out, _ = run(
        capsys,
        "aml", "--space", "ida", "--eval", "oracle:ida-pcc",
        "--seed", "3", "--budget", "50",
        "--out", str(out_path), "--trace", str(trace_path),
    )
    assert code == 0
    assert "method: AML" in out
    assert "budget: 50" in out
    report = CampaignReport.load(out_path)
    assert report.evaluations_used <= 53
    assert trace_path.exists()
    header = trace_path.read_text().splitlines()[0]
    assert header.startswith("step,temperature,CPU-W,GPU-W,value")


def test_aml_budget_fraction(capsys, tmp_path):
    out_path = tmp_path / "aml.json"
    code, _, _ = run(
        capsys,
        "aml", "--space", "ida", "--eval", REPLAY,
        "--seed", "0", "--budget-fraction", "0.2",
        "--out", str(out_path),
    )
    assert code == 0
    report = CampaignReport.load(out_path)
    assert report.budget == 20  # int(0.2 * 101)
    assert report.seed == 0


def test_aml_budget_flags_mutually_exclusive(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(
            [
                "aml", "--space", "ida", "--eval", REPLAY,
                "--budget", "5", "--budget-fraction", "0.1",
            ]
        )
    assert excinfo.value.code == 1
    assert "not allowed with" in capsys.readouterr().err


# ----- gen / train / predict pipeline ------------------------------------------------


def test_gen_train_predict_pipeline(capsys, tmp_path):
    log = tmp_path / "ida.csv"
    model = tmp_path / "model.json"
    predictions = tmp_path / "predictions.csv"

    code, out, _ = run(
        capsys, "gen", "--space", "ida", "--oracle", "ida-pcc", "--out", str(log)
    )
    assert code == 0
    assert "wrote 101 measurement rows" in out

    code, out, _ = run(
        capsys,
        "train", "--space", "ida", "--log", str(log), "--out", str(model),
        "--validation", "kfold:5", "--trees", "10", "--max-depth", "6",
    )
    assert code == 0
    assert "trained on 101 rows" in out
    assert "validation: 5-fold cross-validation" in out

    code, out, _ = run(
        capsys,
        "predict", "--space", "ida", "--model", str(model),
        "--config", "CPU-W=0", "--config", "CPU-W=50",
        "--out", str(predictions),
    )
    assert code == 0
    assert out.count("MB/J") >= 2
    rows = predictions.read_text().splitlines()
    assert rows[0] == "CPU-W,GPU-W,predicted_mb_per_j"
    assert len(rows) == 3


def test_gen_sampled(capsys, tmp_path):
    log = tmp_path / "emil.csv"
    code, out, _ = run(
        capsys,
        "gen", "--space", "emil", "--oracle", "emil-pm",
        "--out", str(log), "--sample", "60", "--seed", "2",
    )
    assert code == 0
    assert "wrote 60 measurement rows" in out


def test_predict_all_over_small_space(capsys, tmp_path):
    log = tmp_path / "ida.csv"
    model = tmp_path / "model.json"
    run(capsys, "gen", "--space", "ida", "--oracle", "ida-pcc", "--out", str(log))
    run(
        capsys,
        "train", "--space", "ida", "--log", str(log), "--out", str(model),
        "--validation", "none", "--trees", "5",
    )
    code, out, _ = run(
        capsys, "predict", "--space", "ida", "--model", str(model), "--all"
    )
    assert code == 0
    assert out.count("MB/J") == 101


def test_predict_requires_config_or_all(capsys, tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["predict", "--space", "ida", "--model", str(tmp_path / "m.json")])
    assert excinfo.value.code == 1
    assert "--config" in capsys.readouterr().err


def test_predict_bad_config_value(capsys, tmp_path):
    log = tmp_path / "ida.csv"
    model = tmp_path / "model.json"
    run(capsys, "gen", "--space", "ida", "--oracle", "ida-pcc", "--out", str(log))
    run(
        capsys,
        "train", "--space", "ida", "--log", str(log), "--out", str(model),
        "--validation", "none", "--trees", "5",
    )
    code, _, err = run(
        capsys,
        "predict", "--space", "ida", "--model", str(model),
        "--config", "CPU-W=200",
    )
    assert code == 1
    assert "invalid --config" in err


# ----- compare --------------------------------------------------------------------------


def test_compare_reports(capsys, tmp_path):
    em_path = tmp_path / "em.json"
    aml_path = tmp_path / "aml.json"
    compare_path = tmp_path / "compare.json"
    run(capsys, "em", "--space", "ida", "--eval", REPLAY, "--out", str(em_path))
    run(
        capsys,
        "aml", "--space", "ida", "--eval", REPLAY, "--seed", "1",
        "--out", str(aml_path),
    )
    code, out, _ = run(
        capsys,
        "compare", "--em", str(em_path), "--aml", str(aml_path),
        "--label", "512 x 32768", "--out", str(compare_path),
    )
    assert code == 0
    assert "512 x 32768" in out
    doc = json.loads(compare_path.read_text())
    assert doc["rows"][0]["label"] == "512 x 32768"
    assert doc["summary"]["rows"] == 1
    assert doc["rows"][0]["em_value"] == pytest.approx(3.169, rel=1e-12)


# ----- exit codes --------------------------------------------------------------------------


def test_exit_2_on_command_failure(capsys, tmp_path):
    script = tmp_path / "fail.py"
    script.write_text("import sys; sys.exit(9)\n")
    code, _, err = run(
        capsys,
        "em", "--space", "ida", "--eval", f'cmd:"{sys.executable}" "{script}"',
    )
    assert code == 2
    assert "execution error" in err


def test_exit_2_on_incomplete_replay(capsys, tmp_path):
    # replay log covering two configurations cannot serve the full space
    from heterotune import PccOracle, bundled_space, write_measurement_log

    ida = bundled_space("ida")
    oracle = PccOracle()
    rows = [oracle.measure(ida.make_config({"CPU-W": w})) for w in (0, 1)]
    log = tmp_path / "partial.csv"
    write_measurement_log(log, ida, rows)
    code, _, err = run(capsys, "em", "--space", "ida", "--eval", f"replay:{log}")
    assert code == 2
    assert "execution error" in err


def test_exit_3_on_malformed_log(capsys, tmp_path):
    log = tmp_path / "bad.csv"
    log.write_text("definitely,not,a,measurement,log\n")
    code, _, err = run(
        capsys, "train", "--space", "ida", "--log", str(log)
    )
    assert code == 3
    assert "data error" in err


def test_exit_3_on_malformed_model(capsys, tmp_path):
    model = tmp_path / "model.json"
    model.write_text('{"not": "a model"}')
    code, _, err = run(
        capsys,
        "predict", "--space", "ida", "--model", str(model), "--all",
    )
    assert code == 3
    assert "data error" in err


def test_exit_3_on_malformed_space_yaml(capsys, tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("parameters: [unclosed\n")
    code, _, err = run(capsys, "space-info", "--space", str(path))
    assert code == 3


def test_exit_1_on_unknown_oracle(capsys, tmp_path):
    code, _, err = run(
        capsys,
        "gen", "--space", "ida", "--oracle", "ida-pcc", "--out",
        str(tmp_path / "x.csv"), "--sample", "500",
    )
    assert code == 1  # sample exceeds cardinality -> usage error


def test_missing_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 1
    assert "usage:" in capsys.readouterr().err.lower()


def test_console_script_installed():
    import shutil

    assert shutil.which("heterotune") is not None
