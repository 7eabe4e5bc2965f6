"""Command-line behaviour: subcommands, outputs on disk, and exit codes."""

import json

import pytest

from siamts.cli import main
from siamts.data import load_corpus

TINY_RUN = {
    "profile": "synth",
    "scenario": 2,
    "methods": ["supervised"],
    "label_fractions": [1.0],
    "runs": 1,
    "seed": 3,
    "synth": {"n_users": 3, "sessions_per_user": 4, "session_len": 80,
              "noise_sigma": 0.2},
    "train": {"filters": [8], "classifier_hidden": [16],
              "classifier_epochs": 2, "batch_size": 16},
}


def write_config(tmp_path, payload=TINY_RUN):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(payload))
    return str(path)


def test_synth_writes_loadable_corpus(tmp_path, capsys):
    out = tmp_path / "corpus.stsd"
    code = main(["synth", "--out", str(out), "--users", "3", "--sessions", "4",
                 "--session-len", "60", "--channels", "5", "--seed", "7"])
    assert code == 0
    recs = load_corpus(out)
    assert len(recs) == 12
    assert {r.user_id for r in recs} == {0, 1, 2}
    assert all(r.channels == 5 and r.length == 60 for r in recs)
    assert "wrote 12 sessions" in capsys.readouterr().out


def test_run_writes_report_and_curves(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out_dir = tmp_path / "out"
    code = main(["run", "--config", cfg, "--out", str(out_dir)])
    assert code == 0
    report = json.loads((out_dir / "report.json").read_text())
    assert report["config"]["seed"] == 3
    assert report["config"]["resolved"]["filters"] == [8]
    assert len(report["rows"]) == 1
    assert report["aggregates"][0]["method"] == "supervised"
    curves = (out_dir / "curves.csv").read_text().splitlines()
    assert curves[0].startswith("method,fraction,runs,mean_kappa")
    assert len(curves) == 2
    text = capsys.readouterr().out
    assert "supervised" in text and "report:" in text


def test_run_flag_overrides_beat_config(tmp_path):
    cfg = write_config(tmp_path)
    out_dir = tmp_path / "out"
    code = main(["run", "--config", cfg, "--out", str(out_dir), "--seed", "8"])
    assert code == 0
    report = json.loads((out_dir / "report.json").read_text())
    assert report["config"]["seed"] == 8


def test_run_missing_config_is_config_error(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    assert "config error" in capsys.readouterr().err


def test_run_unknown_config_key_is_config_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"wat": 1}))
    assert main(["run", "--config", str(path)]) == 2
    assert "unknown keys" in capsys.readouterr().err


def test_run_channel_mismatch_is_data_error(tmp_path, capsys):
    corpus = tmp_path / "corpus.stsd"
    assert main(["synth", "--out", str(corpus), "--users", "3", "--sessions", "4",
                 "--session-len", "80", "--channels", "4"]) == 0
    cfg = write_config(tmp_path)
    code = main(["run", "--config", cfg, "--corpus", str(corpus),
                 "--out", str(tmp_path / "out")])
    assert code == 3
    assert "data error" in capsys.readouterr().err


def test_gradcheck_passes_stock(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "all" in out and "passed" in out


def test_gradcheck_detects_injected_fault(capsys):
    assert main(["gradcheck", "--perturb"]) == 4
    assert "FAIL" in capsys.readouterr().out


def test_sweep_prints_table_and_writes_json(tmp_path, capsys):
    payload = dict(TINY_RUN)
    payload["train"] = dict(TINY_RUN["train"],
                            pretrain_epochs=1, pretrain_lr=1e-3,
                            projector=[16, 16], predictor=[16, 16])
    cfg = write_config(tmp_path, payload)
    out_dir = tmp_path / "sweep"
    code = main(["sweep", "--config", cfg, "--filters", "4;4,8",
                 "--out", str(out_dir), "--per-user", "4"])
    assert code == 0
    table = capsys.readouterr().out
    assert "[4]" in table and "[4, 8]" in table
    sweep = json.loads((out_dir / "sweep.json").read_text())
    assert [row["filters"] for row in sweep["sweep"]] == [[4], [4, 8]]
    assert all(len(row["per_run"]) == 1 for row in sweep["sweep"])


def test_sweep_rejects_malformed_filters(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["sweep", "--config", cfg, "--filters", "abc"]) == 2
    assert "bad filter configuration" in capsys.readouterr().err


def test_bench_reports_both_backends(capsys):
    assert main(["bench", "--repeats", "1"]) == 0
    out = capsys.readouterr().out
    assert "numba ms" in out and "numpy ms" in out and "auto" in out


def test_missing_subcommand_exits_with_usage():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
