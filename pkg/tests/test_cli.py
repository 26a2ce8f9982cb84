"""CLI: subcommand behavior, exit codes, config layering."""

from __future__ import annotations


import pytest

from phenolab.cli import main
from phenolab.nn import load_model


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "ds"
    rc = main([
        "synth", "--out", str(out), "--users", "4", "--days", "20",
        "--seed", "7", "--plant", "wifi", "--effect", "1.5",
    ])
    assert rc == 0
    return out


def test_synth_then_ablate_smoke(cli_dataset, tmp_path):
    report = tmp_path / "report.csv"
    rc = main([
        "ablate", "--data", str(cli_dataset), "--rounds", "2", "--tasks", "L_H",
        "--models", "fcn", "--epochs", "5", "--out", str(report),
    ])
    assert rc == 0
    text = report.read_text()
    assert "task,model,group,metric" in text
    assert "wifi" in text and "baseline" in text


def test_gradcheck_exit_zero():
    assert main(["gradcheck", "--trials", "2"]) == 0


def test_unknown_flag_exits_two():
    assert main(["--definitely-not-a-flag"]) == 2
    assert main(["ablate", "--bogus"]) == 2


def test_missing_data_dir_exits_one(tmp_path):
    rc = main(["ingest", "--data", str(tmp_path / "nope")])
    assert rc == 1


def test_ingest_reports_and_normalizes(cli_dataset, tmp_path, capsys):
    out = tmp_path / "normalized"
    rc = main(["ingest", "--data", str(cli_dataset), "--out", str(out)])
    assert rc == 0
    captured = capsys.readouterr().out
    assert "no malformed rows" in captured
    assert (out / "wifi.csv").exists() and (out / "dataset.meta").exists()


def test_featurize_writes_csv_and_registry(cli_dataset, tmp_path):
    features = tmp_path / "features.csv"
    manifest = tmp_path / "registry.manifest"
    rc = main([
        "featurize", "--data", str(cli_dataset), "--out", str(features),
        "--dump-registry", str(manifest),
    ])
    assert rc == 0
    header = features.read_text().splitlines()[0].split(",")
    assert header[:2] == ["user", "date"]
    assert len(header) == 2 + 123
    assert len(manifest.read_text().splitlines()) == 123


def test_featurize_accepts_custom_registry(cli_dataset, tmp_path):
    manifest = tmp_path / "registry.manifest"
    main(["featurize", "--data", str(cli_dataset), "--out", str(tmp_path / "f.csv"),
          "--dump-registry", str(manifest)])
    rc = main([
        "featurize", "--data", str(cli_dataset), "--out", str(tmp_path / "g.csv"),
        "--registry", str(manifest),
    ])
    assert rc == 0


def test_train_single_cell_and_save(cli_dataset, tmp_path, capsys):
    model_path = tmp_path / "model.json"
    rc = main([
        "train", "--data", str(cli_dataset), "--task", "LM_H", "--group", "wifi",
        "--epochs", "5", "--seed", "3", "--save-model", str(model_path),
    ])
    assert rc == 0
    assert "accuracy" in capsys.readouterr().out
    model = load_model(model_path)
    assert model.spec.kind == "fcn_stress"


def test_config_file_layering(cli_dataset, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("rounds=1\nepochs=4\ntasks=L_H\nmodels=fcn\n", encoding="utf-8")
    out1 = tmp_path / "r1.csv"
    rc = main(["ablate", "--data", str(cli_dataset), "--config", str(cfg), "--out", str(out1)])
    assert rc == 0
    # flags win over the config file: 2 rounds appear in the output
    out2 = tmp_path / "r2.csv"
    rc = main([
        "ablate", "--data", str(cli_dataset), "--config", str(cfg),
        "--rounds", "2", "--out", str(out2),
    ])
    assert rc == 0
    assert ",1,0," in out1.read_text()
    assert ",2,0," in out2.read_text()


def test_config_file_json_and_unknown_key(cli_dataset, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text('{"rounds": 1, "epochs": 3, "tasks": "L_H", "models": "fcn"}')
    rc = main(["ablate", "--data", str(cli_dataset), "--config", str(cfg),
               "--out", str(tmp_path / "r.csv")])
    assert rc == 0
    bad = tmp_path / "bad.cfg"
    bad.write_text("space_elevator=1\n")
    rc = main(["ablate", "--data", str(cli_dataset), "--config", str(bad),
               "--out", str(tmp_path / "x.csv")])
    assert rc == 1


def test_markdown_format(cli_dataset, tmp_path):
    out = tmp_path / "report.md"
    rc = main([
        "ablate", "--data", str(cli_dataset), "--rounds", "1", "--tasks", "L_H",
        "--models", "fcn", "--epochs", "4", "--format", "markdown",
        "--locale", "comma", "--out", str(out),
    ])
    assert rc == 0
    text = out.read_text()
    assert text.startswith("# Ablation report")
    assert "| metric |" in text and "," in text


def test_version_flag():
    assert main(["--version"]) == 0


def test_train_exports_examples_and_split(cli_dataset, tmp_path):
    examples_csv = tmp_path / "examples.csv"
    split_json = tmp_path / "split.json"
    rc = main([
        "train", "--data", str(cli_dataset), "--task", "L_H", "--group", "all",
        "--epochs", "3", "--export-examples", str(examples_csv),
        "--export-split", str(split_json),
    ])
    assert rc == 0
    lines = examples_csv.read_text().splitlines()
    assert lines[0] == "task,user,date,target"
    assert all(line.startswith("L_H,") for line in lines[1:])
    import json

    manifest = json.loads(split_json.read_text())
    assert manifest["policy"] == "chronological_80_20"
    assert set(manifest) >= {"train_rows", "test_rows"}
    assert not set(manifest["train_rows"]) & set(manifest["test_rows"])


def test_jobs_env_fallback(cli_dataset, tmp_path, monkeypatch):
    monkeypatch.setenv("PHENOLAB_JOBS", "2")
    rc = main([
        "ablate", "--data", str(cli_dataset), "--rounds", "1", "--tasks", "L_H",
        "--models", "fcn", "--epochs", "3", "--out", str(tmp_path / "r.csv"),
    ])
    assert rc == 0
    monkeypatch.setenv("PHENOLAB_JOBS", "banana")
    rc = main([
        "ablate", "--data", str(cli_dataset), "--rounds", "1", "--tasks", "L_H",
        "--models", "fcn", "--epochs", "3", "--out", str(tmp_path / "r2.csv"),
    ])
    assert rc == 1


def test_invalid_task_model_pairing_exits_two(cli_dataset):
    rc = main(["train", "--data", str(cli_dataset), "--task", "phq9", "--model", "lstm"])
    assert rc == 2


def test_featurize_output_bytes_deterministic(cli_dataset, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["featurize", "--data", str(cli_dataset), "--out", str(a)]) == 0
    assert main(["featurize", "--data", str(cli_dataset), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_strict_ingest_fails_on_malformed_rows(tmp_path):
    from phenolab import ingest as ingest_mod

    root = tmp_path / "bad"
    root.mkdir()
    for name, schema in ingest_mod.CANONICAL_SCHEMAS.items():
        (root / name).write_text(",".join(schema) + "\n", encoding="utf-8")
    (root / "ema_stress.csv").write_text("user,t,level\nu1,1000,9\n", encoding="utf-8")
    (root / "dataset.meta").write_text(
        "timezone_offset_s=0\nstudy_start=2013-04-01\nstudy_end=2013-04-05\n",
        encoding="utf-8",
    )
    assert main(["ingest", "--data", str(root)]) == 0  # skipped and counted
    assert main(["ingest", "--data", str(root), "--strict"]) == 1
