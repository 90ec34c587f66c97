import json

import pytest

from flowpiclab.cli import main
from flowpiclab.synthetic import write_synthetic_dataset


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "synth.jsonl"
    write_synthetic_dataset(path, num_classes=3, flows_per_class=30, seed=2)
    return str(path)


def test_no_command_exits_1(capsys):
    assert main([]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_flag_exits_1():
    assert main(["synth", "--bogus"]) == 1


def test_help_exits_0():
    assert main(["--help"]) == 0


def test_synth_and_curate(tmp_path, capsys):
    out = tmp_path / "d.jsonl"
    assert main(["synth", "--out", str(out), "--classes", "2",
                 "--flows-per-class", "10"]) == 0
    curated = tmp_path / "c.jsonl"
    assert main(["curate", "--input", str(out), "--output", str(curated),
                 "--min-packets", "5"]) == 0
    assert curated.exists()
    assert "classes" in capsys.readouterr().out


def test_curate_missing_file_exits_1(tmp_path, capsys):
    assert main(["curate", "--input", str(tmp_path / "no.jsonl"),
                 "--output", str(tmp_path / "o.jsonl")]) == 1
    assert "error" in capsys.readouterr().err


def test_split(data, tmp_path):
    out = tmp_path / "m.json"
    assert main(["split", "--dataset", data, "--scheme", "fewshot",
                 "--k", "2", "--per-class", "5", "--partition", "train",
                 "--out", str(out)]) == 0
    manifest = json.loads(out.read_text())
    assert len(manifest["folds"]) == 2


def test_flowpic_export(data, tmp_path, capsys):
    csv_path = tmp_path / "fp.csv"
    assert main(["flowpic", "--dataset", data, "--flow-id", "c00_f0006",
                 "--csv", str(csv_path)]) == 0
    assert csv_path.exists()
    assert "packets in window" in capsys.readouterr().out


def test_baseline_single_run(data, tmp_path, capsys):
    assert main(["baseline", "--dataset", data, "--out", str(tmp_path),
                 "--folds-k", "2", "--per-class", "5",
                 "--train-partition", "train", "--test-partitions", "test",
                 "--boost-config", '{"n_rounds": 2, "max_depth": 2}']) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["status"] == "completed"


def test_campaign_run_and_report(data, tmp_path, capsys):
    grid = {
        "campaign_seed": 1, "dataset": data, "method": "boost_baseline",
        "augmentations": [{"kind": "noaug"}], "resolutions": [32],
        "folds": {"k": 2, "per_class": 5}, "val_splits": 1,
        "train_partition": "train", "test_partitions": ["test"],
        "boost": {"n_rounds": 2, "max_depth": 2},
    }
    grid_path = tmp_path / "grid.json"
    grid_path.write_text(json.dumps(grid))
    out = tmp_path / "camp"
    assert main(["campaign", "run", str(grid_path), "--out", str(out)]) == 0
    assert (out / "report" / "report.md").exists()
    capsys.readouterr()
    assert main(["report", str(out)]) == 0


def test_campaign_failures_exit_2(tmp_path):
    grid = {
        "campaign_seed": 1, "dataset": str(tmp_path / "missing.jsonl"),
        "method": "boost_baseline", "augmentations": [{"kind": "noaug"}],
        "resolutions": [32], "folds": {"k": 1, "per_class": 5},
        "val_splits": 1, "test_partitions": ["test"],
    }
    grid_path = tmp_path / "grid.json"
    grid_path.write_text(json.dumps(grid))
    assert main(["campaign", "run", str(grid_path),
                 "--out", str(tmp_path / "camp")]) == 2


def test_stats_cd(capsys):
    assert main(["stats", "cd", "--k", "7", "--n", "30"]) == 0
    assert capsys.readouterr().out.strip() == "1.6449"


def test_stats_ci(tmp_path, capsys):
    csv_path = tmp_path / "v.csv"
    csv_path.write_text("1\n2\n3\n")
    assert main(["stats", "ci", str(csv_path)]) == 0
    assert "mean=2" in capsys.readouterr().out


def test_stats_tukey(tmp_path, capsys):
    csv_path = tmp_path / "g.csv"
    csv_path.write_text("a,1\na,1.1\nb,5\nb,5.1\n")
    assert main(["stats", "tukey", str(csv_path)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "group_a,group_b,p_value,different"
    assert "a,b" in out


def test_stats_tukey_bad_csv_exits_1(tmp_path, capsys):
    csv_path = tmp_path / "bad.csv"
    csv_path.write_text("only_one_column\n")
    assert main(["stats", "tukey", str(csv_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_drift(data, tmp_path):
    out = tmp_path / "drift"
    assert main(["drift", data, "--partitions", "train", "test",
                 "--out", str(out)]) == 0
    assert (out / "kde.csv").exists()


def test_console_script_installed():
    import importlib.metadata as md

    eps = md.entry_points(group="console_scripts")
    assert any(ep.name == "flowpiclab" for ep in eps)
