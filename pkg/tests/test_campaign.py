import json
from dataclasses import replace

import numpy as np
import pytest

from flowpiclab import campaign
from flowpiclab.synthetic import write_synthetic_dataset

AUG_KINDS = ["noaug", "change_rtt", "time_shift", "packet_loss",
             "rotate", "horizontal_flip", "color_jitter"]


@pytest.fixture(scope="module")
def synth_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "synth.jsonl"
    write_synthetic_dataset(path, num_classes=3, flows_per_class=40, seed=1)
    return str(path)


def small_grid(dataset, method="boost_baseline", **overrides):
    grid = {
        "campaign_seed": 7,
        "dataset": dataset,
        "method": method,
        "augmentations": [{"kind": "noaug"}],
        "resolutions": [32],
        "folds": {"k": 2, "per_class": 10},
        "val_splits": 1,
        "train_partition": "train",
        "test_partitions": ["test"],
        "boost": {"n_rounds": 3, "max_depth": 3},
        "train": {"max_epochs": 2},
        "pretrain": {"max_epochs": 2},
        "expansion_times": 2,
    }
    grid.update(overrides)
    return grid


class TestPlanCampaign:
    def test_table_grid_plans_105(self, synth_dataset):
        grid = small_grid(synth_dataset, method="supervised",
                          augmentations=[{"kind": k} for k in AUG_KINDS],
                          folds={"k": 5, "per_class": 10}, val_splits=3)
        plan = campaign.plan_campaign(grid)
        assert len(plan) == 105

    def test_minimal_grid_plans_one(self, synth_dataset):
        grid = small_grid(synth_dataset, folds={"k": 1, "per_class": 10})
        assert len(campaign.plan_campaign(grid)) == 1

    def test_replanning_identical(self, synth_dataset):
        grid = small_grid(synth_dataset)
        p1 = campaign.plan_campaign(grid)
        p2 = campaign.plan_campaign(grid)
        assert [c.experiment_id for c in p1] == [c.experiment_id for c in p2]
        assert [c.split_seed for c in p1] == [c.split_seed for c in p2]
        assert [c.init_seed for c in p1] == [c.init_seed for c in p2]

    def test_invalid_grid_entries_named(self, synth_dataset):
        grid = small_grid(synth_dataset, augmentations=[{"kind": "bogus"}])
        with pytest.raises(ValueError, match="bogus"):
            campaign.plan_campaign(grid)

    def test_seed_derivation_is_stable_hash(self):
        assert campaign.derive_seed(1, 0) == campaign.derive_seed(1, 0)
        assert campaign.derive_seed(1, 0) != campaign.derive_seed(1, 1)
        assert campaign.derive_seed(1, 0) != campaign.derive_seed(2, 0)


class TestRunExperiment:
    def test_boost_completes_with_all_partitions(self, synth_dataset, tmp_path):
        config = campaign.plan_campaign(small_grid(synth_dataset))[0]
        record = campaign.run_experiment(config, tmp_path)
        assert record.status == "completed", record.error
        assert set(record.metrics) == {"test"}
        assert 0.0 <= record.metrics["test"]["accuracy"] <= 1.0
        assert (tmp_path / config.experiment_id / "metrics.json").exists()
        assert (tmp_path / config.experiment_id / "log.txt").exists()

    def test_rerun_byte_identical_metrics(self, synth_dataset, tmp_path):
        config = campaign.plan_campaign(small_grid(synth_dataset))[0]
        campaign.run_experiment(config, tmp_path / "a")
        campaign.run_experiment(config, tmp_path / "b")
        ma = (tmp_path / "a" / config.experiment_id / "metrics.json").read_bytes()
        mb = (tmp_path / "b" / config.experiment_id / "metrics.json").read_bytes()
        assert ma == mb

    def test_supervised_pipeline(self, synth_dataset, tmp_path):
        grid = small_grid(synth_dataset, method="supervised")
        config = campaign.plan_campaign(grid)[0]
        record = campaign.run_experiment(config, tmp_path)
        assert record.status == "completed", record.error
        assert record.checkpoint_path is not None

    def test_simclr_pipeline(self, synth_dataset, tmp_path):
        grid = small_grid(synth_dataset, method="simclr_finetune",
                          augmentation_pairs=[[{"kind": "change_rtt"},
                                               {"kind": "time_shift"}]])
        config = campaign.plan_campaign(grid)[0]
        record = campaign.run_experiment(config, tmp_path)
        assert record.status == "completed", record.error

    def test_missing_dataset_fails_with_stage(self, synth_dataset, tmp_path):
        config = campaign.plan_campaign(small_grid(synth_dataset))[0]
        config = replace(config, dataset_path="/nonexistent.jsonl")
        record = campaign.run_experiment(config, tmp_path)
        assert record.status == "failed"
        assert record.failed_stage == "load_dataset"


class TestRunCampaign:
    def test_worker_invariance(self, synth_dataset, tmp_path):
        grid = small_grid(synth_dataset, folds={"k": 2, "per_class": 10})
        plan = campaign.plan_campaign(grid)
        assert len(plan) == 2
        r1 = campaign.run_campaign(plan, tmp_path / "w1", workers=1)
        r2 = campaign.run_campaign(plan, tmp_path / "w2", workers=2)
        for c in plan:
            a = (tmp_path / "w1" / c.experiment_id / "metrics.json").read_bytes()
            b = (tmp_path / "w2" / c.experiment_id / "metrics.json").read_bytes()
            assert a == b
        assert [r.status for r in r1] == [r.status for r in r2] == ["completed"] * 2

    def test_empty_plan(self, tmp_path):
        assert campaign.run_campaign([], tmp_path, workers=2) == []

    def test_every_experiment_yields_one_record(self, synth_dataset, tmp_path):
        grid = small_grid(synth_dataset)
        plan = campaign.plan_campaign(grid)
        # sabotage one config so completed + failed == planned
        plan[1] = replace(plan[1], dataset_path="/missing.jsonl")
        records = campaign.run_campaign(plan, tmp_path, workers=1)
        assert len(records) == len(plan)
        assert sum(r.status == "completed" for r in records) == len(plan) - 1
        assert sum(r.status == "failed" for r in records) == 1

    def test_records_roundtrip(self, synth_dataset, tmp_path):
        plan = campaign.plan_campaign(small_grid(synth_dataset))
        records = campaign.run_campaign(plan, tmp_path, workers=1)
        loaded = campaign.load_records(tmp_path)
        assert [r.experiment_id for r in loaded] == [r.experiment_id for r in records]
        assert loaded[0].metrics == records[0].metrics


def fabricate_records(plan, seed=0):
    rng = np.random.default_rng(seed)
    records = []
    for config in plan:
        records.append(campaign.RunRecord(
            config.experiment_id, config.config_hash(), "completed",
            metrics={"test": {"accuracy": float(rng.random()),
                              "weighted_f1": 0.5, "confusion": [],
                              "classes": []}},
            axes=campaign._axes(config),
        ))
    return records


class TestSummarize:
    def test_cell_counts_match_plan(self, synth_dataset):
        grid = small_grid(synth_dataset, method="supervised",
                          augmentations=[{"kind": k} for k in AUG_KINDS],
                          folds={"k": 5, "per_class": 10}, val_splits=3)
        plan = campaign.plan_campaign(grid)
        report = campaign.summarize(fabricate_records(plan))
        assert len(report.cells) == 7
        assert all(cell["n"] == 15 for cell in report.cells.values())

    def test_rank_analysis_uses_cd(self, synth_dataset):
        grid = small_grid(synth_dataset, method="supervised",
                          augmentations=[{"kind": k} for k in AUG_KINDS],
                          resolutions=[32, 64],
                          folds={"k": 5, "per_class": 10}, val_splits=3)
        plan = campaign.plan_campaign(grid)
        report = campaign.summarize(fabricate_records(plan))
        assert report.rank_table is not None
        assert report.rank_table.observations.shape == (7, 30)
        assert report.cd == pytest.approx(1.644, abs=1e-3)

    def test_single_record_cell_no_ci(self, synth_dataset):
        plan = campaign.plan_campaign(small_grid(
            synth_dataset, folds={"k": 1, "per_class": 10}))
        report = campaign.summarize(fabricate_records(plan))
        (cell,) = report.cells.values()
        assert cell["n"] == 1
        assert cell["ci"] is None

    def test_render_report_outputs(self, synth_dataset, tmp_path):
        grid = small_grid(synth_dataset, method="supervised",
                          augmentations=[{"kind": k} for k in AUG_KINDS[:3]],
                          folds={"k": 2, "per_class": 10}, val_splits=2)
        plan = campaign.plan_campaign(grid)
        records = fabricate_records(plan)
        report = campaign.summarize(records)
        campaign.render_report(report, records, tmp_path)
        rep = tmp_path / "report"
        assert (rep / "report.md").exists()
        assert (rep / "cells.csv").exists()
        assert (rep / "ranks.csv").exists()
        svg = (rep / "cd_diagram.svg").read_text()
        assert svg.startswith("<svg")
        ranks_csv = (rep / "ranks.csv").read_text().splitlines()
        assert ranks_csv[0] == "method,avg_rank"
        assert len(ranks_csv) == 4
