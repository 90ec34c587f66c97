"""Experiment orchestration: grid expansion, execution, and reporting.

A campaign grid (JSON or TOML) expands into a deterministic, ordered list
of experiment configs with per-experiment seeds derived by hashing
(campaign_seed, index).  Experiments run independently (optionally across
worker processes) and write one artifact directory each; aggregation
produces mean +- 95% CI tables, rank / critical-distance analysis, and a
CD diagram SVG.
"""

from __future__ import annotations

import hashlib
import json
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import boost as boostmod
from . import dataio, stats
from .augment import AugmentationSpec, expand_training_set, apply_chain
from .flowpic import build_flowpic, to_model_input
from .nn import (
    NetworkConfig,
    TrainConfig,
    build_network,
    evaluate,
    finetune,
    load_checkpoint,
    pretrain_simclr,
    save_checkpoint,
    train_supervised,
)

METHODS = ("supervised", "simclr_finetune", "boost_baseline")


def derive_seed(campaign_seed: int, index: int) -> int:
    """64-bit seed from SHA-256 of "campaign_seed:index"."""
    digest = hashlib.sha256(f"{campaign_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class ExperimentConfig:
    experiment_id: str
    method: str
    dataset_path: str
    resolution: int = 32
    window: float = 15.0
    augmentation: dict = field(default_factory=lambda: {"kind": "noaug"})
    augmentation_pair: list | None = None  # simclr only
    fold_index: int = 0
    val_split_index: int = 0
    folds_k: int = 5
    per_class: int = 100
    val_splits: int = 3
    val_ratio: float = 0.8
    expansion_times: int = 10
    train_partition: str | None = None
    test_partitions: list = field(default_factory=list)
    with_dropout: bool = False
    projection_dim: int = 30
    finetune_per_class: int = 10
    train: dict = field(default_factory=dict)
    pretrain: dict = field(default_factory=dict)
    finetune_train: dict = field(default_factory=dict)
    boost: dict = field(default_factory=dict)
    split_seed: int = 0
    init_seed: int = 0
    aug_seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class RunRecord:
    experiment_id: str
    config_hash: str
    status: str  # completed | failed
    metrics: dict = field(default_factory=dict)  # partition -> metric dict
    wall_time: float = 0.0
    checkpoint_path: str | None = None
    log_path: str | None = None
    failed_stage: str | None = None
    error: str | None = None

    # axes recorded for aggregation
    axes: dict = field(default_factory=dict)


def load_grid(path) -> dict:
    path = Path(path)
    if path.suffix == ".toml":
        import tomllib

        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path) as fh:
        return json.load(fh)


def plan_campaign(grid: dict) -> list[ExperimentConfig]:
    """Cartesian expansion: augmentations x resolutions x folds x val splits,
    in that nesting order, with per-experiment derived seeds."""
    campaign_seed = int(grid.get("campaign_seed", 0))
    method = grid.get("method", "supervised")
    if method not in METHODS:
        raise ValueError(f"grid: unknown method {method!r}")
    dataset_path = grid["dataset"]
    resolutions = grid.get("resolutions", [32])
    folds_k = int(grid.get("folds", {}).get("k", 5))
    per_class = int(grid.get("folds", {}).get("per_class", 100))
    val_splits = int(grid.get("val_splits", 3))
    if method == "simclr_finetune":
        variants = [
            {"augmentation_pair": pair}
            for pair in grid.get("augmentation_pairs", [[{"kind": "noaug"}] * 2])
        ]
    else:
        variants = [
            {"augmentation": aug}
            for aug in grid.get("augmentations", [{"kind": "noaug"}])
        ]
    for v in variants:  # fail early on bad spec entries
        for spec in v.get("augmentation_pair") or [v.get("augmentation")]:
            AugmentationSpec.from_dict(spec)

    common = {
        "method": method,
        "dataset_path": dataset_path,
        "window": float(grid.get("window", 15.0)),
        "folds_k": folds_k,
        "per_class": per_class,
        "val_splits": val_splits,
        "val_ratio": float(grid.get("val_ratio", 0.8)),
        "expansion_times": int(grid.get("expansion_times", 10)),
        "train_partition": grid.get("train_partition"),
        "test_partitions": grid.get("test_partitions", []),
        "with_dropout": bool(grid.get("with_dropout", False)),
        "projection_dim": int(grid.get("projection_dim", 30)),
        "finetune_per_class": int(grid.get("finetune_per_class", 10)),
        "train": grid.get("train", {}),
        "pretrain": grid.get("pretrain", {}),
        "finetune_train": grid.get("finetune", {}),
        "boost": grid.get("boost", {}),
    }
    plan = []
    index = 0
    for vi, variant in enumerate(variants):
        for resolution in resolutions:
            for fold in range(folds_k):
                for split in range(val_splits):
                    seed = derive_seed(campaign_seed, index)
                    plan.append(ExperimentConfig(
                        experiment_id=f"exp{index:04d}",
                        resolution=int(resolution),
                        fold_index=fold,
                        val_split_index=split,
                        split_seed=derive_seed(seed, 0) % 2**32,
                        init_seed=derive_seed(seed, 1) % 2**32,
                        aug_seed=derive_seed(seed, 2) % 2**32,
                        **variant,
                        **common,
                    ))
                    index += 1
    return plan


def _axes(config: ExperimentConfig) -> dict:
    if config.augmentation_pair is not None:
        aug = "+".join(s["kind"] for s in config.augmentation_pair)
    else:
        aug = config.augmentation["kind"]
    return {
        "augmentation": aug,
        "resolution": config.resolution,
        "fold": config.fold_index,
        "val_split": config.val_split_index,
        "method": config.method,
    }


def _series_and_labels(dataset, ids, label_index):
    series = [dataset.get(fid).series for fid in ids]
    labels = [label_index[dataset.get(fid).label] for fid in ids]
    return series, labels


def _matrices(series_list, resolution, window):
    return np.stack([
        to_model_input(build_flowpic(s, resolution, window)) for s in series_list
    ])


def run_experiment(config: ExperimentConfig, out_dir) -> RunRecord:
    """Execute one experiment end to end, writing artifacts to
    out_dir/<experiment_id>/ (config.json, metrics.json, log.txt, checkpoint)."""
    exp_dir = Path(out_dir) / config.experiment_id
    exp_dir.mkdir(parents=True, exist_ok=True)
    log_path = exp_dir / "log.txt"
    record = RunRecord(config.experiment_id, config.config_hash(), "failed",
                       log_path=str(log_path), axes=_axes(config))
    log_lines = []
    start = time.perf_counter()
    stage = "setup"
    try:
        with open(exp_dir / "config.json", "w") as fh:
            json.dump(asdict(config), fh, sort_keys=True, indent=2)
            fh.write("\n")
        stage = "load_dataset"
        dataset = dataio.load_dataset(config.dataset_path)
        train_pool = (dataset.in_partition(config.train_partition)
                      if config.train_partition else dataset)
        classes = sorted(train_pool.class_index)
        label_index = {c: i for i, c in enumerate(classes)}
        log_lines.append(f"classes: {classes}")

        stage = "split"
        manifest = dataio.make_fewshot_folds(
            train_pool, config.folds_k, config.per_class, config.split_seed)
        fold_ids = manifest.folds[config.fold_index]["train_ids"]
        tv_splits = dataio.make_train_val(
            train_pool, fold_ids, config.val_splits, config.val_ratio,
            config.split_seed)
        tv = tv_splits[config.val_split_index]

        test_sets = {}
        for part in config.test_partitions:
            sub = dataset.in_partition(part)
            if len(sub) == 0:
                raise dataio.DataError(f"empty test partition {part!r}")
            test_sets[part] = sub

        stage = "run_method"
        if config.method == "boost_baseline":
            record.metrics = _run_boost(config, train_pool, fold_ids, test_sets,
                                        label_index, classes, exp_dir, log_lines)
        elif config.method == "supervised":
            record.metrics = _run_supervised(config, train_pool, tv, test_sets,
                                             label_index, classes, exp_dir, log_lines)
        else:
            record.metrics = _run_simclr(config, train_pool, fold_ids, test_sets,
                                         label_index, classes, exp_dir, log_lines)

        stage = "write_metrics"
        with open(exp_dir / "metrics.json", "w") as fh:
            fh.write(json.dumps(record.metrics, sort_keys=True, indent=2))
            fh.write("\n")
        record.status = "completed"
        ckpt = exp_dir / "checkpoint.bin"
        if ckpt.exists():
            record.checkpoint_path = str(ckpt)
    except Exception as exc:
        record.failed_stage = stage
        record.error = f"{type(exc).__name__}: {exc}"
        record.metrics = {}
        log_lines.append(traceback.format_exc())
    record.wall_time = time.perf_counter() - start
    log_lines.append(f"status={record.status} wall_time={record.wall_time:.2f}s")
    log_path.write_text("\n".join(log_lines) + "\n")
    return record


def _metric_dict(ms: stats.MetricSet) -> dict:
    return {
        "accuracy": round(ms.accuracy, 10),
        "weighted_f1": round(ms.weighted_f1, 10),
        "confusion": ms.confusion.tolist(),
        "classes": ms.classes,
    }


def _evaluate_network(network, test_sets, label_index, classes, resolution, window):
    metrics = {}
    for part, sub in test_sets.items():
        series, labels = _series_and_labels(sub, [r.flow_id for r in sub], label_index)
        x = _matrices(series, resolution, window)
        preds, _ = evaluate(network, x)
        ms = stats.compute_metrics(
            [classes[i] for i in labels], [classes[i] for i in preds], classes)
        metrics[part] = _metric_dict(ms)
    return metrics


def _run_supervised(config, train_pool, tv, test_sets, label_index, classes,
                    exp_dir, log_lines):
    rng = np.random.default_rng(config.aug_seed)
    spec = AugmentationSpec.from_dict(config.augmentation)
    train_series, train_labels = _series_and_labels(train_pool, tv["train_ids"],
                                                    label_index)
    val_series, val_labels = _series_and_labels(train_pool, tv["val_ids"],
                                                label_index)
    train_x = np.stack(expand_training_set(
        train_series, spec, config.expansion_times, config.resolution,
        config.window, rng))
    train_y = np.repeat(np.asarray(train_labels), config.expansion_times)
    val_x = _matrices(val_series, config.resolution, config.window)
    log_lines.append(f"train {len(train_x)} expanded, val {len(val_x)}")

    net_config = NetworkConfig(config.resolution, len(classes),
                               with_dropout=config.with_dropout)
    network = build_network(net_config, seed=config.init_seed)
    cfg = TrainConfig(**config.train)
    ckpt = train_supervised(network, train_x, train_y, val_x, val_labels, cfg,
                            seed=config.init_seed)
    save_checkpoint(ckpt, exp_dir / "checkpoint.bin")
    log_lines.append(f"epochs: {ckpt.metadata['epoch']}")
    best = ckpt.to_network()
    return _evaluate_network(best, test_sets, label_index, classes,
                             config.resolution, config.window)


def _run_simclr(config, train_pool, fold_ids, test_sets, label_index, classes,
                exp_dir, log_lines):
    pair = [AugmentationSpec.from_dict(s) for s in config.augmentation_pair]
    pool_series = [train_pool.get(fid).series for fid in fold_ids]
    net_config = NetworkConfig(config.resolution, len(classes),
                               with_dropout=config.with_dropout,
                               mode="simclr_pretrain",
                               projection_dim=config.projection_dim)
    network = build_network(net_config, seed=config.init_seed)
    pre_cfg = TrainConfig(**{"max_epochs": 20, **config.pretrain})
    ckpt = pretrain_simclr(network, pool_series, pair, pre_cfg,
                           config.resolution, config.window,
                           seed=config.aug_seed)
    save_checkpoint(ckpt, exp_dir / "pretrained.bin")
    log_lines.append(f"pretrain epochs: {ckpt.metadata['epoch']}")

    # few-shot labeled subset: first n ids per class, deterministic
    rng = np.random.default_rng(config.split_seed)
    by_class = {}
    for fid in fold_ids:
        by_class.setdefault(train_pool.get(fid).label, []).append(fid)
    labeled_ids = []
    for label in sorted(by_class):
        ids = by_class[label]
        take = rng.choice(len(ids), size=min(config.finetune_per_class, len(ids)),
                          replace=False)
        labeled_ids.extend(ids[i] for i in take)
    series, labels = _series_and_labels(train_pool, labeled_ids, label_index)
    x = _matrices(series, config.resolution, config.window)
    ft_cfg = TrainConfig(**{"learning_rate": 0.01, "patience": 5,
                            "min_delta": 0.001, **config.finetune_train})
    ft_ckpt = finetune(ckpt, x, labels, len(classes), ft_cfg,
                       seed=config.init_seed)
    save_checkpoint(ft_ckpt, exp_dir / "checkpoint.bin")
    log_lines.append(f"finetune epochs: {ft_ckpt.metadata['epoch']}")
    return _evaluate_network(ft_ckpt.to_network(), test_sets, label_index,
                             classes, config.resolution, config.window)


def _run_boost(config, train_pool, fold_ids, test_sets, label_index, classes,
               exp_dir, log_lines):
    source = boostmod.FeatureSource("flattened_flowpic",
                                    resolution=config.resolution,
                                    window=config.window)
    X = np.stack([boostmod.extract_features(train_pool.get(fid), source)
                  for fid in fold_ids])
    y = [train_pool.get(fid).label for fid in fold_ids]
    params = boostmod.BoostParams(**config.boost)
    model = boostmod.fit(X, y, params)
    boostmod.save_model(model, exp_dir / "model.json")
    log_lines.append(f"final train logloss: {model.train_logloss[-1]:.4f}")
    metrics = {}
    for part, sub in test_sets.items():
        Xt = np.stack([boostmod.extract_features(r, source) for r in sub])
        preds = model.predict(Xt)
        ms = stats.compute_metrics([r.label for r in sub], preds, classes)
        metrics[part] = _metric_dict(ms)
    return metrics


def _run_one(args):
    config, out_dir = args
    return run_experiment(config, out_dir)


def run_campaign(plan, out_dir, workers: int = 1) -> list[RunRecord]:
    """Run every planned experiment; results are independent of worker count
    because all seeds are pre-derived and outputs are keyed by id."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "plan.json", "w") as fh:
        json.dump([asdict(c) for c in plan], fh, sort_keys=True, indent=2)
    if workers == 1 or len(plan) <= 1:
        records = [run_experiment(c, out_dir) for c in plan]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, [(c, out_dir) for c in plan]))
    records.sort(key=lambda r: r.experiment_id)
    with open(out_dir / "runs.json", "w") as fh:
        json.dump([asdict(r) for r in records], fh, sort_keys=True, indent=2)
    return records


def load_records(out_dir) -> list[RunRecord]:
    with open(Path(out_dir) / "runs.json") as fh:
        return [RunRecord(**obj) for obj in json.load(fh)]


def _record_score(record: RunRecord, metric="accuracy") -> float:
    values = [m[metric] for m in record.metrics.values()]
    return float(np.mean(values))


@dataclass
class CampaignReport:
    cells: dict  # (axis values tuple) -> {"mean", "ci", "n"}
    group_axes: list
    rank_table: stats.RankTable | None = None
    cd: float | None = None
    cd_groups: list | None = None


def summarize(records, group_axes=("augmentation", "resolution"),
              rank_axis="augmentation", alpha=0.05,
              metric="accuracy") -> CampaignReport:
    """Aggregate completed runs into mean +- 95% CI cells and (when more
    than one method exists on the rank axis) a rank/CD analysis."""
    completed = [r for r in records if r.status == "completed"]
    cells = {}
    by_cell = {}
    for rec in completed:
        key = tuple(rec.axes[a] for a in group_axes)
        by_cell.setdefault(key, []).append(_record_score(rec, metric))
    for key, scores in sorted(by_cell.items()):
        if len(scores) >= 2:
            mean, half = stats.t_confidence_interval(scores)
            cells[key] = {"mean": mean, "ci": half, "n": len(scores)}
        else:
            cells[key] = {"mean": float(np.mean(scores)), "ci": None,
                          "n": len(scores)}

    rank_table = cd = groups = None
    by_method = {}
    for rec in completed:
        method_key = rec.axes[rank_axis]
        trial_key = tuple(v for a, v in sorted(rec.axes.items()) if a != rank_axis)
        by_method.setdefault(method_key, {})[trial_key] = _record_score(rec, metric)
    if len(by_method) >= 2:
        trials = sorted(set.intersection(*(set(d) for d in by_method.values())))
        if trials:
            methods = sorted(by_method)
            obs = np.array([[by_method[m][t] for t in trials] for m in methods])
            rank_table = stats.rank_methods(methods, obs)
            if 2 <= len(methods) <= 20:
                cd = stats.nemenyi_cd(len(methods), len(trials), alpha)
                groups = stats.cd_groups(rank_table, cd)
    return CampaignReport(cells, list(group_axes), rank_table, cd, groups)


def render_report(report: CampaignReport, records, out_dir) -> None:
    """Write report/ under out_dir: markdown summary, CSV tables, CD SVG."""
    rep_dir = Path(out_dir) / "report"
    rep_dir.mkdir(parents=True, exist_ok=True)
    completed = sum(1 for r in records if r.status == "completed")
    failed = [r for r in records if r.status == "failed"]

    lines = ["# Campaign report", "",
             f"Experiments: {len(records)} planned, {completed} completed, "
             f"{len(failed)} failed", "",
             "## Results (mean accuracy +- 95% CI)", "",
             "| " + " | ".join(report.group_axes) + " | mean | ci95 | n |",
             "|" + "---|" * (len(report.group_axes) + 3)]
    with open(rep_dir / "cells.csv", "w") as fh:
        fh.write(",".join(report.group_axes) + ",mean,ci95,n\n")
        for key, cell in report.cells.items():
            ci = "" if cell["ci"] is None else f"{cell['ci']:.4f}"
            fh.write(",".join(str(k) for k in key) +
                     f",{cell['mean']:.4f},{ci},{cell['n']}\n")
            lines.append("| " + " | ".join(str(k) for k in key) +
                         f" | {cell['mean']:.4f} | {ci or 'n/a'} | {cell['n']} |")
    if report.rank_table is not None:
        lines += ["", "## Average ranks",
                  "", "| method | avg_rank |", "|---|---|"]
        with open(rep_dir / "ranks.csv", "w") as fh:
            fh.write("method,avg_rank\n")
            for m, r in zip(report.rank_table.methods,
                            report.rank_table.average_ranks):
                fh.write(f"{m},{r:.4f}\n")
                lines.append(f"| {m} | {r:.4f} |")
        lines.append("")
        lines.append(f"Critical distance (alpha=0.05): {report.cd:.4f}")
        render_cd_diagram(report.rank_table, report.cd, rep_dir / "cd_diagram.svg")
    if failed:
        lines += ["", "## Failures", ""]
        for r in failed:
            lines.append(f"- {r.experiment_id}: {r.failed_stage}: {r.error}")
    (rep_dir / "report.md").write_text("\n".join(lines) + "\n")


def render_cd_diagram(rank_table: stats.RankTable, cd: float, path) -> None:
    """Minimal critical-distance diagram: rank axis, method ticks, and
    horizontal bars joining statistically indistinguishable groups."""
    k = len(rank_table.methods)
    width, left, right = 640, 60, 580
    order = np.argsort(rank_table.average_ranks, kind="stable")
    groups = stats.cd_groups(rank_table, cd)
    height = 90 + 18 * len(groups) + 16 * k

    def x_of(rank):
        return left + (rank - 1) / max(k - 1, 1) * (right - left)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" font-family="sans-serif" font-size="11">',
             f'<line x1="{left}" y1="30" x2="{right}" y2="30" stroke="black"/>']
    for r in range(1, k + 1):
        x = x_of(r)
        parts.append(f'<line x1="{x:.1f}" y1="25" x2="{x:.1f}" y2="35" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="20" text-anchor="middle">{r}</text>')
    y = 50
    for gi, group in enumerate(groups):
        ranks = [rank_table.average_ranks[rank_table.methods.index(m)]
                 for m in group]
        parts.append(f'<line x1="{x_of(min(ranks)):.1f}" y1="{y}" '
                     f'x2="{x_of(max(ranks)):.1f}" y2="{y}" '
                     'stroke="black" stroke-width="3"/>')
        y += 18
    for i in order:
        rank = rank_table.average_ranks[i]
        x = x_of(rank)
        parts.append(f'<line x1="{x:.1f}" y1="30" x2="{x:.1f}" y2="{y}" '
                     'stroke="gray" stroke-dasharray="2,2"/>')
        parts.append(f'<text x="{x:.1f}" y="{y + 12}" text-anchor="middle">'
                     f'{rank_table.methods[i]} ({rank:.2f})</text>')
        y += 16
    parts.append(f'<text x="{left}" y="{y + 14}">CD = {cd:.3f}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
