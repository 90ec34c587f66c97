"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 completed with run failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import boost as boostmod
from . import campaign as campaignmod
from . import dataio, stats
from .flowpic import build_flowpic, export_csv, export_pgm
from .synthetic import write_synthetic_dataset


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit(f"error: {message}") from None


def _build_parser() -> _Parser:
    parser = _Parser(prog="flowpiclab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="apply curation filters to a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--min-packets", type=int, default=0,
                   help="keep flows with strictly more packets than this")
    p.add_argument("--min-class-size", type=int, default=1)

    p = sub.add_parser("split", help="generate a split manifest")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scheme", choices=["fewshot", "stratified"], required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--ratios", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--partition", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("flowpic", help="debug-export one flow's flowpic")
    p.add_argument("--dataset", required=True)
    p.add_argument("--flow-id", required=True)
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--window", type=float, default=15.0)
    p.add_argument("--csv")
    p.add_argument("--pgm")

    for name, method in (("train", "supervised"),
                         ("pretrain", "simclr_finetune"),
                         ("finetune", "simclr_finetune"),
                         ("baseline", "boost_baseline")):
        p = sub.add_parser(name, help=f"single {method} run")
        p.add_argument("--dataset", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--resolution", type=int, default=32)
        p.add_argument("--window", type=float, default=15.0)
        p.add_argument("--aug", default='{"kind": "noaug"}',
                       help="augmentation spec as JSON (pair for pretrain)")
        p.add_argument("--folds-k", type=int, default=5)
        p.add_argument("--per-class", type=int, default=100)
        p.add_argument("--fold", type=int, default=0)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--train-partition", default=None)
        p.add_argument("--test-partitions", nargs="*", default=[])
        p.add_argument("--train-config", default="{}",
                       help="TrainConfig overrides as JSON")
        p.add_argument("--boost-config", default="{}",
                       help="BoostParams overrides as JSON")
        p.add_argument("--finetune-per-class", type=int, default=10)
        p.set_defaults(method=method)

    p = sub.add_parser("campaign", help="campaign operations")
    csub = p.add_subparsers(dest="campaign_command", required=True)
    pr = csub.add_parser("run", help="run a campaign grid")
    pr.add_argument("grid", help="grid config file (.json or .toml)")
    pr.add_argument("--workers", type=int, default=1)
    pr.add_argument("--out", required=True)

    p = sub.add_parser("report", help="aggregate a campaign directory")
    p.add_argument("dir")
    p.add_argument("--group-axes", nargs="+",
                   default=["augmentation", "resolution"])
    p.add_argument("--rank-axis", default="augmentation")

    p = sub.add_parser("drift", help="mean-flowpic / KDE drift diagnostics")
    p.add_argument("dataset")
    p.add_argument("--partitions", nargs="+", required=True)
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--out", required=True)

    p = sub.add_parser("stats", help="statistics utilities")
    ssub = p.add_subparsers(dest="stats_command", required=True)
    pc = ssub.add_parser("cd", help="Nemenyi critical distance")
    pc.add_argument("--k", type=int, required=True)
    pc.add_argument("--n", type=int, required=True)
    pc.add_argument("--alpha", type=float, default=0.05)
    pt = ssub.add_parser("tukey", help="Tukey HSD on a CSV of group,value rows")
    pt.add_argument("csv")
    pt.add_argument("--alpha", type=float, default=0.05)
    pi = ssub.add_parser("ci", help="t-based CI on a CSV column of values")
    pi.add_argument("csv")
    pi.add_argument("--level", type=float, default=0.95)

    p = sub.add_parser("synth", help="generate a synthetic JSONL dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--flows-per-class", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_curate(args) -> int:
    d = dataio.load_dataset(args.input)
    d = dataio.filter_min_packets(d, args.min_packets)
    d = dataio.filter_min_class_size(d, args.min_class_size)
    dataio.save_dataset(d, args.output)
    print(f"{len(d)} flows, {len(d.class_index)} classes -> {args.output}")
    return 0


def _cmd_split(args) -> int:
    d = dataio.load_dataset(args.dataset)
    if args.partition:
        d = d.in_partition(args.partition)
    if args.scheme == "fewshot":
        m = dataio.make_fewshot_folds(d, args.k, args.per_class, args.seed)
    else:
        m = dataio.make_stratified_split(d, tuple(args.ratios), args.seed)
    dataio.save_manifest(m, args.out)
    print(f"{m.scheme} manifest with {len(m.folds)} fold(s) -> {args.out}")
    return 0


def _cmd_flowpic(args) -> int:
    d = dataio.load_dataset(args.dataset)
    fp = build_flowpic(d.get(args.flow_id).series, args.resolution, args.window)
    if args.csv:
        export_csv(fp, args.csv)
    if args.pgm:
        export_pgm(fp, args.pgm)
    print(f"flowpic {args.resolution}x{args.resolution}, "
          f"{int(fp.counts.sum())} packets in window")
    return 0


def _cmd_single_run(args) -> int:
    aug = json.loads(args.aug)
    config = campaignmod.ExperimentConfig(
        experiment_id="exp0000",
        method=args.method,
        dataset_path=args.dataset,
        resolution=args.resolution,
        window=args.window,
        augmentation=aug if isinstance(aug, dict) else {"kind": "noaug"},
        augmentation_pair=aug if isinstance(aug, list) else (
            [{"kind": "noaug"}, {"kind": "noaug"}]
            if args.method == "simclr_finetune" else None),
        folds_k=args.folds_k,
        per_class=args.per_class,
        fold_index=args.fold,
        val_splits=1,
        val_split_index=0,
        train_partition=args.train_partition,
        test_partitions=args.test_partitions,
        train=json.loads(args.train_config),
        pretrain=json.loads(args.train_config),
        finetune_train={},
        boost=json.loads(args.boost_config),
        finetune_per_class=args.finetune_per_class,
        split_seed=args.seed,
        init_seed=args.seed + 1,
        aug_seed=args.seed + 2,
    )
    record = campaignmod.run_experiment(config, args.out)
    print(json.dumps({"status": record.status, "metrics": record.metrics,
                      "error": record.error}, indent=2, sort_keys=True))
    return 0 if record.status == "completed" else 2


def _cmd_campaign_run(args) -> int:
    grid = campaignmod.load_grid(args.grid)
    plan = campaignmod.plan_campaign(grid)
    print(f"planned {len(plan)} experiments")
    records = campaignmod.run_campaign(plan, args.out, workers=args.workers)
    completed = sum(1 for r in records if r.status == "completed")
    failed = len(records) - completed
    report = campaignmod.summarize(records)
    campaignmod.render_report(report, records, args.out)
    print(f"completed {completed}, failed {failed}; report in {args.out}/report")
    return 2 if failed else 0


def _cmd_report(args) -> int:
    records = campaignmod.load_records(args.dir)
    report = campaignmod.summarize(records, tuple(args.group_axes),
                                   args.rank_axis)
    campaignmod.render_report(report, records, args.dir)
    print(f"report written to {args.dir}/report")
    return 0


def _cmd_drift(args) -> int:
    d = dataio.load_dataset(args.dataset)
    partitioned = {p: d.in_partition(p) for p in args.partitions}
    report = stats.drift_diagnostics(partitioned, args.resolution)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for (part, cls), mat in report.mean_flowpics.items():
        np.savetxt(out / f"mean_flowpic_{part}_{cls}.csv", mat, delimiter=",")
    with open(out / "kde.csv", "w") as fh:
        fh.write("partition,class," +
                 ",".join(f"{x:.2f}" for x in report.kde_grid) + "\n")
        for (part, cls), dens in report.kdes.items():
            fh.write(f"{part},{cls}," + ",".join(f"{v:.6e}" for v in dens) + "\n")
    print(f"drift artifacts written to {out}")
    return 0


def _cmd_stats(args) -> int:
    if args.stats_command == "cd":
        print(f"{stats.nemenyi_cd(args.k, args.n, args.alpha):.4f}")
        return 0
    with open(args.csv) as fh:
        rows = list(csv.reader(fh))
    if args.stats_command == "tukey":
        groups: dict[str, list[float]] = {}
        for row in rows:
            if len(row) != 2:
                raise CliError("tukey CSV needs rows of group,value")
            groups.setdefault(row[0], []).append(float(row[1]))
        labels = sorted(groups)
        result = stats.tukey_hsd([groups[g] for g in labels], args.alpha, labels)
        print("group_a,group_b,p_value,different")
        for i in range(len(labels)):
            for j in range(i + 1, len(labels)):
                print(f"{labels[i]},{labels[j]},{result.p_values[i, j]:.6g},"
                      f"{bool(result.different[i, j])}")
        return 0
    values = [float(row[0]) for row in rows if row]
    mean, half = stats.t_confidence_interval(values, args.level)
    print(f"mean={mean:.6g} ci{int(args.level * 100)}=+-{half:.6g} n={len(values)}")
    return 0


def _cmd_synth(args) -> int:
    d = write_synthetic_dataset(args.out, num_classes=args.classes,
                                flows_per_class=args.flows_per_class,
                                seed=args.seed)
    print(f"{len(d)} synthetic flows -> {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        return 0 if exc.code in (0, None) else 1
    try:
        if args.command == "curate":
            return _cmd_curate(args)
        if args.command == "split":
            return _cmd_split(args)
        if args.command == "flowpic":
            return _cmd_flowpic(args)
        if args.command in ("train", "pretrain", "finetune", "baseline"):
            return _cmd_single_run(args)
        if args.command == "campaign":
            return _cmd_campaign_run(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "drift":
            return _cmd_drift(args)
        if args.command == "stats":
            return _cmd_stats(args)
        if args.command == "synth":
            return _cmd_synth(args)
        raise CliError(f"unknown command {args.command}")
    except (dataio.DataError, CliError, ValueError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
