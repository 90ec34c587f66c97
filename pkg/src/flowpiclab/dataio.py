"""Flow dataset format, ingestion, curation filters, and split generation.

Datasets are stored as JSON Lines, one flow per line:

    {"flow_id": str, "label": str, "partition": str|null,
     "timestamps": [float], "sizes": [int], "directions": [int]|null}

Timestamps are rebased to the first packet at load time and packet sizes
above 1500 bytes are clipped (the clip count is recorded on the dataset).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

MAX_PACKET_SIZE = 1500

SPLIT_SCHEMES = ("fewshot_folds", "train_val", "stratified_801010")


class DataError(Exception):
    """Raised for malformed dataset files or invalid split requests."""


@dataclass(frozen=True)
class PacketSeries:
    """Per-flow sequence of (timestamp, size[, direction]) records.

    Timestamps are seconds relative to the first packet; sizes are bytes
    in [1, 1500]; directions (+1 upstream / -1 downstream) are optional.
    """

    timestamps: np.ndarray
    sizes: np.ndarray
    directions: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "timestamps", np.asarray(self.timestamps, dtype=np.float64))
        object.__setattr__(self, "sizes", np.asarray(self.sizes, dtype=np.int64))
        if self.directions is not None:
            object.__setattr__(self, "directions", np.asarray(self.directions, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.timestamps)


@dataclass(frozen=True)
class FlowRecord:
    flow_id: str
    label: str
    series: PacketSeries
    partition: str | None = None


class Dataset:
    """Ordered list of flow records with a label -> indices index."""

    def __init__(self, records: list[FlowRecord], clip_count: int = 0):
        self.records = list(records)
        self.clip_count = clip_count
        self.class_index: dict[str, list[int]] = {}
        seen: set[str] = set()
        for i, rec in enumerate(self.records):
            if rec.flow_id in seen:
                raise DataError(f"duplicate flow_id {rec.flow_id!r}")
            seen.add(rec.flow_id)
            self.class_index.setdefault(rec.label, []).append(i)
        self._by_id = {rec.flow_id: rec for rec in self.records}

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def labels(self) -> list[str]:
        return sorted(self.class_index)

    def get(self, flow_id: str) -> FlowRecord:
        try:
            return self._by_id[flow_id]
        except KeyError:
            raise DataError(f"unknown flow_id {flow_id!r}") from None

    def subset(self, flow_ids) -> "Dataset":
        return Dataset([self.get(fid) for fid in flow_ids])

    def partitions(self) -> list[str]:
        return sorted({r.partition for r in self.records if r.partition is not None})

    def in_partition(self, partition: str) -> "Dataset":
        return Dataset([r for r in self.records if r.partition == partition])


def _parse_flow(obj: dict, lineno: int) -> tuple[FlowRecord, int]:
    for key in ("flow_id", "label", "timestamps", "sizes"):
        if key not in obj:
            raise DataError(f"line {lineno}: missing field {key!r}")
    ts = np.asarray(obj["timestamps"], dtype=np.float64)
    sizes = np.asarray(obj["sizes"], dtype=np.int64)
    if ts.size == 0:
        raise DataError(f"line {lineno}: empty packet series")
    if ts.size != sizes.size:
        raise DataError(f"line {lineno}: timestamps/sizes length mismatch")
    if np.any(np.diff(ts) < 0):
        raise DataError(f"line {lineno}: timestamps not nondecreasing")
    if np.any(sizes < 1):
        raise DataError(f"line {lineno}: zero-length packet")
    if not obj["label"]:
        raise DataError(f"line {lineno}: empty label")
    clipped = int(np.count_nonzero(sizes > MAX_PACKET_SIZE))
    sizes = np.minimum(sizes, MAX_PACKET_SIZE)
    ts = ts - ts[0]
    directions = obj.get("directions")
    if directions is not None:
        directions = np.asarray(directions, dtype=np.int64)
        if directions.size != ts.size:
            raise DataError(f"line {lineno}: directions length mismatch")
        if not np.all(np.isin(directions, (-1, 1))):
            raise DataError(f"line {lineno}: directions must be +-1")
    series = PacketSeries(ts, sizes, directions)
    return FlowRecord(obj["flow_id"], obj["label"], series, obj.get("partition")), clipped


def load_dataset(path) -> Dataset:
    """Load a JSONL flow dataset, rebasing timestamps and clipping sizes."""
    records = []
    clip_count = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            rec, clipped = _parse_flow(obj, lineno)
            records.append(rec)
            clip_count += clipped
    if not records:
        raise DataError(f"{path}: empty dataset file")
    return Dataset(records, clip_count)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset back to JSONL (inverse of load_dataset)."""
    with open(path, "w") as fh:
        for rec in dataset:
            obj = {
                "flow_id": rec.flow_id,
                "label": rec.label,
                "partition": rec.partition,
                "timestamps": rec.series.timestamps.tolist(),
                "sizes": rec.series.sizes.tolist(),
                "directions": None if rec.series.directions is None
                else rec.series.directions.tolist(),
            }
            fh.write(json.dumps(obj) + "\n")


def filter_min_packets(dataset: Dataset, n: int) -> Dataset:
    """Keep only flows with strictly more than `n` packets."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return Dataset([r for r in dataset if len(r.series) > n])


def filter_min_class_size(dataset: Dataset, m: int) -> Dataset:
    """Drop entire classes with fewer than `m` flows."""
    if m < 1:
        raise ValueError("m must be >= 1")
    keep = {label for label, idx in dataset.class_index.items() if len(idx) >= m}
    return Dataset([r for r in dataset if r.label in keep])


@dataclass
class SplitManifest:
    """Reproducible record of fold membership by flow id."""

    scheme: str
    seed: int
    folds: list[dict]  # each {"train_ids": [...], "val_ids": [...], "test_ids": [...]}
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scheme not in SPLIT_SCHEMES:
            raise DataError(f"unknown split scheme {self.scheme!r}")
        for fold in self.folds:
            parts = [set(fold["train_ids"]), set(fold["val_ids"]), set(fold["test_ids"])]
            total = sum(len(p) for p in parts)
            if len(parts[0] | parts[1] | parts[2]) != total:
                raise DataError("train/val/test id sets overlap within a fold")

    def validate_against(self, dataset: Dataset) -> None:
        """Check that every referenced flow id exists in the dataset."""
        known = set(dataset._by_id)
        for i, fold in enumerate(self.folds):
            for part in ("train_ids", "val_ids", "test_ids"):
                missing = set(fold[part]) - known
                if missing:
                    raise DataError(
                        f"fold {i} {part}: ids not in dataset: {sorted(missing)[:5]}"
                    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_fewshot_folds(dataset: Dataset, k: int, per_class: int, seed: int) -> SplitManifest:
    """Sample k disjoint folds of `per_class` flows per class, without replacement."""
    rng = np.random.default_rng(seed)
    fold_train: list[list[str]] = [[] for _ in range(k)]
    for label in dataset.labels:
        idx = dataset.class_index[label]
        if len(idx) < k * per_class:
            raise DataError(
                f"class {label!r} has {len(idx)} flows, "
                f"need {k * per_class} for {k} folds of {per_class}"
            )
        chosen = rng.choice(len(idx), size=k * per_class, replace=False)
        for f in range(k):
            part = chosen[f * per_class:(f + 1) * per_class]
            fold_train[f].extend(dataset.records[idx[j]].flow_id for j in part)
    folds = [{"train_ids": ids, "val_ids": [], "test_ids": []} for ids in fold_train]
    return SplitManifest(
        "fewshot_folds", seed, folds, {"k": k, "per_class": per_class}
    )


def make_train_val(dataset: Dataset, fold_ids, s: int, ratio: float, seed: int) -> list[dict]:
    """Split a fold's id set into s independent per-class train/val splits.

    Per class, |train| = round-half-up(ratio * N); train and val are
    disjoint and cover the fold.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    by_class: dict[str, list[str]] = {}
    for fid in fold_ids:
        by_class.setdefault(dataset.get(fid).label, []).append(fid)
    rng = np.random.default_rng(seed)
    splits = []
    for _ in range(s):
        train, val = [], []
        for label in sorted(by_class):
            ids = by_class[label]
            n_train = _round_half_up(ratio * len(ids))
            perm = rng.permutation(len(ids))
            train.extend(ids[j] for j in perm[:n_train])
            val.extend(ids[j] for j in perm[n_train:])
        splits.append({"train_ids": train, "val_ids": val})
    return splits


def make_stratified_split(dataset: Dataset, ratios: tuple, seed: int) -> SplitManifest:
    """Per-class stratified train/val/test partition.

    Val and test counts are round-half-up(ratio * class size); the
    remainder goes to train, preserving class imbalance.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive fractions")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for label in dataset.labels:
        idx = dataset.class_index[label]
        n = len(idx)
        if n < 3:
            raise DataError(f"class {label!r} has {n} flows; need >= 3 for a 3-way split")
        n_val = _round_half_up(ratios[1] * n)
        n_test = _round_half_up(ratios[2] * n)
        if n_val + n_test >= n:
            raise DataError(f"class {label!r}: no samples left for train")
        perm = rng.permutation(n)
        ids = [dataset.records[idx[j]].flow_id for j in perm]
        val.extend(ids[:n_val])
        test.extend(ids[n_val:n_val + n_test])
        train.extend(ids[n_val + n_test:])
    fold = {"train_ids": train, "val_ids": val, "test_ids": test}
    return SplitManifest("stratified_801010", seed, [fold], {"ratios": list(ratios)})


def save_manifest(manifest: SplitManifest, path) -> None:
    obj = {
        "scheme": manifest.scheme,
        "seed": manifest.seed,
        "folds": manifest.folds,
        "params": manifest.params,
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def load_manifest(path) -> SplitManifest:
    with open(path) as fh:
        obj = json.load(fh)
    for key in ("scheme", "seed", "folds", "params"):
        if key not in obj:
            raise DataError(f"manifest missing field {key!r}")
    for fold in obj["folds"]:
        for part in ("train_ids", "val_ids", "test_ids"):
            if part not in fold:
                raise DataError(f"manifest fold missing {part!r}")
    return SplitManifest(obj["scheme"], obj["seed"], obj["folds"], obj["params"])
