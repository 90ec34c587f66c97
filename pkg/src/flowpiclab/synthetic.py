"""Synthetic flow generator with class-separable burst patterns.

Each class owns a disjoint packet-size band and a characteristic set of
burst times, so any reasonable classifier separates the classes; used by
the test suite and for demo campaigns without external data.
"""

from __future__ import annotations

import numpy as np

from .dataio import Dataset, FlowRecord, PacketSeries, save_dataset

DEFAULT_WINDOW = 15.0


def make_synthetic_dataset(num_classes=5, flows_per_class=500, seed=0,
                           window=DEFAULT_WINDOW, test_fraction=0.2,
                           packets_lo=40, packets_hi=120) -> Dataset:
    """Classes occupy disjoint size bands with class-specific burst times.

    Flows carry partition tags "train" / "test" (stratified by class);
    labels are "class00".."classNN".
    """
    rng = np.random.default_rng(seed)
    band = 1500 // num_classes
    records = []
    for c in range(num_classes):
        lo = 1 + c * band
        hi = min((c + 1) * band, 1500)
        # 3 characteristic burst centers per class, stable across flows
        burst_rng = np.random.default_rng(1000 + c)
        bursts = burst_rng.uniform(0.05 * window, 0.95 * window, size=3)
        n_test = int(round(flows_per_class * test_fraction))
        for i in range(flows_per_class):
            n_packets = int(rng.integers(packets_lo, packets_hi + 1))
            centers = rng.choice(bursts, size=n_packets)
            t = np.clip(centers + rng.normal(0, 0.3, n_packets), 0, window * 0.999)
            t.sort()
            t -= t[0]
            sizes = rng.integers(lo, hi + 1, size=n_packets)
            directions = rng.choice([-1, 1], size=n_packets)
            partition = "test" if i < n_test else "train"
            records.append(FlowRecord(
                flow_id=f"c{c:02d}_f{i:04d}",
                label=f"class{c:02d}",
                series=PacketSeries(t, sizes, directions),
                partition=partition,
            ))
    return Dataset(records)


def write_synthetic_dataset(path, **kwargs) -> Dataset:
    dataset = make_synthetic_dataset(**kwargs)
    save_dataset(dataset, path)
    return dataset
