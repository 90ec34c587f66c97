import json
import sys

import numpy as np
import pytest

from flowpiclab.dataio import PacketSeries


def pytest_terminal_summary(terminalreporter):
    """Echo the one-line-per-criterion acceptance results after the run."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)


@pytest.fixture
def jsonl_file(tmp_path):
    """Write a list of flow dicts as a JSONL file and return the path."""

    def _write(flows, name="flows.jsonl"):
        path = tmp_path / name
        with open(path, "w") as fh:
            for flow in flows:
                fh.write(json.dumps(flow) + "\n")
        return path

    return _write


def flow_dict(flow_id, label, timestamps, sizes, directions=None, partition=None):
    return {
        "flow_id": flow_id,
        "label": label,
        "partition": partition,
        "timestamps": timestamps,
        "sizes": sizes,
        "directions": directions,
    }


def random_series(rng, n=50, window=15.0):
    t = np.sort(rng.uniform(0, window, n))
    t -= t[0]
    sizes = rng.integers(1, 1501, n)
    return PacketSeries(t, sizes)
