"""Provide tests for CSV storage interface."""

# Authors: The espsim developers
# License: AGPL

from pathlib import Path

import pandas as pd
import pytest
from pandas.testing import assert_frame_equal

from espsim.pipeline.registry import build
from espsim.storage import BaseReportStorage, CSVReportStorage
from espsim.testing import make_report


sweep = pd.DataFrame(
    {"rate": [5.0, 10.0, 20.0], "slo_attainment": [0.99, 0.95, 0.4]}
)


def test_directory_creation(tmp_path: Path) -> None:
    """Test the output directory is created.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.

    """
    uri = tmp_path / "nested" / "results"
    storage = CSVReportStorage(uri=uri)
    assert uri.is_dir()
    assert storage.list_tables() == []
    with pytest.raises(ValueError, match="Table metrics not found"):
        storage.read_df("metrics")


def test_store_metrics_and_requests(tmp_path: Path) -> None:
    """Test storing a report and reading it back.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.

    """
    report = make_report()
    storage = CSVReportStorage(uri=tmp_path)
    storage.store_metrics("esp", report)
    storage.store("requests", name="esp", frame=report.requests)
    assert storage.list_tables() == ["metrics", "requests"]
    metrics = storage.read_df("metrics")
    assert metrics.index.tolist() == ["esp"]
    assert metrics.loc["esp", "n_finished"] == 2
    assert metrics.loc["esp", "mean_latency"] == pytest.approx(0.875)
    requests = storage.read_df("requests")
    assert requests.index.names == ["run", "request"]
    assert requests.loc[("esp", 1), "latency"] == 8.0
    # Records mirror the table
    records = pd.read_json(tmp_path / "metrics.jsonl", lines=True)
    assert records["run"].tolist() == ["esp"]
    assert records["n_requests"].tolist() == [2]


def test_store_sweep(tmp_path: Path) -> None:
    """Test one row per rate in rate order.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.

    """
    storage = CSVReportStorage(uri=tmp_path)
    storage.store_sweep("esp", sweep)
    storage.store_sweep("chunked", sweep.iloc[:2])
    stored = storage.read_df("sweep")
    assert len(stored) == 5
    assert_frame_equal(
        stored.loc["esp"].reset_index(drop=True), sweep, check_dtype=False
    )
    assert stored.loc["chunked"].index.tolist() == [0, 1]


@pytest.mark.parametrize(
    "upsert, expected",
    [
        ("update", [0.5, 0.25, 0.125]),
        ("ignore", [0.99, 0.95, 0.4]),
    ],
)
def test_upsert(tmp_path: Path, upsert: str, expected: list) -> None:
    """Test storing a run twice.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.
    upsert : str
        The parametrized upsert mode.
    expected : list
        The expected stored attainments.

    """
    storage = CSVReportStorage(uri=tmp_path, upsert=upsert)
    storage.store_sweep("esp", sweep)
    storage.store_sweep("other", sweep)
    again = sweep.assign(slo_attainment=[0.5, 0.25, 0.125])
    if upsert == "ignore":
        with pytest.warns(RuntimeWarning, match="already stored"):
            storage.store_sweep("esp", again)
    else:
        storage.store_sweep("esp", again)
    stored = storage.read_df("sweep")
    assert len(stored) == 6
    assert stored.loc["esp", "slo_attainment"].tolist() == expected
    assert stored.loc["other", "slo_attainment"].tolist() == [
        0.99,
        0.95,
        0.4,
    ]


def test_build_from_registry(tmp_path: Path) -> None:
    """Test building the storage by name.

    Parameters
    ----------
    tmp_path : pathlib.Path
        The path to the test directory.

    """
    storage = build(
        step="storage",
        name="CSVReportStorage",
        baseclass=BaseReportStorage,
        init_params={"uri": tmp_path},
    )
    assert isinstance(storage, CSVReportStorage)
    assert str(storage) == f"<CSVReportStorage @ {tmp_path}>"
