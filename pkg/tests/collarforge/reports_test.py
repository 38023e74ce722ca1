import math

import numpy as np
import pandas as pd
import pytest

from collarforge.reports import (
    SEQUENCE_COLUMNS,
    is_decreasing,
    monotonicity,
    records,
    sequence_table,
    write_table,
)


@pytest.fixture
def sequence_rows():
    # Members arrive out of order and without C^k norms.
    return [
        {"index": 4, "gh_epsilon": 0.0, "boundary_distance": 1.0},
        {"index": 1, "gh_epsilon": 0.4, "boundary_distance": 1.0},
        {"index": 2, "gh_epsilon": 0.1, "boundary_distance": 1.0, "extra": 7.0},
    ]


def test_sequence_table(sequence_rows):
    table = sequence_table(sequence_rows)
    assert list(table.columns) == SEQUENCE_COLUMNS + ["extra"]
    assert table["index"].tolist() == [1, 2, 4]
    assert table["ck_norm"].isna().all()
    assert table.loc[1, "extra"] == 7.0


@pytest.mark.parametrize(
    "values, tol, expected",
    [
        ([3.0, 2.0, 1.0], 0.0, True),
        ([3.0, 3.0, 1.0], 0.0, False),
        ([3.0, 3.0, 1.0], -1e-6, True),
        ([3.0, 3.1, 1.0], -1e-6, False),
        ([math.nan, 2.0, math.inf, 1.0], 0.0, True),
        ([math.nan, math.nan], 0.0, None),
        ([5.0], 0.0, True),
    ],
)
def test_is_decreasing(values, tol, expected):
    assert is_decreasing(pd.Series(values), tol=tol) is expected


def test_monotonicity(sequence_rows):
    table = sequence_table(sequence_rows)
    summary = monotonicity(table, ["gh_epsilon", "ck_norm"], 0.0)
    assert summary == {
        "gh_epsilon": {"decreasing": True, "non_increasing": True},
        "ck_norm": {"decreasing": None, "non_increasing": None},
    }


def test_records_are_plain():
    table = pd.DataFrame(
        {"index": [1], "gh_epsilon": [np.float64(0.5)], "ck_norm": [math.nan]}
    )
    table["boundary_distance"] = math.inf
    row = records(table)[0]
    assert row == {
        "index": 1,
        "gh_epsilon": 0.5,
        "ck_norm": None,
        "boundary_distance": None,
    }
    assert type(row["index"]) is int


def test_write_table(tmp_path, sequence_rows):
    path = tmp_path / "out" / "sequence.csv"
    write_table(sequence_table(sequence_rows), path, SEQUENCE_COLUMNS)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,gh_epsilon,ck_norm,boundary_distance"
    assert lines[1] == "1,0.4,,1"
