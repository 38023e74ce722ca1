import math
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

SEQUENCE_COLUMNS = ["index", "gh_epsilon", "ck_norm", "boundary_distance"]


def sequence_table(rows: Sequence[Mapping[str, Any]]) -> pd.DataFrame:
    """
    One row per sequence member, sorted by index. Columns missing from the
    rows are filled with NaN so the CSV layout never changes.
    """
    table = pd.DataFrame.from_records(list(rows))
    for column in SEQUENCE_COLUMNS:
        if column not in table.columns:
            table[column] = math.nan
    extra = [c for c in table.columns if c not in SEQUENCE_COLUMNS]
    table = table[SEQUENCE_COLUMNS + extra]
    table = table.sort_values(by="index", ascending=True).reset_index(drop=True)
    table["index"] = table["index"].astype(int)
    return table


def is_decreasing(values: pd.Series, *, tol: float = 0.0) -> bool | None:
    """
    Whether the finite values fall from each one to the next by more than
    `tol`. A negative `tol` allows rises of up to |tol|. None without values.
    """
    finite = values.dropna()
    finite = finite[finite.map(math.isfinite)]
    if finite.empty:
        return None
    steps = finite.diff().iloc[1:]
    return bool((steps < -tol).all())


def monotonicity(
    table: pd.DataFrame, columns: Sequence[str], tolerance: float
) -> dict[str, dict[str, bool | None]]:
    """Per column: strictly decreasing, and non-increasing within `tolerance`."""
    return {
        column: {
            "decreasing": is_decreasing(table[column]),
            "non_increasing": is_decreasing(table[column], tol=-tolerance),
        }
        for column in columns
    }


def records(table: pd.DataFrame) -> list[dict[str, Any]]:
    """Rows as plain dicts, with NaN and infinities as None for JSON."""
    return [
        {key: _plain(value) for key, value in row.items()}
        for row in table.to_dict(orient="records")
    ]


def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_table(
    table: pd.DataFrame, path: Path, columns: Sequence[str] | None = None
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, columns=columns, index=False, float_format="%.12g")
