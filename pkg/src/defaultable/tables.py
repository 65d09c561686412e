"""Tabular results and the CSV output contract.

All artifacts are written as plain CSV: header row, 12 significant
digits for floats, '.' decimal separator, newline after the last row.
NaN or infinite values are refused with the offending column named.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import CsvValueError


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.12g}"
    # numpy scalars land here
    if hasattr(value, "item"):
        return format_value(value.item())
    return str(value)


@dataclass
class Table:
    columns: Sequence[str]
    rows: list = field(default_factory=list)

    def append(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(tuple(values))

    def column(self, name):
        i = list(self.columns).index(name)
        return [row[i] for row in self.rows]

    def to_csv_text(self) -> str:
        lines = [",".join(self.columns)]
        for r_idx, row in enumerate(self.rows):
            cells = []
            for col, value in zip(self.columns, row):
                v = value.item() if hasattr(value, "item") else value
                if isinstance(v, float) and not math.isfinite(v):
                    raise CsvValueError(col, r_idx)
                cells.append(format_value(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        text = self.to_csv_text()
        with open(path, "w", newline="") as fh:
            fh.write(text)


def emit_csv(table: Table, path):
    """Write a Table to disk under the output contract."""
    table.write_csv(path)
