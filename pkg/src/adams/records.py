"""Per-step trajectory logs with deterministic CSV round trips."""

from __future__ import annotations

import os
from typing import Sequence


def format_value(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int,)):
        return str(x)
    if isinstance(x, float):
        if x == int(x) and abs(x) < 1e15:
            return repr(x)
        return repr(x)
    return str(x)


class TrajectoryRecord:
    """Column-ordered rows of per-step scalars plus run-level flags.

    Steps must be strictly increasing; cosine columns stay in [-1, 1].
    """

    def __init__(self, columns: Sequence[str]):
        if "step" not in columns:
            raise ValueError("a trajectory needs a 'step' column")
        self.columns = list(columns)
        self.rows: list[list[float]] = []
        self.flags: dict = {"diverged": False}

    def add_row(self, **values) -> None:
        missing = set(self.columns) - set(values)
        extra = set(values) - set(self.columns)
        if missing or extra:
            raise ValueError(f"row mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        step = values["step"]
        if self.rows and step <= self.rows[-1][self.columns.index("step")]:
            raise ValueError(f"steps must be strictly increasing, got {step}")
        for col in self.columns:
            if col.startswith("cos") and not (-1.0 - 1e-12 <= values[col] <= 1.0 + 1e-12):
                raise ValueError(f"{col}={values[col]} outside [-1, 1]")
        self.rows.append([values[c] for c in self.columns])

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[float]:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def to_csv_text(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(format_value(v) for v in row))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv_text())
        os.replace(tmp, path)

    @classmethod
    def from_csv(cls, path) -> "TrajectoryRecord":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh if line.strip()]
        rec = cls(lines[0].split(","))
        for line in lines[1:]:
            rec.rows.append([float(tok) for tok in line.split(",")])
        return rec


def write_table(path, columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Plain CSV writer used for non-trajectory tables; returns the text."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    text = "\n".join(lines) + "\n"
    if path is not None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    return text
