"""Loader for the embedded reference-value table.

``data/golden_tables.csv`` holds every numeric cell of the published
reference tables T1-T5, one row per cell, with the table id as provenance
column so reproduction tolerances stay auditable:

    T1  per-level parameters and capacity at kappa = -1.5 (levels 1, 2p, 2f)
    T2  level-2f parameters + capacity over ten kappa values
    T3  capacity progression (levels 1, 2p, 2f) over four kappa values
    T4  level-3f parameters + capacity over four kappa values
    T5  capacity progression including 3f over four kappa values
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources


@dataclass(frozen=True)
class GoldenCell:
    table: str
    kappa: float
    level: str
    quantity: str
    value: float
    kind: str  # "capacity" | "param"


def load_golden() -> list[GoldenCell]:
    text = resources.files("nsperc").joinpath("data/golden_tables.csv").read_text()
    out = []
    for row in csv.DictReader(text.splitlines()):
        out.append(GoldenCell(
            table=row["table"],
            kappa=float(row["kappa"]),
            level=row["level"],
            quantity=row["quantity"],
            value=float(row["value"]),
            kind=row["kind"],
        ))
    return out


def golden_table(table: int | str) -> list[GoldenCell]:
    cells = [c for c in load_golden() if c.table == str(table)]
    if not cells:
        raise ValueError(f"unknown table {table!r}")
    return cells


def golden_value(table, kappa, level, quantity) -> float:
    for c in golden_table(table):
        if c.kappa == kappa and c.level == level and c.quantity == quantity:
            return c.value
    raise KeyError((table, kappa, level, quantity))
