"""The published scaling tables, shipped as a versioned CSV bundle, and the
cell-by-cell recomputation that checks them."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources

from ..errors import ValidationError
from .core import compute_percent_of_peak, compute_scaling_report

FIXTURE_VERSION = "v1"
SCALING_TABLES = (1, 2, 3, 4, 5, 6)
PERF_TABLE = 7
ALL_TABLES = SCALING_TABLES + (PERF_TABLE,)

# fp64 peak of one SNG node at nominal clock: 48 x 2.7 GHz x 2 FMA x 8 lanes x 2
SNG_NODE_PEAK = 48 * 2.7e9 * 2 * 8 * 2


@dataclass(frozen=True)
class PrintedRow:
    units: int
    time_s: float
    linear_s: float
    efficiency_pct: float | None


@dataclass(frozen=True)
class PrintedPerfRow:
    units: int
    measured_pflops: float
    pct_peak: float


@dataclass(frozen=True)
class Discrepancy:
    table: int
    units: int
    column: str
    printed: float
    recomputed: float

    @property
    def delta(self):
        return self.recomputed - self.printed


def fixture_text(table):
    if table not in ALL_TABLES:
        raise ValidationError(f"no fixture for table {table}")
    return resources.files(__package__).joinpath("data", FIXTURE_VERSION, f"table{table}.csv").read_text("utf-8")


def load_table(table):
    rows = list(csv.DictReader(io.StringIO(fixture_text(table))))
    if table == PERF_TABLE:
        return [PrintedPerfRow(int(r["units"]), float(r["measured_pflops"]), float(r["pct_peak"])) for r in rows]
    return [PrintedRow(int(r["units"]), float(r["time_s"]), float(r["linear_s"]),
                       None if r["efficiency_pct"] == "-" else float(r["efficiency_pct"]))
            for r in rows]


def verify_published_tables(tables=None, tolerance_pp=0.15, tolerance_linear=0.005,
                            tolerance_peak_pp=0.3, node_peak=SNG_NODE_PEAK) -> list[Discrepancy]:
    """Recompute every derived cell from the measured column and list the misfits.

    Linear time is flagged when it is off by more than *tolerance_linear*
    (relative), efficiency and percent-of-peak when off by more than their
    percentage-point tolerances.
    """
    out = []
    for table in tables or ALL_TABLES:
        rows = load_table(table)
        if table == PERF_TABLE:
            perf = compute_percent_of_peak([(r.units, r.measured_pflops) for r in rows], node_peak)
            for printed, got in zip(rows, perf):
                if abs(100 * got.pct_of_peak - printed.pct_peak) > tolerance_peak_pp:
                    out.append(Discrepancy(table, printed.units, "pct_peak", printed.pct_peak, 100 * got.pct_of_peak))
            continue
        report = compute_scaling_report([(r.units, r.time_s) for r in rows])
        for printed, got in zip(rows, report.rows):
            if abs(got.linear_time_s - printed.linear_s) > tolerance_linear * abs(printed.linear_s):
                out.append(Discrepancy(table, printed.units, "linear_s", printed.linear_s, got.linear_time_s))
            if printed.efficiency_pct is not None and got.efficiency is not None:
                if abs(100 * got.efficiency - printed.efficiency_pct) > tolerance_pp:
                    out.append(Discrepancy(table, printed.units, "efficiency_pct",
                                           printed.efficiency_pct, 100 * got.efficiency))
    return out
