"""Scaling-efficiency and percent-of-peak reports, plus the published-table fixtures."""

from .core import (PerfRecord, ScalingRecord, ScalingReport, ScalingRow, compute_percent_of_peak,
                   compute_scaling_report, parse_report_csv, records_from_csv, records_to_csv, render_table)
from .fixtures import (ALL_TABLES, FIXTURE_VERSION, PERF_TABLE, SCALING_TABLES, SNG_NODE_PEAK, Discrepancy,
                       PrintedPerfRow, PrintedRow, fixture_text, load_table, verify_published_tables)

__all__ = [
    "ALL_TABLES", "Discrepancy", "FIXTURE_VERSION", "PERF_TABLE", "PerfRecord", "PrintedPerfRow", "PrintedRow",
    "SCALING_TABLES", "SNG_NODE_PEAK", "ScalingRecord", "ScalingReport", "ScalingRow", "compute_percent_of_peak",
    "compute_scaling_report", "fixture_text", "load_table", "parse_report_csv", "records_from_csv",
    "records_to_csv", "render_table", "verify_published_tables",
]
