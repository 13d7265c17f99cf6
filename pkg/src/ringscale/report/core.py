"""Linear-baseline scaling efficiency and percent-of-peak arithmetic.

Efficiency is the linear (ideal) epoch time divided by the measured one,
with the linear time extrapolated from a base record:
``linear(n) = base.time * base.units / n``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from ..errors import EmptyInput, NonPositiveTime, ValidationError


@dataclass(frozen=True)
class ScalingRecord:
    units: int
    epoch_time_s: float

    def __post_init__(self):
        if self.units < 1:
            raise ValidationError(f"units must be >= 1, got {self.units}")
        if not self.epoch_time_s > 0:
            raise NonPositiveTime(f"epoch time must be positive, got {self.epoch_time_s} at {self.units} units")


@dataclass(frozen=True)
class ScalingRow:
    units: int
    epoch_time_s: float
    linear_time_s: float
    efficiency: float | None  # None on the base row

    @property
    def superlinear(self):
        return self.efficiency is not None and self.efficiency > 1.0


@dataclass(frozen=True)
class ScalingReport:
    base: ScalingRecord
    rows: tuple

    @property
    def records(self):
        return [ScalingRecord(r.units, r.epoch_time_s) for r in self.rows]

    @property
    def superlinear_rows(self):
        return [r for r in self.rows if r.superlinear]


@dataclass(frozen=True)
class PerfRecord:
    units: int
    measured_pflops: float
    pct_of_peak: float  # fraction of the peak, 1.0 == 100%


def compute_scaling_report(records, base_units=None) -> ScalingReport:
    """Rows of (units, time, linear time, efficiency) relative to a base record.

    The base is the first (smallest) record unless *base_units* names another.
    Superlinear efficiencies are kept as-is and listed in ``superlinear_rows``.
    """
    records = [r if isinstance(r, ScalingRecord) else ScalingRecord(int(r[0]), float(r[1])) for r in records]
    if not records:
        raise EmptyInput("no scaling records")
    if any(b.units <= a.units for a, b in zip(records, records[1:])):
        raise ValidationError("unit counts must be strictly increasing")
    if base_units is None:
        base = records[0]
    else:
        matches = [r for r in records if r.units == base_units]
        if not matches:
            raise ValidationError(f"no record with {base_units} units to use as base")
        base = matches[0]
    rows = []
    for r in records:
        linear = base.epoch_time_s * base.units / r.units
        eff = None if r is base else linear / r.epoch_time_s
        rows.append(ScalingRow(r.units, r.epoch_time_s, linear, eff))
    return ScalingReport(base, tuple(rows))


def compute_percent_of_peak(records, node_peak_flops) -> list[PerfRecord]:
    """*records* are ``(units, measured_pflops)``; peak is per node, in FLOP/s."""
    if not node_peak_flops > 0:
        raise ValidationError("node peak must be positive")
    node_peak_pflops = node_peak_flops / 1e15
    return [PerfRecord(int(u), float(m), float(m) / (int(u) * node_peak_pflops)) for u, m in records]


def _num(x):
    if abs(x) < 1:
        return f"{x:.4g}"
    s = f"{x:.2f}"
    return s.rstrip("0").rstrip(".")


MARKDOWN_HEADER = ("Nodes", "Training Time(s) per Epoch", "Linear Time(s) per Epoch", "Scaling Efficiency")
CSV_HEADER = ("units", "time_s", "linear_s", "efficiency")


def render_table(report: ScalingReport, fmt="markdown", unit_label="Nodes") -> str:
    if fmt == "markdown":
        header = (unit_label,) + MARKDOWN_HEADER[1:]
        lines = [" | ".join(header), " | ".join("---" for _ in header)]
        for r in report.rows:
            eff = "-" if r.efficiency is None else f"{100 * r.efficiency:.1f}%"
            lines.append(f"{r.units} | {_num(r.epoch_time_s)} | {_num(r.linear_time_s)} | {eff}")
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in report.rows:
            writer.writerow([r.units, repr(r.epoch_time_s), repr(r.linear_time_s),
                             "" if r.efficiency is None else repr(r.efficiency)])
        return buf.getvalue()
    raise ValidationError(f"unknown table format {fmt!r}")


def parse_report_csv(text) -> ScalingReport:
    """Inverse of ``render_table(..., "csv")``: recompute from units/time and base."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise EmptyInput("no rows in report CSV")
    if tuple(rows[0].keys()) != CSV_HEADER:
        raise ValidationError(f"expected header {','.join(CSV_HEADER)}")
    bases = [int(r["units"]) for r in rows if r["efficiency"] == ""]
    if len(bases) != 1:
        raise ValidationError("report CSV must mark exactly one base row")
    records = [ScalingRecord(int(r["units"]), float(r["time_s"])) for r in rows]
    return compute_scaling_report(records, base_units=bases[0])


def records_to_csv(records) -> str:
    """``workers,epoch_time_s`` with 6 significant digits."""
    lines = ["workers,epoch_time_s"]
    lines += [f"{r.units},{r.epoch_time_s:.6g}" for r in records]
    return "\n".join(lines) + "\n"


def records_from_csv(text) -> list[ScalingRecord]:
    """Read ``workers,epoch_time_s`` (or ``units,time_s``) rows."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise EmptyInput("empty records file")
    header = [h.strip() for h in header]
    if header[:2] not in (["workers", "epoch_time_s"], ["units", "time_s"], ["units", "epoch_time_s"]):
        raise ValidationError(f"unrecognised records header {','.join(header)}")
    out = []
    for row in reader:
        if not row or not "".join(row).strip():
            continue
        try:
            out.append(ScalingRecord(int(row[0]), float(row[1])))
        except (ValueError, IndexError):
            raise ValidationError(f"bad record row {','.join(row)}") from None
    if not out:
        raise EmptyInput("no records")
    return out
