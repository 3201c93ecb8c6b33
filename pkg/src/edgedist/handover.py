"""Handover performance measures derived from edge-distance distributions.

Expected packet loss as a function of handover anticipation time, its grid
argmin, and multicast forwarding-state persistence under source mobility.
Packets flow at a constant bit rate of one per 10 ms, so expected packet
counts are loss durations divided by 10.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path

from .stats import HOP_COUNT, RTT_MS, EdgeDistribution

CBR_INTERVAL_MS = 10.0

TABLE = "table"
DEFAULT_PARAMETRIC = "default_parametric"


@dataclass(frozen=True)
class LossTable:
    """Grid of expected loss duration indexed by delay and anticipation.

    Queries interpolate bilinearly inside the axes and refuse to extrapolate:
    silent extrapolation would fabricate physics.
    """

    delay_axis: tuple[float, ...]
    anticipation_axis: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]  # values[i][j] for (delay_i, anticipation_j)

    def __post_init__(self):
        for axis in (self.delay_axis, self.anticipation_axis):
            if len(axis) < 2 or any(b <= a for a, b in zip(axis, axis[1:])):
                raise ValueError("table axes must be strictly increasing, length >= 2")
        if len(self.values) != len(self.delay_axis) or any(
            len(row) != len(self.anticipation_axis) for row in self.values
        ):
            raise ValueError("table shape does not match its axes")
        if any(v < 0 for row in self.values for v in row):
            raise ValueError("loss values must be >= 0")

    def lookup(self, delay_ms: float, anticipation_ms: float) -> float:
        di, dw = _locate(self.delay_axis, delay_ms, "delay")
        ai, aw = _locate(self.anticipation_axis, anticipation_ms, "anticipation")
        v00 = self.values[di][ai]
        v01 = self.values[di][ai + 1] if aw else v00
        v10 = self.values[di + 1][ai] if dw else v00
        v11 = self.values[di + 1][ai + 1] if dw and aw else (v10 if not aw else v01)
        top = v00 * (1 - aw) + v01 * aw
        bottom = v10 * (1 - aw) + v11 * aw
        return top * (1 - dw) + bottom * dw


def _locate(axis: tuple[float, ...], value: float, label: str) -> tuple[int, float]:
    if value < axis[0] or value > axis[-1]:
        raise ValueError(
            f"{label} {value} outside table axis [{axis[0]}, {axis[-1]}]"
        )
    if value == axis[-1]:
        return len(axis) - 2, 1.0
    idx = bisect_left(axis, value)
    if axis[idx] == value:
        return idx, 0.0
    idx -= 1
    return idx, (value - axis[idx]) / (axis[idx + 1] - axis[idx])


@dataclass(frozen=True)
class LossModel:
    """Conditional expectation of loss duration given delay and anticipation.

    The default parametric form L(d, a) = max(0, d - a) + beta * a captures
    the trade-off: anticipating too little loses in-flight packets, while
    anticipation itself carries a proportional cost.  L(d, 0) = d is the
    reactive handover.  A table model reproduces any externally published
    curve instead.
    """

    kind: str = DEFAULT_PARAMETRIC
    beta: float = 0.1
    table: LossTable | None = None

    def __post_init__(self):
        if self.kind not in (TABLE, DEFAULT_PARAMETRIC):
            raise ValueError(f"unknown loss model kind {self.kind!r}")
        if self.kind == TABLE and self.table is None:
            raise ValueError("table model needs a table")

    def loss(self, delay_ms: float, anticipation_ms: float) -> float:
        if self.kind == TABLE:
            return self.table.lookup(delay_ms, anticipation_ms)
        return max(0.0, delay_ms - anticipation_ms) + self.beta * anticipation_ms


def load_loss_table(path: str | Path) -> LossTable:
    """CSV with the anticipation axis in the first row and the delay axis in
    the first column; cells are loss durations in ms."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if len(rows) < 2:
        raise ValueError(f"{path}: table needs a header row and data rows")
    anticipation_axis = tuple(float(x) for x in rows[0][1:])
    delay_axis = []
    values = []
    for row in rows[1:]:
        delay_axis.append(float(row[0]))
        values.append(tuple(float(x) for x in row[1:]))
    return LossTable(
        delay_axis=tuple(delay_axis),
        anticipation_axis=anticipation_axis,
        values=tuple(values),
    )


def expected_loss_curve(
    delay_dist: EdgeDistribution,
    model: LossModel,
    anticipation_grid: list[float],
    delay_scale: float = 0.5,
) -> list[tuple[float, float, float]]:
    """Expected loss duration and packet count per anticipation grid point.

    One-way inter-access-router delays come from the RTT distribution via
    ``delay_scale`` (default 0.5).  The expectation runs over the raw RTT
    samples, so the reactive point a=0 equals delay_scale times the
    distribution mean exactly under the default model.
    """
    if delay_dist.metric != RTT_MS:
        raise ValueError("expected_loss_curve needs an RTT distribution")
    if not anticipation_grid:
        raise ValueError("anticipation grid must be non-empty")
    if any(a < 0 for a in anticipation_grid):
        raise ValueError("anticipation times must be >= 0")
    if delay_scale <= 0:
        raise ValueError("delay_scale must be positive")
    curve = []
    for a in anticipation_grid:
        total = sum(model.loss(delay_scale * rtt, a) for rtt in delay_dist.samples)
        loss = total / delay_dist.n
        curve.append((a, loss, loss / CBR_INTERVAL_MS))
    return curve


@dataclass(frozen=True)
class AnticipationOptimum:
    anticipation_ms: float
    expected_loss_ms: float
    flat: bool


def argmin_anticipation(
    curve: list[tuple[float, float, float]],
    flat_threshold: float = 0.05,
) -> AnticipationOptimum:
    """Grid point of minimal expected loss; ties go to the smallest
    anticipation.  The curve counts as flat (no significant optimum) when its
    max-min spread is below ``flat_threshold`` times the curve mean."""
    if not curve:
        raise ValueError("empty curve")
    losses = [loss for _, loss, _ in curve]
    best_a, best_loss, _ = min(curve, key=lambda row: (row[1], row[0]))
    spread = max(losses) - min(losses)
    mean = sum(losses) / len(losses)
    flat = spread < flat_threshold * mean
    return AnticipationOptimum(anticipation_ms=best_a, expected_loss_ms=best_loss, flat=flat)


@dataclass(frozen=True)
class PersistenceTable:
    """Forwarding-state persistence ratio per hop distance.

    No extrapolation: every hop value carrying probability mass must be
    covered explicitly.
    """

    entries: dict[int, float]

    def __post_init__(self):
        for hop, ratio in self.entries.items():
            if not 0.0 <= ratio <= 1.0:
                raise ValueError(f"persist ratio {ratio} at hop {hop} outside [0, 1]")


def load_persistence_table(path: str | Path) -> PersistenceTable:
    """CSV hop,persist_ratio with header."""
    entries: dict[int, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"hop", "persist_ratio"}.issubset(reader.fieldnames):
            raise ValueError(f"{path}: header must contain ['hop', 'persist_ratio']")
        for row in reader:
            entries[int(row["hop"])] = float(row["persist_ratio"])
    return PersistenceTable(entries=entries)


def multicast_persistence(
    hop_dist: EdgeDistribution, table: PersistenceTable
) -> float:
    """Expected fraction of multicast forwarding states surviving a source
    handover: sum over hop distances of P(h) * persist_ratio(h)."""
    if hop_dist.metric != HOP_COUNT:
        raise ValueError("multicast_persistence needs a hop-count distribution")
    hops = [int(round(v)) for v in hop_dist.samples]
    missing = sorted({h for h in hops if h not in table.entries})
    if missing:
        raise ValueError(f"persistence table misses hop distances {missing}")
    return math.fsum(table.entries[h] for h in hops) / len(hops)
