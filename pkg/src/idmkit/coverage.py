"""Corridor construction and coverage-violation scoring.

A corridor is the band the model predicts around a deterministic delay
function once adversarial variation is included:

    lower(T) = center(T) - eta_minus(T)
    upper(T) = center(T) + eta_plus(T)

The coverage deviation of a measured sample set against a corridor is the
trapezoidal integral over T of the distance from each sample to the band
(zero inside), normalized by the covered T interval; it reads as the
average time deviation from the corridor.  Integration runs over the
sample set's own [min T, max T].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .bounds import EtaBounds, eta_minus, eta_plus
from .delay import DelayFunction
from .errors import InvalidArgument
from .fitting import FALLING, RISING, DelaySampleSet


@dataclass(frozen=True)
class Corridor:
    center: DelayFunction
    bounds: EtaBounds

    def lower(self, T: float) -> float:
        return self.center.eval(T) - eta_minus(self.bounds, T)

    def upper(self, T: float) -> float:
        return self.center.eval(T) + eta_plus(self.bounds, T)


def _distance(value: float, lo: float, hi: float) -> float:
    if value < lo:
        return lo - value
    if value > hi:
        return value - hi
    return 0.0


def coverage_deviation(samples: list[tuple[float, float]],
                       corridor: Corridor) -> float:
    """Average distance from the samples to the corridor band.

    Samples must be sorted by T (DelaySampleSet edges are).  Fewer than two
    samples leave no interval to integrate over.
    """
    if len(samples) < 2:
        raise InvalidArgument("need at least two samples to integrate")
    ts = [s[0] for s in samples]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise InvalidArgument("samples must be strictly increasing in T")
    dist = [_distance(d, corridor.lower(T), corridor.upper(T))
            for T, d in samples]
    total = 0.0
    for i in range(len(ts) - 1):
        total += 0.5 * (dist[i] + dist[i + 1]) * (ts[i + 1] - ts[i])
    return total / (ts[-1] - ts[0])


@dataclass(frozen=True)
class CornerRow:
    corner: str
    edge: str
    deviation_old: float
    deviation_new: float


@dataclass(frozen=True)
class CornerReport:
    rows: list[CornerRow]

    def aggregate(self) -> tuple[float, float]:
        """Mean (old, new) deviation over all corners and edges."""
        if not self.rows:
            return (0.0, 0.0)
        old = sum(r.deviation_old for r in self.rows) / len(self.rows)
        new = sum(r.deviation_new for r in self.rows) / len(self.rows)
        return old, new


def compare_corners(baseline, corners: list[DelaySampleSet],
                    bounds_old: EtaBounds, bounds_new: EtaBounds) -> CornerReport:
    """Score every corner sample set against both corridor variants.

    ``baseline`` is the fitted pair whose up/down functions are the
    corridor centers.
    """
    rows = []
    for corner in corners:
        for edge, fn in ((RISING, baseline.up), (FALLING, baseline.down)):
            data = corner.edge(edge)
            if len(data) < 2:
                continue
            dev_old = coverage_deviation(data, Corridor(fn, bounds_old))
            dev_new = coverage_deviation(data, Corridor(fn, bounds_new))
            rows.append(CornerRow(corner=corner.source_label, edge=edge,
                                  deviation_old=dev_old, deviation_new=dev_new))
    return CornerReport(rows=rows)


def write_corner_csv(path, report: CornerReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["corner", "edge", "deviation_old_fs", "deviation_new_fs"])
        for r in report.rows:
            w.writerow([r.corner, r.edge, repr(r.deviation_old), repr(r.deviation_new)])
        old, new = report.aggregate()
        w.writerow(["aggregate", "both", repr(old), repr(new)])


def read_corner_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
