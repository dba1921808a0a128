"""Error statistics of module prices against a reference feed."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from linkxplore.errors import EmptySample


@dataclass(frozen=True)
class SamplePoint:
    asset: str
    t: float
    predicted: float
    reference: float

    @property
    def error(self) -> float:
        return self.predicted - self.reference


@dataclass(frozen=True)
class ErrorStats:
    n: int
    mse: float
    mean_err: float
    sd: float | None
    mape_pct: float | None
    n_pct: int


def _stats(points: Sequence[SamplePoint]) -> ErrorStats:
    n = len(points)
    if n == 0:
        raise EmptySample("no sample points")
    errors = [p.error for p in points]
    mse = math.fsum(e * e for e in errors) / n
    mean_err = math.fsum(errors) / n
    sd = math.sqrt(math.fsum((e - mean_err) ** 2 for e in errors) / (n - 1)) if n > 1 else None
    pct = [abs(p.error / p.reference) for p in points if p.reference > 0]
    mape = 100.0 * math.fsum(pct) / len(pct) if pct else None
    return ErrorStats(n, mse, mean_err, sd, mape, len(pct))


def per_asset_stats(points: Sequence[SamplePoint]) -> ErrorStats:
    assets = {p.asset for p in points}
    if len(assets) > 1:
        raise ValueError(f"expected one asset, got {sorted(assets)}")
    return _stats(points)


def pooled_stats(points: Sequence[SamplePoint]) -> ErrorStats:
    """Stats over the concatenation of every asset's points."""
    return _stats(points)


def group_by_asset(points: Iterable[SamplePoint]) -> dict[str, list[SamplePoint]]:
    groups: dict[str, list[SamplePoint]] = {}
    for p in points:
        groups.setdefault(p.asset, []).append(p)
    return dict(sorted(groups.items()))


def load_samples(path: str | Path) -> list[SamplePoint]:
    """CSV with columns ``asset,timestamp,predicted,reference``."""
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            SamplePoint(row["asset"], float(row["timestamp"]), float(row["predicted"]), float(row["reference"]))
            for row in csv.DictReader(fh)
        ]


def _cell(x: float | None, digits: int) -> str:
    return "-" if x is None else f"{x:.{digits}f}"


def render_table(points: Sequence[SamplePoint]) -> str:
    """Per-asset rows followed by the pooled row."""
    rows = [("asset", "n", "MSE", "SD", "MAPE %")]
    for asset, group in group_by_asset(points).items():
        s = per_asset_stats(group)
        rows.append((asset, str(s.n), _cell(s.mse, 6), _cell(s.sd, 3), _cell(s.mape_pct, 3)))
    s = pooled_stats(points)
    rows.append(("pooled", str(s.n), _cell(s.mse, 6), _cell(s.sd, 3), _cell(s.mape_pct, 3)))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for r in rows:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines) + "\n"
