"""Cost models for the two pricing workloads and their comparison curves.

The metered baseline charges per pricing request (compute units); the block
based module pays request units per ``getBlock``. All money is USD.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

SECONDS_PER_HOUR = 3600
Z_95 = 1.96

GREEN_BELOW = 300.0
RED_ABOVE = 1000.0


@dataclass(frozen=True)
class StreamCostParams:
    p_cu: float = 2 / 60_000
    c_req: float = 64
    r: float = 1
    mu: float = 10
    sigma: float = 5
    lam: float = 2.5

    def __post_init__(self) -> None:
        if min(self.p_cu, self.c_req, self.r, self.mu, self.lam) <= 0 or self.sigma < 0:
            raise ValueError("stream cost parameters must be positive (sigma >= 0)")


@dataclass(frozen=True)
class EventCostParams:
    p_ru: float = 2.5e-6
    lam: float = 2.5
    retention_boundary_hours: float = 36.0

    def __post_init__(self) -> None:
        if self.p_ru < 0 or self.lam <= 0 or self.retention_boundary_hours < 0:
            raise ValueError("invalid event cost parameters")


@dataclass(frozen=True)
class CostPoint:
    t_hours: float
    mean: float
    sd: float

    @property
    def ci95_low(self) -> float:
        return self.mean - Z_95 * self.sd

    @property
    def ci95_high(self) -> float:
        return self.mean + Z_95 * self.sd


def _check_t(t_hours: float) -> None:
    if t_hours < 0:
        raise ValueError("t_hours must be non-negative")


def stream_cost(params: StreamCostParams, t_hours: float) -> CostPoint:
    """Metered cost of pricing every analyzed transaction in a live stream.

    The analyzed count per block is normal with mean ``mu`` and SD ``sigma``;
    summing over ``lam * 3600 * t`` blocks gives the mean and SD below.
    """
    _check_t(t_hours)
    per_tx = params.p_cu * params.c_req * params.r
    blocks = params.lam * SECONDS_PER_HOUR * t_hours
    return CostPoint(t_hours, per_tx * params.mu * blocks, per_tx * params.sigma * math.sqrt(blocks))


def getblock_request_units(age_hours: float, retention_boundary_hours: float = 36.0) -> int:
    """RU charged for one ``getBlock``: 1 inside the hot-retention window, 2 beyond."""
    return 1 if age_hours <= retention_boundary_hours else 2


def module_event_cost(params: EventCostParams, t_hours: float) -> float:
    """``getBlock`` spend for backfilling the last ``t_hours`` of blocks."""
    _check_t(t_hours)
    per_hour = params.p_ru * params.lam * SECONDS_PER_HOUR
    hot = min(t_hours, params.retention_boundary_hours)
    cold = max(0.0, t_hours - params.retention_boundary_hours)
    return per_hour * (hot + 2 * cold)


def metered_event_cost(p_cu: float, c_req: float, lam: float, t_hours: float) -> float:
    """One metered pricing request per block over ``t_hours``."""
    _check_t(t_hours)
    return p_cu * c_req * lam * SECONDS_PER_HOUR * t_hours


def cost_band(usd: float) -> str:
    if usd < GREEN_BELOW:
        return "green"
    if usd <= RED_ABOVE:
        return "yellow"
    return "red"


@dataclass(frozen=True)
class CurveRow:
    t_hours: float
    module_cost: float
    metered_mean: float
    metered_ci_low: float
    metered_ci_high: float
    band: str


CURVE_HEADER = ("t", "module_cost", "metered_mean", "metered_ci_low", "metered_ci_high", "band")


def emit_cost_curves(
    t_values: Iterable[float],
    scenario: str,
    stream: StreamCostParams | None = None,
    event: EventCostParams | None = None,
    stream_module_cost: float = 0.0,
) -> list[CurveRow]:
    """Rows comparing the module against the metered baseline.

    ``scenario`` is ``"stream"`` (free block streaming, so the module costs
    ``stream_module_cost`` per hour, zero by default) or ``"event"``.
    """
    stream = stream or StreamCostParams()
    event = event or EventCostParams()
    rows = []
    for t in t_values:
        if scenario == "stream":
            point = stream_cost(stream, t)
            module = stream_module_cost * t
        elif scenario == "event":
            mean = metered_event_cost(stream.p_cu, stream.c_req, event.lam, t)
            point = CostPoint(t, mean, 0.0)
            module = module_event_cost(event, t)
        else:
            raise ValueError(f"unknown scenario {scenario!r}")
        rows.append(
            CurveRow(t, module, point.mean, point.ci95_low, point.ci95_high, cost_band(point.mean))
        )
    if not rows:
        raise ValueError("empty t range")
    return rows


def curves_to_csv(rows: Sequence[CurveRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for row in rows:
        writer.writerow(
            [
                f"{row.t_hours:g}",
                f"{row.module_cost:.6f}",
                f"{row.metered_mean:.6f}",
                f"{row.metered_ci_low:.6f}",
                f"{row.metered_ci_high:.6f}",
                row.band,
            ]
        )
    return buf.getvalue()


def plot_curves(rows: Sequence[CurveRow], path: str, title: str = "") -> None:
    """Write a static SVG line chart of the two cost curves."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ts = [r.t_hours for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(ts, [r.module_cost for r in rows], "-", label="module")
    ax.plot(ts, [r.metered_mean for r in rows], "--", label="metered")
    ax.fill_between(ts, [r.metered_ci_low for r in rows], [r.metered_ci_high for r in rows], alpha=0.2)
    for level, colour in ((GREEN_BELOW, "green"), (RED_ABOVE, "red")):
        ax.axhline(level, color=colour, linewidth=0.6, linestyle=":")
    ax.set_xlabel("t (hours)")
    ax.set_ylabel("USD")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
