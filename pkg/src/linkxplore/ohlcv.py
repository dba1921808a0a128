"""USD candles for one token from decoded swaps.

Trades against USDC/USDT are priced directly; trades against SOL go through a
per-minute SOL/USD close. Each bucket is fenced on its own before the
open/high/low/close and volume sums are taken.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Callable, Iterable, Sequence

from linkxplore.errors import (
    FutureTimestamp,
    LinkXploreError,
    MissingSolUsd,
    NegativeOffset,
    NotAvailable,
    RateUnavailable,
    TimestampBeforeHistory,
)
from linkxplore.ledger import SOL, Mint, SwapInfo, coalesce_sol
from linkxplore.price import BaseCurrency, base_of, decode_block, fence_mask
from linkxplore.registry import ProgramRegistry
from linkxplore.slots import nearest_slot

log = logging.getLogger(__name__)

CANDLE_HEADER = (
    "bucket_start",
    "open",
    "high",
    "low",
    "close",
    "close_vwap",
    "vol_token",
    "vol_usd",
    "trade_count",
)


@dataclass(frozen=True)
class NormalizedTrade:
    t: int
    p: float
    q: Decimal
    u: float
    signature: str


@dataclass(frozen=True)
class Candle:
    bucket_start: int
    open: float | None = None
    high: float | None = None
    low: float | None = None
    close: float | None = None
    close_vwap: float | None = None
    vol_token: Decimal = Decimal(0)
    vol_usd: float = 0.0
    trade_count: int = 0
    carried: bool = False

    @property
    def empty(self) -> bool:
        return self.trade_count == 0


@dataclass(frozen=True)
class OhlcvConfig:
    fence_ratio: float = 1.5
    vwap_close: bool = False
    carry_close: bool = False

    def __post_init__(self) -> None:
        if self.fence_ratio <= 1:
            raise ValueError("fence_ratio must exceed 1")


class SolUsdCache:
    """SOL/USD close per minute, filled from a CSV or lazily from a resolver."""

    def __init__(
        self,
        closes: dict[int, float] | None = None,
        resolver: Callable[[int], float | None] | None = None,
    ) -> None:
        self._closes: dict[int, float] = {}
        for minute, close in (closes or {}).items():
            self.put(minute, close)
        self._resolver = resolver

    @staticmethod
    def minute(t: float) -> int:
        return int(t // 60) * 60

    def put(self, minute: int, close: float) -> None:
        if minute % 60:
            raise ValueError(f"cache key {minute} is not minute aligned")
        if not close > 0:
            raise ValueError("SOL/USD close must be positive")
        self._closes[minute] = float(close)

    def __call__(self, t: float) -> float:
        key = self.minute(t)
        if key not in self._closes and self._resolver is not None:
            value = self._resolver(key)
            if value is not None:
                self.put(key, value)
        try:
            return self._closes[key]
        except KeyError:
            raise MissingSolUsd(f"no SOL/USD close for minute {key}") from None

    @classmethod
    def from_csv(cls, path: str | Path) -> SolUsdCache:
        """Rows ``timestamp,close``; timestamps are floored to the minute."""
        closes = {}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                closes[cls.minute(float(row["timestamp"]))] = float(row["close"])
        return cls(closes)


def normalize_trade(info: SwapInfo, target: Mint, sol_usd: Callable[[float], float], registry: ProgramRegistry) -> NormalizedTrade | None:
    """USD price and size of ``target`` in one swap; None when the counter is not a base."""
    target = coalesce_sol(target)
    m_in, m_out = coalesce_sol(info.token_in_mint), coalesce_sol(info.token_out_mint)
    if target == m_in:
        a_t, a_c, counter = info.token_in_ui, info.token_out_ui, m_out
    elif target == m_out:
        a_t, a_c, counter = info.token_out_ui, info.token_in_ui, m_in
    else:
        return None
    base = base_of(counter, registry)
    if base is None or counter == target or a_t <= 0 or a_c <= 0 or info.timestamp is None:
        return None
    p = float(a_c / a_t)
    if base is BaseCurrency.SOL:
        p *= sol_usd(info.timestamp)
    return NormalizedTrade(info.timestamp, p, a_t, p * float(a_t), info.signatures[0] if info.signatures else "")


def dedup_trades(trades: Iterable[NormalizedTrade]) -> list[NormalizedTrade]:
    """One trade per signature, the largest notional; ties keep the earliest."""
    trades = list(trades)
    best: dict[str, int] = {}
    for i, tr in enumerate(trades):
        j = best.get(tr.signature)
        if j is None or tr.u > trades[j].u:
            best[tr.signature] = i
    keep = set(best.values())
    return [tr for i, tr in enumerate(trades) if i in keep]


def anchor(t_start: float, delta: int) -> int:
    return math.floor(t_start / delta) * delta


def bucket_index(t: float, tau0: int, delta: int) -> int:
    if delta <= 0:
        raise ValueError("delta must be positive")
    if t < tau0:
        raise NegativeOffset(f"t={t} precedes anchor {tau0}")
    return int((t - tau0) // delta)


def aggregate_bucket(trades: Sequence[NormalizedTrade], bucket_start: int, vwap_close: bool = False) -> Candle:
    if not trades:
        return Candle(bucket_start)
    prices = [tr.p for tr in trades]
    vol_token = sum((tr.q for tr in trades), Decimal(0))
    vol_usd = math.fsum(tr.u for tr in trades)
    close_vwap = None
    if vwap_close:
        hi, lo = max(prices), min(prices)
        close_vwap = min(max(vol_usd / float(vol_token), lo), hi)
    return Candle(
        bucket_start,
        open=prices[0],
        high=max(prices),
        low=min(prices),
        close=prices[-1],
        close_vwap=close_vwap,
        vol_token=vol_token,
        vol_usd=vol_usd,
        trade_count=len(trades),
    )


def build_candles_from_trades(
    trades: Iterable[NormalizedTrade],
    delta: int,
    t_start: float,
    t_end: float,
    cfg: OhlcvConfig = OhlcvConfig(),
) -> list[Candle]:
    """Dedup, bucket, fence and aggregate already normalized trades."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not t_end > t_start:
        raise ValueError("empty time range")
    tau0 = anchor(t_start, delta)
    n_buckets = math.ceil((t_end - tau0) / delta)
    ordered = sorted(dedup_trades(trades), key=lambda tr: tr.t)
    buckets: list[list[NormalizedTrade]] = [[] for _ in range(n_buckets)]
    for tr in ordered:
        if tau0 <= tr.t < t_end:
            buckets[bucket_index(tr.t, tau0, delta)].append(tr)

    candles = []
    prev_close = None
    for k, members in enumerate(buckets):
        start = tau0 + k * delta
        if members:
            mask = fence_mask([tr.p for tr in members], cfg.fence_ratio)
            members = [tr for tr, keep in zip(members, mask) if keep]
        candle = aggregate_bucket(members, start, cfg.vwap_close)
        if candle.empty and cfg.carry_close and prev_close is not None:
            candle = Candle(start, prev_close, prev_close, prev_close, prev_close, carried=True)
        if not candle.empty:
            prev_close = candle.close
        candles.append(candle)
    return candles


def build_candles(
    swaps: Iterable[SwapInfo],
    target: Mint,
    delta: int,
    t_start: float,
    t_end: float,
    sol_usd: Callable[[float], float],
    registry: ProgramRegistry,
    cfg: OhlcvConfig = OhlcvConfig(),
) -> list[Candle]:
    trades = []
    for info in swaps:
        tr = normalize_trade(info, target, sol_usd, registry)
        if tr is not None:
            trades.append(tr)
    return build_candles_from_trades(trades, delta, t_start, t_end, cfg)


def collect_swaps(source, registry: ProgramRegistry, target: Mint, t_start: float, t_end: float) -> list[SwapInfo]:
    """Decoded swaps touching ``target`` with block time in ``[t_start, t_end)``."""
    target = coalesce_sol(target)
    # several slots can share one block second, so open at the first slot at or
    # after t_start and close at the last slot at or before t_end
    try:
        first = nearest_slot(t_start, source).ceil_slot
    except TimestampBeforeHistory:
        first = source.first_slot()
    except FutureTimestamp:
        return []
    try:
        last = nearest_slot(t_end, source).floor_slot
    except FutureTimestamp:
        last = source.get_slot()
    except TimestampBeforeHistory:
        return []
    out = []
    for slot in range(first, last + 1):
        try:
            block = source.get_block(slot)
        except LinkXploreError as exc:
            log.debug("slot %d unavailable: %s", slot, exc)
            continue
        if block.skipped or not t_start <= block.block_time < t_end:
            continue
        for info in decode_block(block, [target], registry):
            if target in (coalesce_sol(info.token_in_mint), coalesce_sol(info.token_out_mint)):
                out.append(info)
    return out


def _fmt(x: float | Decimal | None) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        x = Decimal(repr(x))
    return format(x.normalize() if x else Decimal(0), "f")


def candle_to_row(c: Candle) -> list[str]:
    return [
        str(c.bucket_start),
        _fmt(c.open),
        _fmt(c.high),
        _fmt(c.low),
        _fmt(c.close),
        _fmt(c.close_vwap),
        _fmt(c.vol_token),
        _fmt(c.vol_usd),
        str(c.trade_count),
    ]


def candles_to_csv(candles: Sequence[Candle]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CANDLE_HEADER)
    for c in candles:
        writer.writerow(candle_to_row(c))
    return buf.getvalue()


def candle_to_json(c: Candle) -> dict:
    return dict(zip(CANDLE_HEADER, candle_to_row(c))) | {"trade_count": c.trade_count}


def sol_usd_from_prices(engine) -> SolUsdCache:
    """Minute closes synthesized from SOL trades against the stablecoins."""

    def resolve(minute: int) -> float | None:
        try:
            return engine.price_at(SOL, minute + 59, (BaseCurrency.USDC, BaseCurrency.USDT)).vwap
        except (NotAvailable, RateUnavailable, FutureTimestamp, TimestampBeforeHistory):
            return None

    return SolUsdCache(resolver=resolve)
