"""Price of a mint at a timestamp from the swaps in the nearest slot(s).

Trades quoted in any base currency are converted to the requested base with
a contemporaneous rate matrix, dust-filtered, fenced around the median in log
space, and volume weighted. Empty slots back off one slot at a time; after
the cap the whole trailing window is pooled.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from linkxplore.decoder import decode_swap
from linkxplore.errors import (
    LinkXploreError,
    NotAvailable,
    NotQuotedAgainstBase,
    RateUnavailable,
    SlotOutOfRange,
)
from linkxplore.ledger import (
    SOL,
    Block,
    Mint,
    SwapInfo,
    TransactionMeta,
    TransactionRecord,
    coalesce_sol,
)
from linkxplore.registry import PREFILTER_VENUES, ProgramRegistry
from linkxplore.slots import ClockCalibration, SlotChoice, nearest_slot

log = logging.getLogger(__name__)


class BaseCurrency(str, enum.Enum):
    SOL = "SOL"
    USDC = "USDC"
    USDT = "USDT"

    @classmethod
    def parse(cls, value: str) -> BaseCurrency:
        try:
            return cls(value.strip().upper())
        except ValueError:
            raise ValueError(f"unknown base currency {value!r}") from None


DEFAULT_BASES = (BaseCurrency.SOL, BaseCurrency.USDC, BaseCurrency.USDT)


class RateSource(str, enum.Enum):
    DEX_POOL = "DexPool"
    ORACLE = "Oracle"
    CEX_MIDQUOTE = "CexMidquote"


def base_mint(base: BaseCurrency, registry: ProgramRegistry) -> Mint:
    if base is BaseCurrency.SOL:
        return SOL
    try:
        return registry.base_mints[base.value]
    except KeyError:
        raise ValueError(f"registry defines no mint for {base.value}") from None


def base_of(mint: Mint, registry: ProgramRegistry) -> BaseCurrency | None:
    mint = coalesce_sol(mint)
    if mint == SOL:
        return BaseCurrency.SOL
    for name, m in registry.base_mints.items():
        if m == mint:
            return BaseCurrency(name)
    return None


@dataclass(frozen=True)
class PriceConfig:
    dust: Mapping[BaseCurrency, float] = field(
        default_factory=lambda: {
            BaseCurrency.SOL: 1e-4,
            BaseCurrency.USDC: 1e-2,
            BaseCurrency.USDT: 1e-2,
        }
    )
    fence_ratio: float = 1.5
    max_backoff: int = 64
    widen_window_seconds: int = 3600
    rate_lookback_slots: int = 32
    calibration: ClockCalibration = ClockCalibration()
    oracle_path: str | None = None
    midquote_path: str | None = None

    def __post_init__(self) -> None:
        if self.fence_ratio <= 1:
            raise ValueError("fence_ratio must exceed 1")
        if any(v <= 0 for v in self.dust.values()):
            raise ValueError("dust thresholds must be positive")
        if self.max_backoff < 0:
            raise ValueError("max_backoff must be non-negative")


@dataclass(frozen=True)
class TradePoint:
    price: float
    weight: float
    signature: str = ""
    slot: int = 0

    def __post_init__(self) -> None:
        if not (self.price > 0 and self.weight > 0):
            raise ValueError("trade points need positive price and weight")


@dataclass(frozen=True)
class VwapResult:
    vwap: float
    kept: int
    total_weight: float
    points: tuple[TradePoint, ...] = ()


@dataclass(frozen=True)
class PriceInfo:
    vwap: float
    base: BaseCurrency
    slot: int
    method: str
    trade_count: int
    total_weight: float
    source_notes: Mapping[str, str] = field(default_factory=dict)


# --- per-trade price ----------------------------------------------------------------


def per_trade_price(info: SwapInfo, x: Mint, c: Mint) -> tuple[float, float]:
    """Price of ``x`` in units of ``c`` and the trade size in ``c``."""
    x, c = coalesce_sol(x), coalesce_sol(c)
    m_in, m_out = coalesce_sol(info.token_in_mint), coalesce_sol(info.token_out_mint)
    q_in, q_out = info.token_in_ui, info.token_out_ui
    if q_in <= 0 or q_out <= 0:
        raise NotQuotedAgainstBase("zero-sized swap")
    if (m_in, m_out) == (x, c):
        return float(q_out / q_in), float(q_out)
    if (m_in, m_out) == (c, x):
        return float(q_in / q_out), float(q_in)
    raise NotQuotedAgainstBase(f"pair ({m_in}, {m_out}) is not ({x}, {c})")


def quote_currency(info: SwapInfo, x: Mint, registry: ProgramRegistry) -> BaseCurrency | None:
    x = coalesce_sol(x)
    mints = {coalesce_sol(info.token_in_mint), coalesce_sol(info.token_out_mint)}
    if x not in mints or len(mints) != 2:
        return None
    (other,) = mints - {x}
    return base_of(other, registry)


# --- filtering and VWAP -------------------------------------------------------------


def log_median(prices: Sequence[float]) -> float:
    """Median of ``ln p``; even lengths average the two central logs."""
    logs = sorted(math.log(p) for p in prices)
    n = len(logs)
    mid = n // 2
    return logs[mid] if n % 2 else (logs[mid - 1] + logs[mid]) / 2


def fence_mask(prices: Sequence[float], r: float) -> list[bool]:
    """Keep prices within a factor ``r`` of the median, symmetric in log space."""
    if not prices:
        raise ValueError("fence_mask needs at least one price")
    if r <= 1:
        raise ValueError("fence ratio must exceed 1")
    m = log_median(prices)
    bound = math.log(r)
    return [abs(math.log(p) - m) <= bound for p in prices]


def filter_and_vwap(points: Sequence[TradePoint], cfg: PriceConfig, base: BaseCurrency) -> VwapResult | None:
    """Dust filter, log fence, weighted average; None when nothing survives."""
    tau = cfg.dust[base]
    kept = [p for p in points if p.weight >= tau]
    if not kept:
        return None
    mask = fence_mask([p.price for p in kept], cfg.fence_ratio)
    kept = [p for p, keep in zip(kept, mask) if keep]
    if not kept:
        # an even count whose two central prices straddle the fence
        return None
    total = sum(p.weight for p in kept)
    vwap = sum(p.weight * p.price for p in kept) / total
    # rounding must not push the average outside the kept range
    lo, hi = min(p.price for p in kept), max(p.price for p in kept)
    vwap = min(max(vwap, lo), hi)
    return VwapResult(vwap, len(kept), total, tuple(kept))


# --- rate matrix --------------------------------------------------------------------


@dataclass(frozen=True)
class Rate:
    rate: float
    source: RateSource
    as_of_slot: int | None = None
    via: str | None = None


@dataclass
class RateMatrix:
    rates: dict[tuple[BaseCurrency, BaseCurrency], Rate] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for b in BaseCurrency:
            self.rates.setdefault((b, b), Rate(1.0, RateSource.DEX_POOL))

    def get(self, c: BaseCurrency, b: BaseCurrency) -> Rate | None:
        return self.rates.get((c, b))

    def rate(self, c: BaseCurrency, b: BaseCurrency) -> float:
        entry = self.get(c, b)
        if entry is None:
            raise RateUnavailable(f"no rate for {c.value}->{b.value}")
        return entry.rate

    def set_pair(self, c: BaseCurrency, b: BaseCurrency, rate: Rate) -> None:
        if rate.rate <= 0 or not math.isfinite(rate.rate):
            raise ValueError("rates must be positive and finite")
        self.rates[(c, b)] = rate
        self.rates[(b, c)] = Rate(1.0 / rate.rate, rate.source, rate.as_of_slot, rate.via)

    def notes(self) -> dict[str, str]:
        out = {}
        for (c, b), r in sorted(self.rates.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
            if c != b:
                out[f"{c.value}->{b.value}"] = r.source.value + (f" via {r.via}" if r.via else "")
        return out


@dataclass(frozen=True)
class QuoteRow:
    timestamp: float
    c: BaseCurrency
    b: BaseCurrency
    rate: float


def load_quote_file(path: str | Path) -> list[QuoteRow]:
    """Read ``timestamp,pair,rate`` rows; ``SOL/USDC,150`` means 1 SOL = 150 USDC."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            left, right = rec["pair"].split("/")
            rows.append(
                QuoteRow(float(rec["timestamp"]), BaseCurrency.parse(left), BaseCurrency.parse(right), float(rec["rate"]))
            )
    return rows


def _nearest_quote(rows: Iterable[QuoteRow], c: BaseCurrency, b: BaseCurrency, t: float) -> float | None:
    best: tuple[float, float, float] | None = None
    for row in rows:
        if (row.c, row.b) == (c, b):
            rate = row.rate
        elif (row.c, row.b) == (b, c):
            rate = 1.0 / row.rate
        else:
            continue
        key = (abs(row.timestamp - t), row.timestamp)
        if best is None or key < best[:2]:
            best = (key[0], key[1], rate)
    return None if best is None else best[2]


def dex_rates(infos: Iterable[tuple[SwapInfo, int]], registry: ProgramRegistry) -> dict[tuple[BaseCurrency, BaseCurrency], Rate]:
    """Volume-weighted base-vs-base rates from decoded swaps: sum(q_b) / sum(q_c)."""
    sums: dict[tuple[BaseCurrency, BaseCurrency], list] = {}
    for info, slot in infos:
        c_in, c_out = base_of(info.token_in_mint, registry), base_of(info.token_out_mint, registry)
        if c_in is None or c_out is None or c_in == c_out:
            continue
        q = {c_in: info.token_in_ui, c_out: info.token_out_ui}
        c, b = sorted((c_in, c_out), key=lambda x: list(BaseCurrency).index(x))
        acc = sums.setdefault((c, b), [Decimal(0), Decimal(0), slot])
        acc[0] += q[c]
        acc[1] += q[b]
        acc[2] = max(acc[2], slot)
    return {
        pair: Rate(float(qb / qc), RateSource.DEX_POOL, slot)
        for pair, (qc, qb, slot) in sums.items()
        if qc > 0 and qb > 0
    }


def build_rate_matrix(
    pairs: Iterable[tuple[BaseCurrency, BaseCurrency]],
    dex: Mapping[tuple[BaseCurrency, BaseCurrency], Rate],
    t: float,
    cfg: PriceConfig,
) -> tuple[RateMatrix, set[tuple[BaseCurrency, BaseCurrency]]]:
    """Fill the needed pairs; returns the matrix and the pairs left unresolved.

    Order of preference: DEX direct, DEX via SOL, oracle, CEX midquote,
    then any combination through SOL.
    """
    matrix = RateMatrix()
    tiers: list[dict[tuple[BaseCurrency, BaseCurrency], Rate]] = [dict(dex)]
    for path, source in ((cfg.oracle_path, RateSource.ORACLE), (cfg.midquote_path, RateSource.CEX_MIDQUOTE)):
        if path:
            rows = load_quote_file(path)
            tier = {}
            for c in BaseCurrency:
                for b in BaseCurrency:
                    if c != b and (q := _nearest_quote(rows, c, b, t)) is not None:
                        tier[(c, b)] = Rate(q, source)
            tiers.append(tier)

    def lookup(tier, c, b) -> Rate | None:
        if (c, b) in tier:
            return tier[(c, b)]
        if (b, c) in tier:
            r = tier[(b, c)]
            return Rate(1.0 / r.rate, r.source, r.as_of_slot, r.via)
        return None

    def via_sol(tier_a, tier_b, c, b) -> Rate | None:
        if BaseCurrency.SOL in (c, b):
            return None
        first, second = lookup(tier_a, c, BaseCurrency.SOL), lookup(tier_b, BaseCurrency.SOL, b)
        if first is None or second is None:
            return None
        return Rate(first.rate * second.rate, first.source, first.as_of_slot, via="SOL")

    merged: dict = {}
    for tier in reversed(tiers):
        merged.update(tier)
    unresolved = set()
    for c, b in pairs:
        if c == b:
            continue
        rate = lookup(tiers[0], c, b) or via_sol(tiers[0], tiers[0], c, b)
        for tier in tiers[1:]:
            rate = rate or lookup(tier, c, b)
        rate = rate or via_sol(merged, merged, c, b)
        if rate is None:
            unresolved.add((c, b))
        else:
            matrix.set_pair(c, b, rate)
    return matrix, unresolved


# --- block collection ---------------------------------------------------------------


def prefilter_block(block: Block, mints: Iterable[Mint], registry: ProgramRegistry) -> list[tuple[TransactionRecord, TransactionMeta]]:
    """Transactions that touch one of ``mints`` or call a swap-capable program."""
    wanted = {coalesce_sol(m) for m in mints}
    out = []
    for tx, meta in block.transactions:
        mint_hit = any(
            coalesce_sol(e.mint) in wanted for e in (*meta.pre_token_balances, *meta.post_token_balances)
        )
        program_hit = False
        if not mint_hit:
            table = tx.account_keys + tx.loaded_addresses
            for inst in tx.instructions:
                if inst.program_id_index < len(table):
                    venue = registry.venue(table[inst.program_id_index])
                    if venue in PREFILTER_VENUES:
                        program_hit = True
                        break
        if mint_hit or program_hit:
            out.append((tx, meta))
    return out


def decode_block(block: Block, mints: Iterable[Mint], registry: ProgramRegistry) -> list[SwapInfo]:
    infos = []
    for tx, meta in prefilter_block(block, mints, registry):
        try:
            infos.append(decode_swap(tx, meta, registry, block.block_time))
        except LinkXploreError as exc:
            log.debug("slot %d %s: %s", block.slot, tx.signature, exc)
    return infos


class PriceEngine:
    """Price lookups against one source; holds no state beyond per-call memos."""

    def __init__(self, source, registry: ProgramRegistry, cfg: PriceConfig | None = None) -> None:
        self.source = source
        self.registry = registry
        self.cfg = cfg or PriceConfig()

    def _block(self, slot: int) -> Block | None:
        if slot < 0:
            return None
        try:
            return self.source.get_block(slot)
        except SlotOutOfRange:
            return None

    def swaps_for(self, x: Mint, slots: Iterable[int]) -> list[tuple[SwapInfo, int]]:
        x = coalesce_sol(x)
        out = []
        for slot in sorted(set(slots)):
            block = self._block(slot)
            if block is None or block.skipped:
                continue
            for info in decode_block(block, [x], self.registry):
                if x in (coalesce_sol(info.token_in_mint), coalesce_sol(info.token_out_mint)):
                    out.append((info, slot))
        return out

    def _dex_rates_near(self, slot: int) -> dict:
        bases = [base_mint(b, self.registry) for b in BaseCurrency]
        infos = []
        span = self.cfg.rate_lookback_slots
        for s in range(max(0, slot - span), slot + span + 1):
            block = self._block(s)
            if block is None or block.skipped:
                continue
            infos.extend((info, s) for info in decode_block(block, bases, self.registry))
        return dex_rates(infos, self.registry)

    def price_from_swaps(
        self,
        x: Mint,
        swaps: Sequence[tuple[SwapInfo, int]],
        bases: Sequence[BaseCurrency],
        t: float,
        rate_slot: int,
    ) -> tuple[tuple[BaseCurrency, VwapResult, RateMatrix] | None, bool]:
        """VWAP in the first requested base that yields one.

        The flag reports whether every failing base failed only for lack of a rate.
        """
        quoted = []
        for info, slot in swaps:
            c = quote_currency(info, x, self.registry)
            if c is not None:
                quoted.append((info, slot, c))
        if not quoted:
            return None, False
        needed = {(c, b) for _, _, c in quoted for b in bases if c != b}
        dex = self._dex_rates_near(rate_slot) if needed else {}
        matrix, unresolved = build_rate_matrix(needed, dex, t, self.cfg)
        rate_only = True
        for b in bases:
            points = []
            missing_rate = False
            for info, slot, c in quoted:
                if (c, b) in unresolved:
                    missing_rate = True
                    continue
                p, w = per_trade_price(info, x, base_mint(c, self.registry))
                r = matrix.rate(c, b)
                points.append(TradePoint(p * r, w * r, info.signatures[0], slot))
            result = filter_and_vwap(points, self.cfg, b)
            if result is not None:
                return (b, result, matrix), False
            rate_only = rate_only and missing_rate and not points
        return None, rate_only

    def price_at(
        self,
        x: Mint,
        t: float,
        bases: Sequence[BaseCurrency] = DEFAULT_BASES,
    ) -> PriceInfo:
        x = coalesce_sol(x)
        choice = nearest_slot(t, self.source, self.cfg.calibration)
        rate_failures = []
        for k in range(self.cfg.max_backoff + 1):
            slots = sorted({s - k for s in choice.slots if s - k >= 0})
            if not slots:
                break
            swaps = self.swaps_for(x, slots)
            if not swaps:
                continue
            found, rate_only = self.price_from_swaps(x, swaps, bases, t, max(slots))
            if found is not None:
                base, res, matrix = found
                slot = min(p.slot for p in res.points)
                return PriceInfo(res.vwap, base, slot, "slot_vwap", res.kept, res.total_weight, matrix.notes())
            rate_failures.append(rate_only)

        info = self._window_price(x, t, choice, bases, rate_failures)
        if info is not None:
            return info
        if rate_failures and all(rate_failures):
            raise RateUnavailable(f"{x}: trades found near t={t} but no conversion rate")
        raise NotAvailable(f"{x}: no eligible trades in the {self.cfg.widen_window_seconds}s before t={t}")

    def window_slots(self, t: float, choice: SlotChoice) -> list[int]:
        """Slots with block time in ``[t - window, t]``, walking back from the nearest slot."""
        lower = t - self.cfg.widen_window_seconds
        slots = []
        s = max(choice.slots)
        while s >= 0:
            block = self._block(s)
            if block is None:
                break
            if not block.skipped:
                if block.block_time < lower:
                    break
                if block.block_time <= t:
                    slots.append(s)
            s -= 1
        return sorted(slots)

    def _window_price(self, x, t, choice, bases, rate_failures) -> PriceInfo | None:
        slots = self.window_slots(t, choice)
        swaps = self.swaps_for(x, slots)
        if not swaps:
            return None
        found, rate_only = self.price_from_swaps(x, swaps, bases, t, max(slots))
        if found is None:
            rate_failures.append(rate_only)
            return None
        base, res, matrix = found
        slot = min(p.slot for p in res.points)
        return PriceInfo(res.vwap, base, slot, "window_vwap", res.kept, res.total_weight, matrix.notes())


def price_at(
    x: Mint,
    t: float,
    source,
    registry: ProgramRegistry,
    cfg: PriceConfig | None = None,
    bases: Sequence[BaseCurrency] = DEFAULT_BASES,
) -> PriceInfo:
    return PriceEngine(source, registry, cfg).price_at(x, t, bases)
