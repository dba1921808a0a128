"""Ledger access over Solana JSON-RPC or a recorded fixture store.

:class:`ChainSource` is the only thing the rest of the engine talks to. It
puts an LRU block cache and a usage meter in front of whichever backend
answers, and paces live requests globally.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from collections import Counter, deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

import httpx
from cachetools import LRUCache

from linkxplore.cost import getblock_request_units
from linkxplore.errors import SlotOutOfRange, SourceUnavailable
from linkxplore.ledger import Block, TransactionMeta, TransactionRecord, block_from_json

log = logging.getLogger(__name__)

# JSON-RPC error codes for slots that produced no block
_SKIPPED_CODES = {-32007, -32009}
_NOT_AVAILABLE = -32004
_CLEANED_UP = -32001


@dataclass(frozen=True)
class SourceConfig:
    endpoint_url: str | None = None
    fixture_path: str | None = None
    max_requests_per_second: float = 100.0
    cache_capacity_blocks: int = 256
    commitment: str = "finalized"
    retention_boundary_hours: float = 36.0
    timeout_s: float = 10.0
    retries: int = 3
    backoff_base_s: float = 0.2

    def __post_init__(self) -> None:
        if self.endpoint_url is None and self.fixture_path is None:
            raise ValueError("configure an endpoint URL, a fixture path, or both")
        if self.max_requests_per_second <= 0:
            raise ValueError("max_requests_per_second must be positive")
        if self.cache_capacity_blocks <= 0:
            raise ValueError("cache_capacity_blocks must be positive")
        if self.commitment != "finalized":
            raise ValueError("only finalized commitment is supported")

    def with_env(self, environ: Mapping[str, str] | None = None) -> SourceConfig:
        environ = os.environ if environ is None else environ
        url = environ.get("CHAIN_RPC_URL")
        return replace(self, endpoint_url=url) if url else self


@dataclass(frozen=True)
class UsageReport:
    request_count: Mapping[str, int]
    request_units: int
    cache_hits: int = 0

    @property
    def total_requests(self) -> int:
        return sum(self.request_count.values())


class Pacer:
    """Sliding one-second window: at most ``rate`` acquisitions per window."""

    def __init__(self, rate: float, clock=time.monotonic, sleep=time.sleep) -> None:
        self.capacity = max(1, int(rate))
        self._clock = clock
        self._sleep = sleep
        self._issued: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                while self._issued and now - self._issued[0] >= 1.0:
                    self._issued.popleft()
                if len(self._issued) < self.capacity:
                    self._issued.append(now)
                    return
                wait = 1.0 - (now - self._issued[0])
            self._sleep(max(wait, 0.0))


class FixtureStore:
    """Blocks recorded as newline-delimited ``getBlock`` results keyed by slot.

    A record with ``"blockTime": null`` marks a skipped slot; a slot with no
    record at all is outside the recorded range.
    """

    def __init__(self, blocks: Iterable[Block]) -> None:
        self._blocks: dict[int, Block] = {}
        self._by_signature: dict[str, tuple[TransactionRecord, TransactionMeta, int | None, int]] = {}
        for block in blocks:
            self._blocks[block.slot] = block
            for tx, meta in block.transactions:
                for sig in tx.signatures[:1]:
                    self._by_signature.setdefault(sig, (tx, meta, block.block_time, block.slot))
        times = [b.block_time for b in self._blocks.values() if b.block_time is not None]
        self._latest_time = max(times) if times else None

    @classmethod
    def from_records(cls, records: Iterable[Mapping[str, Any]]) -> FixtureStore:
        return cls(block_from_json(r) for r in records)

    @classmethod
    def load(cls, path: str | Path) -> FixtureStore:
        try:
            with open(path, encoding="utf-8") as fh:
                records = [json.loads(line) for line in fh if line.strip()]
        except (OSError, json.JSONDecodeError) as exc:
            raise SourceUnavailable(f"cannot read fixtures from {path}: {exc}") from exc
        return cls.from_records(records)

    def __contains__(self, slot: int) -> bool:
        return slot in self._blocks

    @property
    def slots(self) -> list[int]:
        return sorted(self._blocks)

    @property
    def latest_block_time(self) -> int | None:
        return self._latest_time

    def tip(self) -> int:
        if not self._blocks:
            raise SourceUnavailable("fixture store is empty")
        return max(self._blocks)

    def block(self, slot: int) -> Block:
        try:
            return self._blocks[slot]
        except KeyError:
            raise SlotOutOfRange(f"slot {slot} not in fixture store") from None

    def find_transaction(self, signature: str):
        return self._by_signature.get(signature)


class RpcClient:
    """Minimal synchronous Solana JSON-RPC client with retries and pacing."""

    def __init__(self, url: str, config: SourceConfig, pacer: Pacer, client: httpx.Client | None = None):
        self.url = url
        self.config = config
        self.pacer = pacer
        self._client = client or httpx.Client(timeout=config.timeout_s)
        self._ids = iter(range(1, 1 << 62))
        self._id_lock = threading.Lock()

    def call(self, method: str, params: list[Any] | None = None) -> Any:
        """Return ``result`` or raise; JSON-RPC errors surface as :class:`RpcError`."""
        with self._id_lock:
            req_id = next(self._ids)
        payload = {"jsonrpc": "2.0", "id": req_id, "method": method, "params": params or []}
        last: Exception | None = None
        for attempt in range(self.config.retries):
            if attempt:
                time.sleep(self.config.backoff_base_s * 2 ** (attempt - 1))
            self.pacer.acquire()
            try:
                resp = self._client.post(self.url, json=payload)
            except httpx.HTTPError as exc:
                last = exc
                log.debug("%s attempt %d failed: %s", method, attempt + 1, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = SourceUnavailable(f"{method}: HTTP {resp.status_code}")
                continue
            try:
                body = resp.json()
            except ValueError as exc:
                last = exc
                continue
            if "error" in body and body["error"] is not None:
                err = body["error"]
                raise RpcError(int(err.get("code", 0)), str(err.get("message", "")))
            return body.get("result")
        raise SourceUnavailable(f"{method} failed after {self.config.retries} attempts: {last}")

    def close(self) -> None:
        self._client.close()


class RpcError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class ChainSource:
    """Fixture-first, live-fallback ledger access with caching and metering."""

    def __init__(
        self,
        config: SourceConfig,
        fixtures: FixtureStore | None = None,
        http_client: httpx.Client | None = None,
    ) -> None:
        self.config = config
        if fixtures is None and config.fixture_path is not None:
            fixtures = FixtureStore.load(config.fixture_path)
        self.fixtures = fixtures
        self.pacer = Pacer(config.max_requests_per_second)
        self.rpc = (
            RpcClient(config.endpoint_url, config, self.pacer, http_client)
            if config.endpoint_url
            else None
        )
        self._cache: LRUCache[int, Block] = LRUCache(maxsize=config.cache_capacity_blocks)
        self._lock = threading.Lock()
        self._counts: Counter[str] = Counter()
        self._units = 0
        self._hits = 0
        self._live_tip: int | None = None

    @classmethod
    def from_fixtures(cls, fixtures: FixtureStore, **kwargs: Any) -> ChainSource:
        return cls(SourceConfig(fixture_path="<memory>", **kwargs), fixtures=fixtures)

    # -- metering -------------------------------------------------------------------

    def _meter(self, method: str, units: int = 1) -> None:
        with self._lock:
            self._counts[method] += 1
            self._units += units

    def _reference_time(self) -> float:
        if self.fixtures is not None and self.fixtures.latest_block_time is not None:
            return float(self.fixtures.latest_block_time)
        return time.time()

    def record_usage(self) -> UsageReport:
        with self._lock:
            return UsageReport(dict(self._counts), self._units, self._hits)

    # -- RPC surface ----------------------------------------------------------------

    def get_slot(self) -> int:
        if self.fixtures is not None:
            self._meter("getSlot")
            return self.fixtures.tip()
        return self._live_slot()

    def first_slot(self) -> int:
        """Oldest slot the source can still serve."""
        if self.fixtures is not None:
            return self.fixtures.slots[0] if self.fixtures.slots else 0
        if self.rpc is None:
            raise SourceUnavailable("no live endpoint configured")
        self._meter("getFirstAvailableBlock")
        return int(self.rpc.call("getFirstAvailableBlock"))

    def _live_slot(self) -> int:
        if self.rpc is None:
            raise SourceUnavailable("no live endpoint configured")
        self._meter("getSlot")
        slot = int(self.rpc.call("getSlot", [{"commitment": self.config.commitment}]))
        self._live_tip = slot
        return slot

    def get_block_time(self, slot: int) -> int | None:
        """Unix time of ``slot``; None for a skipped slot."""
        if slot < 0:
            raise SlotOutOfRange(f"negative slot {slot}")
        with self._lock:
            cached = self._cache.get(slot)
        if cached is not None:
            return cached.block_time
        if self.fixtures is not None and slot in self.fixtures:
            self._meter("getBlockTime")
            return self.fixtures.block(slot).block_time
        if self.rpc is None:
            raise SlotOutOfRange(f"slot {slot} not available from this source")
        self._meter("getBlockTime")
        try:
            result = self.rpc.call("getBlockTime", [slot])
        except RpcError as exc:
            return self._classify_missing(slot, exc)
        return None if result is None else int(result)

    def get_block(self, slot: int) -> Block:
        """Full block with transactions and metadata; ``block.skipped`` for empty slots."""
        if slot < 0:
            raise SlotOutOfRange(f"negative slot {slot}")
        with self._lock:
            cached = self._cache.get(slot)
            if cached is not None:
                self._hits += 1
                return cached
        if self.fixtures is not None and slot in self.fixtures:
            block = self.fixtures.block(slot)
        elif self.rpc is not None:
            block = self._live_block(slot)
        else:
            raise SlotOutOfRange(f"slot {slot} not available from this source")
        self._meter("getBlock", self._block_units(block))
        with self._lock:
            self._cache[slot] = block
        return block

    def _block_units(self, block: Block) -> int:
        if block.block_time is None:
            return 1
        age_hours = (self._reference_time() - block.block_time) / 3600.0
        return getblock_request_units(age_hours, self.config.retention_boundary_hours)

    def _live_block(self, slot: int) -> Block:
        assert self.rpc is not None
        params = [
            slot,
            {
                "encoding": "json",
                "transactionDetails": "full",
                "rewards": False,
                "maxSupportedTransactionVersion": 0,
                "commitment": self.config.commitment,
            },
        ]
        try:
            result = self.rpc.call("getBlock", params)
        except RpcError as exc:
            self._classify_missing(slot, exc)
            return Block(slot=slot, block_time=None)
        if result is None:
            return Block(slot=slot, block_time=None)
        return block_from_json(result, slot=slot)

    def _classify_missing(self, slot: int, exc: RpcError) -> None:
        if exc.code in _SKIPPED_CODES:
            return None
        if exc.code == _NOT_AVAILABLE:
            tip = self._live_tip if self._live_tip is not None else self._live_slot()
            if slot > tip:
                raise SlotOutOfRange(f"slot {slot} beyond finalized tip {tip}") from exc
            return None
        if exc.code == _CLEANED_UP:
            raise SlotOutOfRange(f"slot {slot} no longer retained: {exc.message}") from exc
        raise SourceUnavailable(f"RPC error {exc}") from exc

    def find_transaction(self, signature: str):
        """``(tx, meta, block_time, slot)`` for a recorded signature, else None."""
        if self.fixtures is None:
            return None
        return self.fixtures.find_transaction(signature)

    def ping(self) -> bool:
        try:
            self.get_slot()
        except Exception:  # noqa: BLE001 - any failure means degraded
            return False
        return True

    def close(self) -> None:
        if self.rpc is not None:
            self.rpc.close()
