"""HTTP front end: the same price / ohlcv / parse routes for every registered chain.

Handlers run on a threaded stdlib server. Liveness is answered from a status
kept fresh by a background probe, so a hung upstream never delays /healthz.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import Decimal
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Mapping
from urllib.parse import parse_qs, urlsplit

import base58

from linkxplore.config import ServiceConfig, parse_listen
from linkxplore.decoder import decode_swap
from linkxplore.errors import (
    AmbiguousSwap,
    FailedTransaction,
    FutureTimestamp,
    LinkXploreError,
    MalformedInstruction,
    MalformedMeta,
    MissingSolUsd,
    NoSwapFound,
    NotAvailable,
    RateUnavailable,
    SourceUnavailable,
    TimestampBeforeHistory,
)
from linkxplore.ledger import Mint, coalesce_sol, transaction_from_json
from linkxplore.ohlcv import (
    SolUsdCache,
    build_candles,
    candle_to_json,
    collect_swaps,
    sol_usd_from_prices,
)
from linkxplore.price import DEFAULT_BASES, BaseCurrency, PriceEngine, PriceInfo
from linkxplore.registry import ProgramRegistry, load_registry
from linkxplore.source import ChainSource

log = logging.getLogger(__name__)

OHLCV_INTERVALS = frozenset({60, 300, 900, 3600, 86400})
HOLDERS_BODY = {"error": "not_implemented", "detail": "holder lists are not served by this build"}


class ApiError(Exception):
    def __init__(self, status: int, code: str, detail: str = "") -> None:
        super().__init__(detail or code)
        self.status = status
        self.code = code
        self.detail = detail


# --- rendering ----------------------------------------------------------------------


def decimal_str(x: float | Decimal) -> str:
    """Plain decimal text for a number (shortest repr for floats, no exponent)."""
    d = Decimal(repr(x)) if isinstance(x, float) else Decimal(x)
    text = format(d, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text or "0"


def price_document(info: PriceInfo) -> dict[str, Any]:
    return {
        "price": decimal_str(info.vwap),
        "base": info.base.value,
        "slot": info.slot,
        "method": info.method,
        "trade_count": info.trade_count,
        "total_weight": decimal_str(info.total_weight),
        "source_notes": dict(info.source_notes),
    }


def dumps(doc: Any) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


# --- parameter parsing --------------------------------------------------------------


def parse_mint(value: str | None) -> Mint:
    if not value:
        raise ApiError(400, "bad_request", "missing mint")
    try:
        raw = base58.b58decode(value)
    except ValueError:
        raw = b""
    if len(raw) != 32:
        raise ApiError(400, "bad_request", f"invalid mint {value!r}")
    return coalesce_sol(value)


def parse_time(value: str | None, name: str = "t") -> float:
    """Unix seconds or an RFC 3339 timestamp."""
    if not value:
        raise ApiError(400, "bad_request", f"missing {name}")
    try:
        return float(value)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        raise ApiError(400, "bad_request", f"cannot parse {name}={value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def parse_bases(value: str | None) -> tuple[BaseCurrency, ...]:
    if not value:
        return DEFAULT_BASES
    try:
        return tuple(BaseCurrency.parse(v) for v in value.split(","))
    except ValueError as exc:
        raise ApiError(400, "bad_request", str(exc)) from None


# --- chain adapters -----------------------------------------------------------------


Params = Mapping[str, str]


@dataclass(frozen=True)
class ChainAdapter:
    chain_id: str
    price: Callable[[Params], Any]
    ohlcv: Callable[[Params], Any]
    parse: Callable[[Any], Any]
    probe: Callable[[], bool]


class AdapterRegistry:
    def __init__(self) -> None:
        self._adapters: dict[str, ChainAdapter] = {}

    def register(self, adapter: ChainAdapter) -> None:
        if adapter.chain_id in self._adapters:
            raise ValueError(f"chain {adapter.chain_id!r} already registered")
        self._adapters[adapter.chain_id] = adapter

    def get(self, chain_id: str) -> ChainAdapter:
        try:
            return self._adapters[chain_id]
        except KeyError:
            raise ApiError(404, "unknown_chain", chain_id) from None

    def __iter__(self):
        return iter(self._adapters.values())

    def chains(self) -> list[str]:
        return sorted(self._adapters)


class SolanaHandlers:
    """Request handlers backed by one chain source."""

    def __init__(self, cfg: ServiceConfig, source: ChainSource, registry: ProgramRegistry) -> None:
        self.cfg = cfg
        self.source = source
        self.registry = registry
        self.engine = PriceEngine(source, registry, cfg.price)
        self.sol_usd = SolUsdCache.from_csv(cfg.sol_usd_csv) if cfg.sol_usd_csv else sol_usd_from_prices(self.engine)

    def price(self, params: Params) -> dict[str, Any]:
        mint = parse_mint(params.get("mint"))
        t = parse_time(params.get("t"))
        if t > time.time():
            raise ApiError(400, "future_timestamp", f"t={t} is in the future")
        info = self.engine.price_at(mint, t, parse_bases(params.get("base")))
        return price_document(info)

    def ohlcv(self, params: Params) -> list[dict[str, Any]]:
        mint = parse_mint(params.get("mint"))
        t_from = parse_time(params.get("from"), "from")
        t_to = parse_time(params.get("to"), "to")
        try:
            interval = int(params.get("interval", "60"))
        except ValueError:
            raise ApiError(400, "bad_request", "interval must be an integer") from None
        if interval not in OHLCV_INTERVALS:
            raise ApiError(400, "bad_request", f"interval must be one of {sorted(OHLCV_INTERVALS)}")
        if not t_from < t_to:
            raise ApiError(400, "bad_request", "from must precede to")
        if (t_to - t_from) / interval > 100_000:
            raise ApiError(400, "bad_request", "range spans too many buckets")
        swaps = collect_swaps(self.source, self.registry, mint, t_from, t_to)
        candles = build_candles(swaps, mint, interval, t_from, t_to, self.sol_usd, self.registry, self.cfg.ohlcv)
        return [candle_to_json(c) for c in candles]

    def parse(self, body: Any) -> dict[str, Any]:
        if isinstance(body, str):
            body = {"signature": body}
        if not isinstance(body, Mapping):
            raise ApiError(400, "bad_request", "body must be a signature or a transaction document")
        if "signature" in body and "transaction" not in body:
            found = self.source.find_transaction(str(body["signature"]))
            if found is None:
                raise ApiError(404, "unknown_signature", str(body["signature"]))
            tx, meta, block_time, _ = found
        else:
            tx, meta = transaction_from_json(body)
            block_time = body.get("blockTime")
        info = decode_swap(tx, meta, self.registry, block_time)
        return {"swapInfo": info.to_json()}

    def adapter(self, chain_id: str = "solana") -> ChainAdapter:
        return ChainAdapter(chain_id, self.price, self.ohlcv, self.parse, self.source.ping)


# --- health -------------------------------------------------------------------------


class HealthMonitor:
    """Background probe of every adapter; readers never wait on it."""

    def __init__(self, probes: list[Callable[[], bool]], interval_s: float = 5.0, timeout_s: float = 2.0) -> None:
        self.probes = probes
        self.interval_s = interval_s
        self.timeout_s = timeout_s
        self.started = time.monotonic()
        self._ok = False
        self._probe_started: float | None = None
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def _probe_once(self) -> None:
        with self._lock:
            self._probe_started = time.monotonic()
        try:
            ok = all(p() for p in self.probes)
        except Exception:  # noqa: BLE001 - a failing probe is just "degraded"
            ok = False
        with self._lock:
            self._ok = ok
            self._probe_started = None

    def _loop(self) -> None:
        while not self._stop.is_set():
            self._probe_once()
            self._stop.wait(self.interval_s)

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, name="health-probe", daemon=True)
        self._thread.start()
        # give a responsive source the chance to report before the first request
        deadline = time.monotonic() + self.timeout_s
        while time.monotonic() < deadline:
            with self._lock:
                if self._ok or self._probe_started is None:
                    break
            time.sleep(0.005)

    def stop(self) -> None:
        self._stop.set()

    def source_status(self) -> str:
        with self._lock:
            stalled = self._probe_started is not None and time.monotonic() - self._probe_started > self.timeout_s
            return "ok" if self._ok and not stalled else "degraded"

    def document(self) -> dict[str, Any]:
        return {
            "status": "ok",
            "source": self.source_status(),
            "uptime_s": round(time.monotonic() - self.started, 3),
        }


# --- HTTP ---------------------------------------------------------------------------


_ERROR_MAP: list[tuple[type[Exception], int, str]] = [
    (FutureTimestamp, 400, "future_timestamp"),
    (MalformedMeta, 400, "bad_request"),
    (MalformedInstruction, 422, "malformed_instruction"),
    (NoSwapFound, 422, "no_swap_found"),
    (FailedTransaction, 422, "failed_transaction"),
    (AmbiguousSwap, 422, "ambiguous_swap"),
    (NotAvailable, 404, "not_available"),
    (RateUnavailable, 404, "rate_unavailable"),
    (TimestampBeforeHistory, 404, "not_available"),
    (MissingSolUsd, 404, "missing_sol_usd"),
    (SourceUnavailable, 503, "source_unavailable"),
]


def error_for(exc: Exception) -> ApiError:
    if isinstance(exc, ApiError):
        return exc
    for cls, status, code in _ERROR_MAP:
        if isinstance(exc, cls):
            return ApiError(status, code, str(exc))
    if isinstance(exc, LinkXploreError):
        return ApiError(500, "internal_error", str(exc))
    log.exception("unhandled error", exc_info=exc)
    return ApiError(500, "internal_error", "unexpected failure")


class Gateway:
    """Routing over an adapter registry, independent of the HTTP transport."""

    def __init__(self, adapters: AdapterRegistry, health: HealthMonitor) -> None:
        self.adapters = adapters
        self.health = health

    def handle(self, method: str, target: str, body: bytes = b"") -> tuple[int, Any]:
        url = urlsplit(target)
        params = {k: v[-1] for k, v in parse_qs(url.query).items()}
        parts = [p for p in url.path.split("/") if p]
        try:
            if parts == ["healthz"] and method == "GET":
                return 200, self.health.document()
            if parts == ["holders"] and method == "GET":
                if not params.get("mint"):
                    raise ApiError(400, "bad_request", "missing mint")
                return 501, HOLDERS_BODY
            if parts == ["parse"] and method == "POST":
                return 200, self._parse(body, params.get("chain", "solana"))
            if len(parts) == 3 and parts[0] == "linkxplore" and parts[1] in ("price", "ohlcv"):
                if method != "GET":
                    raise ApiError(405, "method_not_allowed", method)
                adapter = self.adapters.get(parts[2])
                handler = adapter.price if parts[1] == "price" else adapter.ohlcv
                return 200, handler(params)
            raise ApiError(404, "not_found", url.path)
        except Exception as exc:  # noqa: BLE001 - every failure becomes a status code
            err = error_for(exc)
            doc = {"error": err.code}
            if err.detail:
                doc["detail"] = err.detail
            return err.status, doc

    def _parse(self, body: bytes, chain: str) -> Any:
        text = body.decode("utf-8", errors="replace").strip()
        if not text:
            raise ApiError(400, "bad_request", "empty body")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            if any(c.isspace() for c in text):
                raise ApiError(400, "bad_request", "body is neither JSON nor a signature") from None
            doc = text
        return self.adapters.get(chain).parse(doc)


def _make_handler(gateway: Gateway) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "linkxplore"
        sys_version = ""

        def _respond(self, method: str) -> None:
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            status, doc = gateway.handle(method, self.path, body)
            payload = dumps(doc)
            self.send_response(status, HTTPStatus(status).phrase)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def do_GET(self) -> None:  # noqa: N802
            self._respond("GET")

        def do_POST(self) -> None:  # noqa: N802
            self._respond("POST")

        def log_message(self, fmt: str, *args: Any) -> None:
            log.info("%s %s", self.address_string(), fmt % args)

    return Handler


class Service:
    """A running gateway: HTTP server thread plus health monitor."""

    def __init__(self, gateway: Gateway, host: str, port: int) -> None:
        self.gateway = gateway
        self.server = ThreadingHTTPServer((host, port), _make_handler(gateway))
        self.server.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.server.server_address[:2]
        return str(host), int(port)

    def start(self) -> Service:
        self.gateway.health.start()
        self._thread = threading.Thread(target=self.server.serve_forever, name="gateway", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self.gateway.health.start()
        self.server.serve_forever()

    def stop(self) -> None:
        self.gateway.health.stop()
        self.server.shutdown()
        self.server.server_close()


def build_gateway(
    cfg: ServiceConfig,
    source: ChainSource | None = None,
    registry: ProgramRegistry | None = None,
    health_interval_s: float = 5.0,
    health_timeout_s: float = 0.05,
) -> Gateway:
    source = source or ChainSource(cfg.source)
    registry = registry or load_registry(cfg.registry_path)
    adapters = AdapterRegistry()
    adapters.register(SolanaHandlers(cfg, source, registry).adapter("solana"))
    health = HealthMonitor([a.probe for a in adapters], health_interval_s, health_timeout_s)
    return Gateway(adapters, health)


def build_service(cfg: ServiceConfig, **kwargs: Any) -> Service:
    host, port = parse_listen(cfg.listen_address)
    return Service(build_gateway(cfg, **kwargs), host, port)
