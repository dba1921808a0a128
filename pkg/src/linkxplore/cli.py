"""Command line entry point; each subcommand mirrors one HTTP route or offline tool."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import Sequence

from linkxplore.bench import load_samples, render_table
from linkxplore.config import ServiceConfig, load_config, with_listen
from linkxplore.cost import (
    EventCostParams,
    StreamCostParams,
    curves_to_csv,
    emit_cost_curves,
    plot_curves,
)
from linkxplore.errors import LinkXploreError
from linkxplore.gateway import (
    ApiError,
    SolanaHandlers,
    build_service,
    dumps,
    parse_mint,
    parse_time,
)
from linkxplore.ohlcv import build_candles, candles_to_csv, collect_swaps
from linkxplore.registry import load_registry
from linkxplore.source import ChainSource

log = logging.getLogger("linkxplore")


def _add_source_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--fixtures", dest="fixture_path", help="NDJSON fixture store of recorded blocks")
    p.add_argument("--rpc-url", dest="endpoint_url", help="Solana JSON-RPC endpoint")


def _service_config(args: argparse.Namespace) -> ServiceConfig:
    return load_config(args.config, fixture_path=args.fixture_path, endpoint_url=args.endpoint_url)


def _handlers(cfg: ServiceConfig) -> SolanaHandlers:
    return SolanaHandlers(cfg, ChainSource(cfg.source), load_registry(cfg.registry_path))


def _frange(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0 or hi < lo:
        raise ValueError("need step > 0 and t-max >= t-min")
    n = int(round((hi - lo) / step))
    return [lo + i * step for i in range(n + 1)]


def cmd_price(args: argparse.Namespace) -> int:
    params = {"mint": args.mint, "t": args.t}
    if args.base:
        params["base"] = args.base
    doc = _handlers(_service_config(args)).price(params)
    print(dumps(doc).decode())
    return 0


def cmd_ohlcv(args: argparse.Namespace) -> int:
    cfg = _service_config(args)
    cfg = replace(cfg, ohlcv=replace(cfg.ohlcv, vwap_close=args.vwap_close or cfg.ohlcv.vwap_close,
                                     carry_close=args.carry_close or cfg.ohlcv.carry_close))
    h = _handlers(cfg)
    if args.json:
        doc = h.ohlcv({"mint": args.mint, "from": args.t_from, "to": args.t_to, "interval": str(args.interval)})
        print(dumps(doc).decode())
        return 0
    t_from, t_to = parse_time(args.t_from, "from"), parse_time(args.t_to, "to")
    if not t_from < t_to or args.interval <= 0:
        raise ValueError("need from < to and a positive interval")
    mint = parse_mint(args.mint)
    swaps = collect_swaps(h.source, h.registry, mint, t_from, t_to)
    candles = build_candles(swaps, mint, args.interval, t_from, t_to, h.sol_usd, h.registry, cfg.ohlcv)
    sys.stdout.write(candles_to_csv(candles))
    return 0


def cmd_parse(args: argparse.Namespace) -> int:
    h = _handlers(_service_config(args))
    if args.file:
        with open(args.file, encoding="utf-8") as fh:
            body = json.load(fh)
    else:
        body = {"signature": args.signature}
    print(dumps(h.parse(body)).decode())
    return 0


def cmd_cost(args: argparse.Namespace) -> int:
    ts = [float(t) for t in args.t] if args.t else _frange(args.t_min, args.t_max, args.step)
    rows = emit_cost_curves(
        ts,
        args.scenario,
        StreamCostParams(p_cu=args.p_cu, c_req=args.c_req, r=args.r, mu=args.mu, sigma=args.sigma, lam=args.lam),
        EventCostParams(p_ru=args.p_ru, lam=args.lam, retention_boundary_hours=args.retention_hours),
        stream_module_cost=args.stream_module_cost,
    )
    sys.stdout.write(curves_to_csv(rows))
    if args.plot:
        plot_curves(rows, args.plot, title=f"{args.scenario} scenario")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    sys.stdout.write(render_table(load_samples(args.input)))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = with_listen(_service_config(args), args.listen)
    service = build_service(cfg)
    host, port = service.address
    print(f"listening on {host}:{port}", file=sys.stderr, flush=True)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linkxplore", description="Self-hosted Solana DEX market data")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="price of a mint at a timestamp")
    _add_source_args(p)
    p.add_argument("--mint", required=True)
    p.add_argument("--t", required=True, help="unix seconds or RFC 3339")
    p.add_argument("--base", help="comma separated preference, e.g. SOL,USDC")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("ohlcv", help="USD candles for a mint")
    _add_source_args(p)
    p.add_argument("--mint", required=True)
    p.add_argument("--from", dest="t_from", required=True)
    p.add_argument("--to", dest="t_to", required=True)
    p.add_argument("--interval", type=int, default=60, help="bucket width in seconds")
    p.add_argument("--vwap-close", action="store_true")
    p.add_argument("--carry-close", action="store_true")
    p.add_argument("--json", action="store_true", help="emit the HTTP JSON document instead of CSV")
    p.set_defaults(func=cmd_ohlcv)

    p = sub.add_parser("parse", help="decode one transaction into a swap")
    _add_source_args(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--signature")
    src.add_argument("--file", help="JSON document with transaction and meta")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("cost", help="cost comparison curves as CSV")
    p.add_argument("--scenario", choices=("stream", "event"), default="stream")
    p.add_argument("--t", nargs="+", help="explicit hour values")
    p.add_argument("--t-min", type=float, default=0.0)
    p.add_argument("--t-max", type=float, default=48.0)
    p.add_argument("--step", type=float, default=1.0)
    defaults_s, defaults_e = StreamCostParams(), EventCostParams()
    p.add_argument("--p-cu", type=float, default=defaults_s.p_cu)
    p.add_argument("--c-req", type=float, default=defaults_s.c_req)
    p.add_argument("--r", type=float, default=defaults_s.r)
    p.add_argument("--mu", type=float, default=defaults_s.mu)
    p.add_argument("--sigma", type=float, default=defaults_s.sigma)
    p.add_argument("--lam", type=float, default=defaults_s.lam)
    p.add_argument("--p-ru", type=float, default=defaults_e.p_ru)
    p.add_argument("--retention-hours", type=float, default=defaults_e.retention_boundary_hours)
    p.add_argument("--stream-module-cost", type=float, default=0.0, help="module USD per hour when streaming")
    p.add_argument("--plot", help="also write an SVG chart to this path")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("bench", help="error statistics against a reference feed")
    p.add_argument("--input", required=True, help="CSV asset,timestamp,predicted,reference")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP gateway")
    _add_source_args(p)
    p.add_argument("--listen", help="host:port (overrides LISTEN_ADDR and config)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ApiError as exc:
        print(f"error: {exc.code}: {exc.detail}", file=sys.stderr)
    except (LinkXploreError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
