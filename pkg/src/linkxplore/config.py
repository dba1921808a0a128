"""Service configuration: one TOML file plus environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import tomli

from linkxplore.ohlcv import OhlcvConfig
from linkxplore.price import BaseCurrency, PriceConfig
from linkxplore.source import SourceConfig

DEFAULT_LISTEN = "127.0.0.1:8080"


def parse_listen(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not host:
        raise ValueError(f"listen address must be host:port, got {address!r}")
    port_n = int(port)
    if not 0 <= port_n <= 65535:
        raise ValueError(f"port out of range in {address!r}")
    return host.strip("[]"), port_n


@dataclass(frozen=True)
class ServiceConfig:
    source: SourceConfig
    price: PriceConfig = field(default_factory=PriceConfig)
    ohlcv: OhlcvConfig = field(default_factory=OhlcvConfig)
    listen_address: str = DEFAULT_LISTEN
    registry_path: str | None = None
    sol_usd_csv: str | None = None

    def __post_init__(self) -> None:
        parse_listen(self.listen_address)


def _pick(cls, table: Mapping[str, Any], what: str) -> dict[str, Any]:
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ValueError(f"unknown keys in [{what}]: {sorted(unknown)}")
    return dict(table)


def _relative(base: Path, value: str | None) -> str | None:
    if value is None:
        return None
    p = Path(value)
    return str(p if p.is_absolute() else base / p)


def config_from_dict(
    data: Mapping[str, Any],
    base_dir: Path = Path("."),
    environ: Mapping[str, str] | None = None,
) -> ServiceConfig:
    environ = os.environ if environ is None else environ
    source_tbl = _pick(SourceConfig, data.get("source", {}), "source")
    if "fixture_path" in source_tbl:
        source_tbl["fixture_path"] = _relative(base_dir, source_tbl["fixture_path"])
    if "CHAIN_RPC_URL" in environ:
        source_tbl["endpoint_url"] = environ["CHAIN_RPC_URL"]
    source = SourceConfig(**source_tbl)

    price_tbl = _pick(PriceConfig, data.get("price", {}), "price")
    if "dust" in price_tbl:
        dust = dict(PriceConfig().dust)
        dust.update({BaseCurrency.parse(k): float(v) for k, v in price_tbl["dust"].items()})
        price_tbl["dust"] = dust
    for key in ("oracle_path", "midquote_path"):
        if key in price_tbl:
            price_tbl[key] = _relative(base_dir, price_tbl[key])
    price = PriceConfig(**price_tbl)
    ohlcv = OhlcvConfig(**_pick(OhlcvConfig, data.get("ohlcv", {}), "ohlcv"))

    top = {k: v for k, v in data.items() if k not in ("source", "price", "ohlcv")}
    unknown = set(top) - {"listen_address", "registry_path", "sol_usd_csv"}
    if unknown:
        raise ValueError(f"unknown top-level keys: {sorted(unknown)}")
    listen = environ.get("LISTEN_ADDR", top.get("listen_address", DEFAULT_LISTEN))
    return ServiceConfig(
        source=source,
        price=price,
        ohlcv=ohlcv,
        listen_address=listen,
        registry_path=_relative(base_dir, top.get("registry_path")),
        sol_usd_csv=_relative(base_dir, top.get("sol_usd_csv")),
    )


def load_config(
    path: str | Path | None = None,
    environ: Mapping[str, str] | None = None,
    **source_overrides: Any,
) -> ServiceConfig:
    """Read ``path`` (if given), then apply env vars and explicit source overrides."""
    data: dict[str, Any] = {}
    base_dir = Path(".")
    if path is not None:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
        base_dir = Path(path).resolve().parent
    overrides = {k: v for k, v in source_overrides.items() if v is not None}
    if overrides:
        data = {**data, "source": {**data.get("source", {}), **overrides}}
    return config_from_dict(data, base_dir, environ)


def with_listen(cfg: ServiceConfig, address: str | None) -> ServiceConfig:
    return cfg if address is None else replace(cfg, listen_address=address)
