import pytest

from linkxplore.config import (
    ServiceConfig,
    config_from_dict,
    load_config,
    parse_listen,
    with_listen,
)
from linkxplore.price import BaseCurrency
from linkxplore.source import SourceConfig


def test_parse_listen():
    assert parse_listen("127.0.0.1:8080") == ("127.0.0.1", 8080)
    assert parse_listen("[::1]:9") == ("::1", 9)
    for bad in ("8080", ":80", "host:99999"):
        with pytest.raises(ValueError):
            parse_listen(bad)


def test_service_config_validates_listen():
    with pytest.raises(ValueError):
        ServiceConfig(SourceConfig(fixture_path="x"), listen_address="nope")


def test_toml_file(tmp_path):
    path = tmp_path / "svc.toml"
    path.write_text(
        'listen_address = "0.0.0.0:9000"\n'
        'sol_usd_csv = "sol.csv"\n'
        "[source]\n"
        'fixture_path = "blocks.ndjson"\n'
        "max_requests_per_second = 50\n"
        "[price]\n"
        "fence_ratio = 2.0\n"
        "dust = { USDC = 0.5 }\n"
        "[ohlcv]\n"
        "vwap_close = true\n"
    )
    cfg = load_config(path, environ={})
    assert cfg.listen_address == "0.0.0.0:9000"
    assert cfg.source.fixture_path == str(tmp_path / "blocks.ndjson")
    assert cfg.source.max_requests_per_second == 50
    assert cfg.sol_usd_csv == str(tmp_path / "sol.csv")
    assert cfg.price.fence_ratio == 2.0
    assert cfg.price.dust[BaseCurrency.USDC] == 0.5 and cfg.price.dust[BaseCurrency.SOL] == 1e-4
    assert cfg.ohlcv.vwap_close


def test_env_overrides():
    env = {"CHAIN_RPC_URL": "http://node:8899", "LISTEN_ADDR": "127.0.0.1:1"}
    cfg = config_from_dict({"source": {"fixture_path": "/f"}}, environ=env)
    assert cfg.source.endpoint_url == "http://node:8899" and cfg.listen_address == "127.0.0.1:1"


def test_explicit_overrides_and_listen():
    cfg = load_config(environ={}, fixture_path="/tmp/f.ndjson", endpoint_url=None)
    assert cfg.source.fixture_path == "/tmp/f.ndjson" and cfg.source.endpoint_url is None
    assert with_listen(cfg, "127.0.0.1:0").listen_address == "127.0.0.1:0"


def test_unknown_keys_rejected():
    with pytest.raises(ValueError):
        config_from_dict({"source": {"fixture_path": "/f", "bogus": 1}}, environ={})
    with pytest.raises(ValueError):
        config_from_dict({"source": {"fixture_path": "/f"}, "colour": "red"}, environ={})


def test_backend_required():
    with pytest.raises(ValueError):
        config_from_dict({}, environ={})
