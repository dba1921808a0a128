import json

import pytest
from builders import RAYDIUM_V4, USDC

from linkxplore.ledger import Mint
from linkxplore.registry import (
    BOT_ROUTER,
    PREFILTER_VENUES,
    TOKEN_VENUES,
    ProgramRegistry,
    load_registry,
)


def test_bundled_registry():
    reg = load_registry()
    assert reg.venue(RAYDIUM_V4) == "RAYDIUM"
    assert reg.base_mints["USDC"] == Mint(USDC)
    assert len(reg.discriminator("JUPITER", "routeEvent")) == 8
    assert reg.venue("unknown") is None


def test_prefilter_covers_every_evidence_venue():
    assert not PREFILTER_VENUES & TOKEN_VENUES
    assert {"RAYDIUM", "ORCA", "METEORA", "JUPITER", "OKX", "PUMP_FUN", "PUMP_FUN_AMM", BOT_ROUTER} <= PREFILTER_VENUES


def test_match_event_with_and_without_prefix():
    reg = load_registry()
    disc = reg.discriminator("JUPITER", "routeEvent")
    assert reg.match_event(reg.event_cpi_prefix + disc + b"x", disc) == 16
    assert reg.match_event(disc + b"x", disc) == 8
    assert reg.match_event(b"\x00" * 20, disc) is None
    strict = ProgramRegistry(reg.programs, reg.discriminators, reg.event_cpi_prefix, True)
    assert strict.match_event(disc + b"x", disc) is None


def test_bot_routers_are_tagged(tmp_path):
    path = tmp_path / "r.json"
    path.write_text(json.dumps({"programs": {}, "botRouters": ["BotRouter111"]}))
    assert load_registry(path).venue("BotRouter111") == BOT_ROUTER


@pytest.mark.parametrize(
    "doc",
    [
        {"programs": {"x": "NOT_A_VENUE"}},
        {"programs": {}, "discriminators": {"JUPITER": {"routeEvent": "00"}}},
        {"programs": {}, "okx": {"logPatterns": ["a"]}},
    ],
)
def test_invalid_registry(doc):
    with pytest.raises(ValueError):
        ProgramRegistry.from_dict(doc)
