"""Program-id registry: which venue a program belongs to and how its events are tagged."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from linkxplore.ledger import Mint, coalesce_sol

JUPITER = "JUPITER"
OKX = "OKX"
PUMP_FUN = "PUMP_FUN"
PUMP_FUN_AMM = "PUMP_FUN_AMM"
RAYDIUM = "RAYDIUM"
ORCA = "ORCA"
METEORA = "METEORA"
BOT_ROUTER = "BOT_ROUTER"
TOKEN = "TOKEN"
TOKEN_2022 = "TOKEN_2022"

VENUES = frozenset(
    {JUPITER, OKX, PUMP_FUN, PUMP_FUN_AMM, RAYDIUM, ORCA, METEORA, BOT_ROUTER, TOKEN, TOKEN_2022}
)
AMM_VENUES = frozenset({RAYDIUM, ORCA, METEORA, PUMP_FUN, PUMP_FUN_AMM})
PUMP_VENUES = frozenset({PUMP_FUN, PUMP_FUN_AMM})
TOKEN_VENUES = frozenset({TOKEN, TOKEN_2022})
# outer programs that make a transaction worth decoding even without a mint hit;
# every venue that can produce swap evidence, so the prefilter never drops a swap
PREFILTER_VENUES = VENUES - TOKEN_VENUES

DISCRIMINATOR_LEN = 8


def _disc(value: str, what: str) -> bytes:
    raw = bytes.fromhex(value)
    if len(raw) != DISCRIMINATOR_LEN:
        raise ValueError(f"{what}: discriminators are {DISCRIMINATOR_LEN} bytes, got {len(raw)}")
    return raw


@dataclass(frozen=True)
class ProgramRegistry:
    programs: Mapping[str, str]
    discriminators: Mapping[str, Mapping[str, bytes]] = field(default_factory=dict)
    event_cpi_prefix: bytes | None = None
    event_prefix_required: bool = False
    jupiter_dca: frozenset[str] = frozenset()
    bot_routers: frozenset[str] = frozenset()
    okx_log_patterns: tuple[re.Pattern[str], re.Pattern[str]] | None = None
    okx_mint_positions: tuple[int, int] = (3, 4)
    base_mints: Mapping[str, Mint] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> ProgramRegistry:
        programs = dict(obj.get("programs", {}))
        for pid, venue in programs.items():
            if venue not in VENUES:
                raise ValueError(f"unknown venue tag {venue!r} for program {pid}")
        bots = frozenset(obj.get("botRouters", ()))
        for pid in bots:
            programs.setdefault(pid, BOT_ROUTER)
        discs = {
            venue: {name: _disc(hexval, f"{venue}.{name}") for name, hexval in table.items()}
            for venue, table in obj.get("discriminators", {}).items()
        }
        prefix = obj.get("eventCpiPrefix")
        okx = obj.get("okx") or {}
        patterns = okx.get("logPatterns")
        if patterns is not None and len(patterns) != 2:
            raise ValueError("okx.logPatterns must hold exactly two patterns (source, destination)")
        return cls(
            programs=programs,
            discriminators=discs,
            event_cpi_prefix=_disc(prefix, "eventCpiPrefix") if prefix else None,
            event_prefix_required=bool(obj.get("eventPrefixRequired", False)),
            jupiter_dca=frozenset(obj.get("jupiterDca", ())),
            bot_routers=bots,
            okx_log_patterns=(re.compile(patterns[0]), re.compile(patterns[1])) if patterns else None,
            okx_mint_positions=tuple(okx.get("mintAccountPositions", (3, 4))),  # type: ignore[arg-type]
            base_mints={k: coalesce_sol(v) for k, v in obj.get("baseMints", {}).items()},
        )

    def venue(self, program_id: str) -> str | None:
        return self.programs.get(program_id)

    def discriminator(self, venue: str, name: str) -> bytes | None:
        return self.discriminators.get(venue, {}).get(name)

    def match_event(self, data: bytes, disc: bytes | None) -> int | None:
        """Return the payload offset if ``data`` carries event ``disc``, else None.

        Self-CPI event data is ``prefix || disc || payload``; bare ``disc || payload``
        is accepted unless the registry requires the prefix.
        """
        if disc is None:
            return None
        if self.event_cpi_prefix is not None:
            head = self.event_cpi_prefix + disc
            if data.startswith(head):
                return len(head)
            if self.event_prefix_required:
                return None
        if data.startswith(disc):
            return len(disc)
        return None


def load_registry(path: str | Path | None = None) -> ProgramRegistry:
    """Load a registry file; without a path, the bundled mainnet defaults."""
    if path is None:
        text = resources.files("linkxplore.data").joinpath("registry.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return ProgramRegistry.from_dict(json.loads(text))
