"""Turn one confirmed ``(tx, meta)`` pair into a single :class:`SwapInfo`.

Router and event evidence is preferred; token-transfer legs are aggregated only
when nothing more authoritative was emitted. Priority, highest first: Jupiter
route events, OKX log aggregates, Pump.fun trade evidence, transfer legs.
"""

from __future__ import annotations

import enum
import re
import struct
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Mapping

import base58

from linkxplore.errors import (
    AmbiguousSwap,
    FailedTransaction,
    MalformedInstruction,
    MalformedMeta,
    NoSwapFound,
)
from linkxplore.ledger import (
    SOL,
    SOL_DECIMALS,
    Instruction,
    Mint,
    SwapInfo,
    TransactionMeta,
    TransactionRecord,
    account_key_table,
    coalesce_sol,
    resolve,
    validate_pair,
)
from linkxplore.registry import (
    AMM_VENUES,
    BOT_ROUTER,
    JUPITER,
    OKX,
    PUMP_VENUES,
    TOKEN,
    TOKEN_2022,
    ProgramRegistry,
)

OP_TRANSFER = 3
OP_TRANSFER_CHECKED = 12

DEFAULT_TOKEN_PROGRAMS = frozenset(
    {
        "TokenkegQfeZyiNwAJbNbGKPFXCWuBvf9Ss623VQ5DA",
        "TokenzQdBNbLqP5VEhdkAS6EPFLC1PHnBqCXEpPxuEb",
    }
)

TokenAccountInfo = dict[str, tuple[Mint, int]]
DecimalsTable = dict[Mint, int]

_TOP_LEVEL_INVOKE = re.compile(r"^Program (\S+) invoke \[1\]$")


class EvidenceKind(enum.IntEnum):
    # lower value wins
    JUPITER_ROUTE_EVENT = 0
    OKX_LOG_AGGREGATE = 1
    PUMP_FUN_TRADE = 2
    LEG = 3


@dataclass(frozen=True)
class SwapLeg:
    mint: Mint
    amount: int
    direction: str | None  # "in" / "out" relative to the signer, None for third-party moves
    source: str
    destination: str
    authority: str
    outer_index: int
    inner_position: int

    @property
    def leg_key(self) -> tuple[str, str, str, int, int]:
        # inner position is left out on purpose: a replayed copy of the same
        # transfer under the same outer instruction must collapse to one leg
        return (self.source, self.destination, self.mint.address, self.amount, self.outer_index)


@dataclass(frozen=True)
class RouteHop:
    amm: str
    in_mint: Mint
    in_amount: int
    out_mint: Mint
    out_amount: int


@dataclass(frozen=True)
class TradeSides:
    in_mint: Mint
    in_amount: int
    out_mint: Mint
    out_amount: int


@dataclass(frozen=True)
class Evidence:
    kind: EvidenceKind
    venue: str
    outer_index: int
    payload: RouteHop | TradeSides | SwapLeg


def _token_programs(registry: ProgramRegistry | None) -> frozenset[str]:
    if registry is None:
        return DEFAULT_TOKEN_PROGRAMS
    ids = {pid for pid, venue in registry.programs.items() if venue in (TOKEN, TOKEN_2022)}
    return frozenset(ids) or DEFAULT_TOKEN_PROGRAMS


def _iter_all(tx: TransactionRecord, meta: TransactionMeta) -> Iterable[Instruction]:
    for i, outer in enumerate(tx.instructions):
        yield outer
        yield from meta.inner_instructions.get(i, ())


def build_token_tables(
    tx: TransactionRecord,
    meta: TransactionMeta,
    registry: ProgramRegistry | None = None,
) -> tuple[TokenAccountInfo, DecimalsTable]:
    """Build the account -> (mint, decimals) and mint -> decimals lookups."""
    table = account_key_table(tx)
    tinfo: TokenAccountInfo = {}
    decs: DecimalsTable = {}
    # post balances win; pre balances only fill accounts closed during the transaction
    for entry in (*meta.post_token_balances, *meta.pre_token_balances):
        acct = resolve(table, entry.account_index)
        mint = coalesce_sol(entry.mint)
        tinfo.setdefault(acct, (mint, entry.decimals))
        decs.setdefault(mint, entry.decimals)

    token_programs = _token_programs(registry)
    transfers = [
        inst
        for inst in _iter_all(tx, meta)
        if inst.data and resolve(table, inst.program_id_index) in token_programs
    ]
    for inst in transfers:
        if inst.data[0] == OP_TRANSFER_CHECKED and len(inst.data) >= 10 and len(inst.accounts) >= 3:
            src, mint_key, dst = (resolve(table, a) for a in inst.accounts[:3])
            mint = coalesce_sol(mint_key)
            decs.setdefault(mint, inst.data[9])
            tinfo.setdefault(src, (mint, decs[mint]))
            tinfo.setdefault(dst, (mint, decs[mint]))
    # a plain Transfer moves one mint, so a known side names the other
    for _ in range(2):
        for inst in transfers:
            if inst.data[0] == OP_TRANSFER and len(inst.accounts) >= 2:
                src, dst = (resolve(table, a) for a in inst.accounts[:2])
                if src in tinfo and dst not in tinfo:
                    tinfo[dst] = tinfo[src]
                elif dst in tinfo and src not in tinfo:
                    tinfo[src] = tinfo[dst]
    decs[SOL] = SOL_DECIMALS
    return tinfo, decs


def _u64(data: bytes, offset: int) -> int:
    return struct.unpack_from("<Q", data, offset)[0]


def _pubkey(data: bytes, offset: int) -> str:
    return base58.b58encode(data[offset : offset + 32]).decode("ascii")


def token_owners(tx: TransactionRecord, meta: TransactionMeta) -> dict[str, str]:
    table = account_key_table(tx)
    owners: dict[str, str] = {}
    for entry in (*meta.post_token_balances, *meta.pre_token_balances):
        if entry.owner is not None:
            owners.setdefault(resolve(table, entry.account_index), entry.owner)
    return owners


def parse_token_transfer(
    inst: Instruction,
    table: tuple[str, ...],
    tinfo: TokenAccountInfo,
    *,
    signer: str | None = None,
    owners: Mapping[str, str] | None = None,
    outer_index: int = 0,
    inner_position: int = 0,
) -> SwapLeg | None:
    """Decode a Token / Token-2022 ``Transfer`` or ``TransferChecked``.

    Returns None when the instruction is some other token opcode. Raises
    :class:`MalformedInstruction` for truncated data or an unresolvable mint.
    """
    data = inst.data
    if not data or data[0] not in (OP_TRANSFER, OP_TRANSFER_CHECKED):
        return None
    if len(data) < 9:
        raise MalformedInstruction(f"transfer data truncated to {len(data)} bytes")
    amount = _u64(data, 1)
    if data[0] == OP_TRANSFER:
        if len(inst.accounts) < 3:
            raise MalformedInstruction("Transfer needs source, destination, authority")
        src, dst, auth = (resolve(table, a) for a in inst.accounts[:3])
        known = tinfo.get(src) or tinfo.get(dst)
        if known is None:
            raise MalformedInstruction(f"no mint known for token account {src}")
        mint = known[0]
    else:
        if len(data) < 10:
            raise MalformedInstruction("TransferChecked data lacks the decimals byte")
        if len(inst.accounts) < 4:
            raise MalformedInstruction("TransferChecked needs source, mint, destination, authority")
        src, mint_key, dst, auth = (resolve(table, a) for a in inst.accounts[:4])
        mint = coalesce_sol(mint_key)

    direction = None
    if signer is not None:
        owners = owners or {}
        if auth == signer or owners.get(src) == signer:
            direction = "out"
        elif owners.get(dst) == signer or dst == signer:
            direction = "in"
    return SwapLeg(
        mint=mint,
        amount=amount,
        direction=direction,
        source=src,
        destination=dst,
        authority=auth,
        outer_index=outer_index,
        inner_position=inner_position,
    )


def effective_signer(tx: TransactionRecord, registry: ProgramRegistry) -> tuple[str, int]:
    """The swapping wallet and its key-table index (index 2 under Jupiter DCA)."""
    table = account_key_table(tx)
    for outer in tx.instructions:
        if resolve(table, outer.program_id_index) in registry.jupiter_dca:
            if len(table) < 3:
                raise MalformedMeta("Jupiter DCA transaction with fewer than three keys")
            return table[2], 2
    return table[0], 0


def split_logs_by_outer(logs: Iterable[str], n_outer: int) -> list[list[str]] | None:
    """Group log lines by the top-level invocation that produced them."""
    groups: list[list[str]] = []
    for line in logs:
        if _TOP_LEVEL_INVOKE.match(line):
            groups.append([])
        if groups:
            groups[-1].append(line)
    if len(groups) != n_outer:
        return None
    return groups


class _Harvester:
    def __init__(
        self,
        tx: TransactionRecord,
        meta: TransactionMeta,
        registry: ProgramRegistry,
        tables: tuple[TokenAccountInfo, DecimalsTable],
        diagnostics: list[str],
    ) -> None:
        self.tx = tx
        self.meta = meta
        self.registry = registry
        self.table = account_key_table(tx)
        self.tinfo, self.decs = tables
        self.signer, _ = effective_signer(tx, registry)
        self.owners = token_owners(tx, meta)
        self.token_programs = _token_programs(registry)
        self.diagnostics = diagnostics
        self.log_groups = split_logs_by_outer(meta.log_messages, len(tx.instructions))

    def legs_under(self, i: int, *, checked_only: bool = False) -> list[SwapLeg]:
        legs = []
        for pos, inner in enumerate(self.meta.inner_instructions.get(i, ())):
            if resolve(self.table, inner.program_id_index) not in self.token_programs:
                continue
            if checked_only and (not inner.data or inner.data[0] != OP_TRANSFER_CHECKED):
                continue
            try:
                leg = parse_token_transfer(
                    inner,
                    self.table,
                    self.tinfo,
                    signer=self.signer,
                    owners=self.owners,
                    outer_index=i,
                    inner_position=pos,
                )
            except MalformedInstruction as exc:
                self.diagnostics.append(f"outer {i} inner {pos}: {exc}")
                continue
            if leg is not None and leg.amount > 0:
                legs.append(leg)
        return legs

    def jupiter_hops(self, i: int) -> list[RouteHop]:
        disc = self.registry.discriminator(JUPITER, "routeEvent")
        hops = []
        for pos, inner in enumerate(self.meta.inner_instructions.get(i, ())):
            offset = self.registry.match_event(inner.data, disc)
            if offset is None:
                continue
            body = inner.data[offset:]
            if len(body) < 112:
                self.diagnostics.append(f"outer {i} inner {pos}: route event truncated")
                continue
            hops.append(
                RouteHop(
                    amm=_pubkey(body, 0),
                    in_mint=coalesce_sol(_pubkey(body, 32)),
                    in_amount=_u64(body, 64),
                    out_mint=coalesce_sol(_pubkey(body, 72)),
                    out_amount=_u64(body, 104),
                )
            )
        return hops

    def okx_aggregate(self, i: int, outer: Instruction) -> TradeSides | None:
        patterns = self.registry.okx_log_patterns
        if patterns is None:
            return None
        logs = self.log_groups[i] if self.log_groups is not None else list(self.meta.log_messages)
        src_delta = dst_delta = None
        for line in logs:
            if src_delta is None and (m := patterns[0].search(line)):
                src_delta = int(m.group(1))
            if dst_delta is None and (m := patterns[1].search(line)):
                dst_delta = int(m.group(1))
        if src_delta is None or dst_delta is None:
            return None
        src_pos, dst_pos = self.registry.okx_mint_positions
        if max(src_pos, dst_pos) >= len(outer.accounts):
            self.diagnostics.append(f"outer {i}: OKX instruction lacks mint accounts")
            return None
        in_mint = coalesce_sol(resolve(self.table, outer.accounts[src_pos]))
        out_mint = coalesce_sol(resolve(self.table, outer.accounts[dst_pos]))
        if in_mint == out_mint or src_delta == 0 or dst_delta == 0:
            self.diagnostics.append(f"outer {i}: degenerate OKX aggregate")
            return None
        return TradeSides(in_mint, src_delta, out_mint, dst_delta)

    def pump_events(self, i: int, venue: str) -> list[TradeSides]:
        disc = self.registry.discriminator(venue, "tradeEvent")
        out = []
        for pos, inner in enumerate(self.meta.inner_instructions.get(i, ())):
            offset = self.registry.match_event(inner.data, disc)
            if offset is None:
                continue
            body = inner.data[offset:]
            if len(body) < 49:
                self.diagnostics.append(f"outer {i} inner {pos}: trade event truncated")
                continue
            mint = coalesce_sol(_pubkey(body, 0))
            sol_amount, token_amount, is_buy = _u64(body, 32), _u64(body, 40), body[48] != 0
            if sol_amount == 0 or token_amount == 0:
                continue
            if is_buy:
                out.append(TradeSides(SOL, sol_amount, mint, token_amount))
            else:
                out.append(TradeSides(mint, token_amount, SOL, sol_amount))
        return out

    def pump_instruction_aggregate(self, i: int, outer: Instruction, venue: str) -> TradeSides | None:
        buy = self.registry.discriminator(venue, "buy")
        sell = self.registry.discriminator(venue, "sell")
        if not any(d is not None and outer.data.startswith(d) for d in (buy, sell)):
            return None
        sums: dict[str, OrderedDict[Mint, int]] = {"in": OrderedDict(), "out": OrderedDict()}
        for leg in _unique(self.legs_under(i, checked_only=True)):
            if leg.direction is not None:
                bucket = sums[leg.direction]
                bucket[leg.mint] = bucket.get(leg.mint, 0) + leg.amount
        mints = set(sums["in"]) | set(sums["out"])
        if len(mints) != 2 or len(sums["in"]) != 1 or len(sums["out"]) != 1:
            self.diagnostics.append(f"outer {i}: Pump.fun transfers inconsistent")
            return None
        (out_mint, out_amount), = sums["in"].items()
        (in_mint, in_amount), = sums["out"].items()
        if in_mint == out_mint or not in_amount or not out_amount:
            return None
        return TradeSides(in_mint, in_amount, out_mint, out_amount)

    def run(self) -> list[Evidence]:
        evidence: list[Evidence] = []
        found = False

        def add_legs(i: int, venue: str, legs: list[SwapLeg]) -> None:
            evidence.extend(Evidence(EvidenceKind.LEG, venue, i, leg) for leg in legs)

        for i, outer in enumerate(self.tx.instructions):
            venue = self.registry.venue(resolve(self.table, outer.program_id_index))
            if venue == JUPITER:
                hops = self.jupiter_hops(i)
                if hops:
                    evidence.extend(
                        Evidence(EvidenceKind.JUPITER_ROUTE_EVENT, JUPITER, i, h) for h in hops
                    )
                    found = True
                else:
                    legs = self.legs_under(i)
                    add_legs(i, JUPITER, legs)
                    found = found or bool(legs)
            elif venue == OKX:
                agg = self.okx_aggregate(i, outer)
                if agg is not None:
                    evidence.append(Evidence(EvidenceKind.OKX_LOG_AGGREGATE, OKX, i, agg))
                legs = self.legs_under(i)
                add_legs(i, OKX, legs)
                found = found or bool(legs)
            elif venue in PUMP_VENUES:
                events = self.pump_events(i, venue)
                if events:
                    evidence.extend(Evidence(EvidenceKind.PUMP_FUN_TRADE, venue, i, e) for e in events)
                    found = True
                else:
                    agg = self.pump_instruction_aggregate(i, outer, venue)
                    if agg is not None:
                        evidence.append(Evidence(EvidenceKind.PUMP_FUN_TRADE, venue, i, agg))
                        found = True
            elif venue == BOT_ROUTER:
                add_legs(i, BOT_ROUTER, self.legs_under(i))

        if not found:
            for i, outer in enumerate(self.tx.instructions):
                venue = self.registry.venue(resolve(self.table, outer.program_id_index))
                if venue in AMM_VENUES:
                    add_legs(i, venue, self.legs_under(i))
        return evidence


def harvest_evidence(
    tx: TransactionRecord,
    meta: TransactionMeta,
    registry: ProgramRegistry,
    tables: tuple[TokenAccountInfo, DecimalsTable] | None = None,
    diagnostics: list[str] | None = None,
) -> list[Evidence]:
    """Walk outer instructions and collect swap evidence from their inner sets."""
    if tables is None:
        tables = build_token_tables(tx, meta, registry)
    return _Harvester(tx, meta, registry, tables, diagnostics if diagnostics is not None else []).run()


def _unique(legs: Iterable[SwapLeg]) -> list[SwapLeg]:
    seen: set[tuple] = set()
    out = []
    for leg in legs:
        if leg.leg_key not in seen:
            seen.add(leg.leg_key)
            out.append(leg)
    return out


def _route_sides(hops: list[RouteHop]) -> TradeSides:
    """Net route input / output over all hops; intermediate mints cancel."""
    net: OrderedDict[Mint, int] = OrderedDict()
    for hop in hops:
        net[hop.in_mint] = net.get(hop.in_mint, 0) - hop.in_amount
        net[hop.out_mint] = net.get(hop.out_mint, 0) + hop.out_amount
    consumed = [(m, -v) for m, v in net.items() if v < 0]
    produced = [(m, v) for m, v in net.items() if v > 0]
    if not consumed or not produced:
        raise AmbiguousSwap("route events do not net to an input and an output")
    in_mint, in_amount = max(consumed, key=lambda mv: mv[1])
    out_mint, out_amount = max(produced, key=lambda mv: mv[1])
    return TradeSides(in_mint, in_amount, out_mint, out_amount)


def _combine(sides: list[TradeSides]) -> TradeSides:
    first = sides[0]
    same = [s for s in sides if (s.in_mint, s.out_mint) == (first.in_mint, first.out_mint)]
    return TradeSides(
        first.in_mint,
        sum(s.in_amount for s in same),
        first.out_mint,
        sum(s.out_amount for s in same),
    )


def aggregate_legs(legs: list[SwapLeg]) -> tuple[TradeSides, frozenset[int]]:
    """Sum unique legs per mint and pick (input, output).

    Returns the chosen sides and the outer indexes that contributed legs.
    """
    legs = _unique(sorted(legs, key=lambda leg: (leg.outer_index, leg.inner_position)))
    totals: OrderedDict[Mint, int] = OrderedDict()
    for leg in legs:
        totals[leg.mint] = totals.get(leg.mint, 0) + leg.amount
    if len(totals) < 2:
        raise AmbiguousSwap(f"legs cover {len(totals)} distinct mint(s)")
    order = list(totals)
    outflows = [leg.mint for leg in legs if leg.direction == "out"]
    if outflows:
        in_mint = outflows[0]
        inflows = [leg.mint for leg in legs if leg.direction == "in" and leg.mint != in_mint]
        out_mint = inflows[-1] if inflows else [m for m in order if m != in_mint][-1]
    else:
        in_mint, out_mint = order[0], order[-1]
    used = frozenset(leg.outer_index for leg in legs if leg.mint in (in_mint, out_mint))
    return TradeSides(in_mint, totals[in_mint], out_mint, totals[out_mint]), used


def direction_sanity(sides: TradeSides, sol_delta: int) -> TradeSides:
    """Flip input and output when the signer gained lamports while spending SOL."""
    if sol_delta > 0 and sides.in_mint == SOL:
        return TradeSides(sides.out_mint, sides.out_amount, sides.in_mint, sides.in_amount)
    return sides


def decode_swap(
    tx: TransactionRecord,
    meta: TransactionMeta,
    registry: ProgramRegistry,
    block_time: int | None = None,
    diagnostics: list[str] | None = None,
) -> SwapInfo:
    if meta.err is not None:
        raise FailedTransaction(f"{tx.signature}: transaction failed on chain")
    validate_pair(tx, meta)
    tables = build_token_tables(tx, meta, registry)
    _, decs = tables
    signer, signer_index = effective_signer(tx, registry)
    evidence = harvest_evidence(tx, meta, registry, tables, diagnostics)
    if not evidence:
        raise NoSwapFound(f"{tx.signature}: no swap evidence")

    best = min(e.kind for e in evidence)
    chosen = [e for e in evidence if e.kind == best]
    if best == EvidenceKind.JUPITER_ROUTE_EVENT:
        hops = [e.payload for e in chosen]
        sides = _route_sides(hops)  # type: ignore[arg-type]
        tags = {JUPITER} | {registry.venue(h.amm) for h in hops if registry.venue(h.amm)}  # type: ignore[union-attr]
    elif best in (EvidenceKind.OKX_LOG_AGGREGATE, EvidenceKind.PUMP_FUN_TRADE):
        sides = _combine([e.payload for e in chosen])  # type: ignore[misc]
        tags = {chosen[0].venue}
    else:
        sides, used = aggregate_legs([e.payload for e in chosen])  # type: ignore[misc]
        tags = {e.venue for e in chosen if e.outer_index in used}
        if meta.pre_balances:
            delta = meta.post_balances[signer_index] - meta.pre_balances[signer_index]
            sides = direction_sanity(sides, delta)

    if sides.in_mint == sides.out_mint:
        raise AmbiguousSwap(f"{tx.signature}: input and output mint coincide")
    return SwapInfo(
        token_in_mint=sides.in_mint,
        token_in_amount=sides.in_amount,
        token_in_decimals=decs.get(sides.in_mint, 0),
        token_out_mint=sides.out_mint,
        token_out_amount=sides.out_amount,
        token_out_decimals=decs.get(sides.out_mint, 0),
        amm_tags=frozenset(t for t in tags if t),
        signer=signer,
        signatures=tx.signatures,
        timestamp=block_time,
    )
