import struct
from dataclasses import replace

import pytest
from builders import (
    JUPITER_V6,
    LAMPORTS,
    RAYDIUM_V4,
    TOKEN_PROGRAM,
    USDC,
    WSOL,
    TxBuilder,
    pubkey,
    route_event,
    transfer_data,
)
from decoder_cases import (
    CASES,
    MEME,
    Expected,
    jupiter_route,
    okx_aggregate,
    pump_event,
    raydium,
)
from hypothesis import given, settings
from hypothesis import strategies as st

from linkxplore.decoder import (
    EvidenceKind,
    TradeSides,
    build_token_tables,
    decode_swap,
    direction_sanity,
    harvest_evidence,
    parse_token_transfer,
)
from linkxplore.errors import (
    AmbiguousSwap,
    FailedTransaction,
    MalformedInstruction,
    NoSwapFound,
)
from linkxplore.ledger import (
    SOL,
    Instruction,
    Mint,
    account_key_table,
    transaction_from_json,
    transaction_to_json,
)
from linkxplore.registry import load_registry

REG = load_registry()


@pytest.mark.parametrize("case", CASES, ids=lambda c: c.name)
def test_fixture_decodes_to_constructed_answer(case):
    tx, meta = case.build().build()
    if isinstance(case.expected, Expected):
        assert decode_swap(tx, meta, REG, block_time=1_700_000_000) == case.expected.swap_info(
            tx.signature, 1_700_000_000
        )
    else:
        with pytest.raises(case.expected):
            decode_swap(tx, meta, REG)


@pytest.mark.parametrize("case", [c for c in CASES if isinstance(c.expected, Expected)], ids=lambda c: c.name)
def test_decode_survives_json_roundtrip(case):
    tx, meta = case.build().build()
    again = transaction_from_json(transaction_to_json(tx, meta))
    assert decode_swap(*again, REG) == decode_swap(tx, meta, REG)


# --- token tables -------------------------------------------------------------------


def test_tables_from_post_balances():
    b = TxBuilder()
    b.sol("payer", 1, 1)
    b.key("other")
    b.token_account("acct", "mint-m", 6, None)
    tx, meta = b.build()
    tinfo, decs = build_token_tables(tx, meta)
    assert tinfo == {pubkey("acct"): (Mint(pubkey("mint-m")), 6)}
    assert decs == {Mint(pubkey("mint-m")): 6, SOL: 9}


def test_tables_of_empty_meta():
    b = TxBuilder()
    b.sol("payer", 1, 1)
    tx, meta = b.build()
    assert build_token_tables(tx, meta) == ({}, {SOL: 9})


def test_transfer_checked_seeds_unknown_accounts():
    b = TxBuilder()
    b.sol("payer", 1, 1)
    i = b.outer(RAYDIUM_V4)
    b.transfer_checked(i, "src", "mint-x", "dst", "payer", 10, 4)
    tx, meta = b.build()
    tinfo, decs = build_token_tables(tx, meta)
    mint = Mint(pubkey("mint-x"))
    assert decs[mint] == 4
    assert tinfo[pubkey("src")] == (mint, 4) and tinfo[pubkey("dst")] == (mint, 4)


def test_plain_transfer_propagates_known_mint():
    b = TxBuilder()
    b.sol("payer", 1, 1)
    i = b.outer(RAYDIUM_V4)
    b.token_account("known", USDC, 6, None)
    b.transfer(i, "known", "unknown", "payer", 5)
    tx, meta = b.build()
    tinfo, _ = build_token_tables(tx, meta)
    assert tinfo[pubkey("unknown")] == (Mint(USDC), 6)


# --- token transfer parsing ---------------------------------------------------------


def _table_and_info():
    table = (pubkey("src"), pubkey("dst"), pubkey("auth"), pubkey("mint-m"))
    tinfo = {pubkey("src"): (Mint(pubkey("mint-m")), 6)}
    return table, tinfo


def test_parse_transfer_hand_encoded():
    table, tinfo = _table_and_info()
    data = bytes([3]) + (1_000_000).to_bytes(8, "little")
    assert data == transfer_data(1_000_000)
    leg = parse_token_transfer(Instruction(0, (0, 1, 2), data), table, tinfo)
    assert leg.mint == Mint(pubkey("mint-m")) and leg.amount == 1_000_000


def test_parse_transfer_checked_takes_mint_from_accounts():
    table, tinfo = _table_and_info()
    data = bytes([12]) + struct.pack("<Q", 77) + bytes([6])
    leg = parse_token_transfer(Instruction(0, (1, 3, 0, 2), data), table, {})
    assert (leg.mint, leg.amount, leg.source, leg.destination) == (Mint(pubkey("mint-m")), 77, pubkey("dst"), pubkey("src"))


def test_parse_non_transfer_opcode():
    table, tinfo = _table_and_info()
    assert parse_token_transfer(Instruction(0, (0, 1, 2), bytes([1]) + bytes(8)), table, tinfo) is None


@pytest.mark.parametrize("data", [bytes([3]), bytes([3, 1, 2]), bytes([12]) + bytes(8)])
def test_parse_truncated(data):
    table, tinfo = _table_and_info()
    with pytest.raises(MalformedInstruction):
        parse_token_transfer(Instruction(0, (0, 3, 1, 2), data), table, tinfo)


def test_parse_direction_relative_to_signer():
    table, tinfo = _table_and_info()
    leg = parse_token_transfer(Instruction(0, (0, 1, 2), transfer_data(5)), table, tinfo, signer=pubkey("auth"))
    assert leg.direction == "out"
    leg = parse_token_transfer(
        Instruction(0, (0, 1, 2), transfer_data(5)), table, tinfo, signer="me", owners={pubkey("dst"): "me"}
    )
    assert leg.direction == "in"


# --- evidence -----------------------------------------------------------------------


def test_raydium_yields_two_legs():
    tx, meta = raydium().build()
    ev = harvest_evidence(tx, meta, REG)
    assert [e.kind for e in ev] == [EvidenceKind.LEG, EvidenceKind.LEG]


def test_jupiter_event_outranks_collected_legs():
    tx, meta = jupiter_route().build()
    kinds = {e.kind for e in harvest_evidence(tx, meta, REG)}
    assert kinds == {EvidenceKind.JUPITER_ROUTE_EVENT}
    info = decode_swap(tx, meta, REG)
    assert (info.token_in_amount, info.token_out_amount) == (LAMPORTS, 3_000_000_000)


def test_no_registered_program_no_evidence():
    b = TxBuilder()
    b.sol("payer", 1, 1)
    i = b.outer("some-unlisted-program")
    b.token_account("a", USDC, 6, "payer")
    b.transfer(i, "a", "b", "payer", 5)
    tx, meta = b.build()
    assert harvest_evidence(tx, meta, REG) == []
    with pytest.raises(NoSwapFound):
        decode_swap(tx, meta, REG)


def test_truncated_route_event_is_diagnosed_not_fatal():
    b = TxBuilder(signature="trunc")
    b.sol("trader", 10 * LAMPORTS, 10 * LAMPORTS)
    i = b.outer(JUPITER_V6, ("trader",))
    b.inner(i, JUPITER_V6, ("ev",), route_event(RAYDIUM_V4, WSOL, 1, USDC, 1)[:40])
    b.token_account("trader:sol", WSOL, 9, "trader")
    b.token_account("pool:usdc", USDC, 6, "pool")
    b.token_account("trader:usdc", USDC, 6, "trader")
    b.transfer(i, "trader:sol", "pool:sol", "trader", 10)
    b.transfer(i, "pool:usdc", "trader:usdc", "pool", 20)
    tx, meta = b.build()
    diag: list[str] = []
    info = decode_swap(tx, meta, REG, diagnostics=diag)
    assert any("truncated" in d for d in diag)
    assert (info.token_in_mint, info.token_out_mint) == (SOL, Mint(USDC))


def test_single_mint_legs_are_ambiguous():
    b = TxBuilder(signature="one-mint")
    b.sol("trader", 1, 1)
    i = b.outer(RAYDIUM_V4)
    b.token_account("a", USDC, 6, "trader")
    b.token_account("b", USDC, 6, "pool")
    b.transfer(i, "a", "b", "trader", 5)
    tx, meta = b.build()
    with pytest.raises(AmbiguousSwap):
        decode_swap(tx, meta, REG)


def test_okx_priority_over_legs():
    tx, meta = okx_aggregate().build()
    info = decode_swap(tx, meta, REG)
    assert info.token_in_amount == 20_000_000  # log value, not the 19.9 USDC leg


def test_pump_event_priority_over_legs():
    tx, meta = pump_event().build()
    assert {e.kind for e in harvest_evidence(tx, meta, REG)} == {EvidenceKind.PUMP_FUN_TRADE}


# --- properties ---------------------------------------------------------------------


@given(st.sampled_from([c for c in CASES if isinstance(c.expected, Expected)]), st.data())
@settings(max_examples=60, deadline=None)
def test_duplicating_an_inner_transfer_changes_nothing(case, data):
    b = case.build()
    transfers = [
        (outer, ix)
        for outer, ixs in b.inners.items()
        for ix in ixs
        if ix[0] == TOKEN_PROGRAM and ix[2][:1] in (b"\x03", b"\x0c")
    ]
    if not transfers:
        return
    outer, ix = data.draw(st.sampled_from(transfers))
    before = decode_swap(*b.build(), REG)
    pos = data.draw(st.integers(0, len(b.inners[outer])))
    b.inners[outer].insert(pos, ix)
    assert decode_swap(*b.build(), REG) == before


@given(st.integers(-(10**12), 10**12), st.booleans())
def test_direction_sanity_applies_at_most_once(delta, sol_first):
    m = Mint(pubkey(MEME))
    sides = TradeSides(SOL, 5, m, 7) if sol_first else TradeSides(m, 7, SOL, 5)
    once = direction_sanity(sides, delta)
    assert direction_sanity(once, delta) == once


def test_flip_only_when_signer_gains_and_input_is_sol():
    m = Mint(pubkey(MEME))
    assert direction_sanity(TradeSides(SOL, 5, m, 7), 1) == TradeSides(m, 7, SOL, 5)
    assert direction_sanity(TradeSides(SOL, 5, m, 7), 0) == TradeSides(SOL, 5, m, 7)
    assert direction_sanity(TradeSides(m, 7, SOL, 5), 10) == TradeSides(m, 7, SOL, 5)


@pytest.mark.parametrize("case", [c for c in CASES if isinstance(c.expected, Expected)], ids=lambda c: c.name)
def test_decimals_match_tables(case):
    tx, meta = case.build().build()
    info = decode_swap(tx, meta, REG)
    _, decs = build_token_tables(tx, meta, REG)
    assert info.token_in_decimals == decs[info.token_in_mint]
    assert info.token_out_decimals == decs[info.token_out_mint]
    for mint, dec in ((info.token_in_mint, info.token_in_decimals), (info.token_out_mint, info.token_out_decimals)):
        if mint == SOL:
            assert dec == 9


def test_decode_is_deterministic():
    tx, meta = jupiter_route().build()
    assert decode_swap(tx, meta, REG) == decode_swap(tx, meta, REG)


def test_signer_is_first_key_without_dca():
    tx, meta = raydium().build()
    assert decode_swap(tx, meta, REG).signer == account_key_table(tx)[0]


def test_failed_meta_checked_before_anything_else():
    tx, meta = raydium().build()
    broken = replace(meta, err={"x": 1}, pre_balances=())
    with pytest.raises(FailedTransaction):
        decode_swap(tx, broken, REG)
