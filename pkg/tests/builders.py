"""Hand-built ledger fixtures: named accounts, token accounts, inner transfers."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import base58

from linkxplore.ledger import (
    WSOL_MINT,
    Block,
    Instruction,
    TokenBalanceEntry,
    TransactionMeta,
    TransactionRecord,
)

TOKEN_PROGRAM = "TokenkegQfeZyiNwAJbNbGKPFXCWuBvf9Ss623VQ5DA"
TOKEN_2022_PROGRAM = "TokenzQdBNbLqP5VEhdkAS6EPFLC1PHnBqCXEpPxuEb"
SYSTEM_PROGRAM = "11111111111111111111111111111111"
RAYDIUM_V4 = "675kPX9MHTjS2zt1qfr1NYHuzeLXfQM9H24wFSUt1Mp8"
RAYDIUM_CLMM = "CAMMCzo5YL8w4VFF8KVHrK22GGUsp5VTaW7grrKgrWqK"
ORCA_WHIRLPOOL = "whirLbMiicVdio4qvUfM5KAg6Ct8VwpYzGff3uctyCc"
METEORA_DLMM = "LBUZKhRxPF3XUpBCjp4YzTKgLccjZhTSDM9YuVaPwxo"
JUPITER_V6 = "JUP6LkbZbjS1jKKwapdHNy74zcZ3tLUZoi5QNyVTaV4"
JUPITER_DCA = "DCA265Vj8a9CEuX1eb1LWRnDT7uK6q1xMipnNyatn23M"
OKX_ROUTER = "6m2CDdhRgxpH4WjvdzxAYbGxwdGUz5MziiL5jek2kBma"
PUMP_FUN = "6EF8rrecthR5Dkzon8Nwu78hRvfCKubJ14M5uBEwF6P"
USDC = "EPjFWdd5AufqSSqeM2qN1xzybapC8G4wEGGkZwyTDt1v"
USDT = "Es9vMFrzaCERmJfrF4H2FYD4KCoNkY11McCe8BEW5xiQ"
WSOL = WSOL_MINT

EVENT_PREFIX = bytes.fromhex("e445a52e51cb9a1d")
JUP_ROUTE_EVENT = bytes.fromhex("40c6cde8260871e2")
PUMP_TRADE_EVENT = bytes.fromhex("bddb7fd34ee661ee")
PUMP_BUY = bytes.fromhex("66063d1201daebea")
PUMP_SELL = bytes.fromhex("33e685a4017f83ad")

LAMPORTS = 1_000_000_000


def pubkey(name: str) -> str:
    """Deterministic 32-byte address for a readable name; real addresses pass through."""
    try:
        if len(base58.b58decode(name)) == 32:
            return name
    except ValueError:
        pass
    return base58.b58encode(hashlib.sha256(name.encode()).digest()).decode()


def pk_bytes(name: str) -> bytes:
    return base58.b58decode(pubkey(name))


def transfer_data(amount: int) -> bytes:
    return bytes([3]) + struct.pack("<Q", amount)


def transfer_checked_data(amount: int, decimals: int) -> bytes:
    return bytes([12]) + struct.pack("<Q", amount) + bytes([decimals])


def route_event(amm: str, in_mint: str, in_amount: int, out_mint: str, out_amount: int, prefix: bool = True) -> bytes:
    body = pk_bytes(amm) + pk_bytes(in_mint) + struct.pack("<Q", in_amount) + pk_bytes(out_mint) + struct.pack("<Q", out_amount)
    return (EVENT_PREFIX if prefix else b"") + JUP_ROUTE_EVENT + body


def pump_trade_event(mint: str, sol_amount: int, token_amount: int, is_buy: bool, user: str = "user") -> bytes:
    body = pk_bytes(mint) + struct.pack("<QQ", sol_amount, token_amount) + bytes([int(is_buy)]) + pk_bytes(user)
    return EVENT_PREFIX + PUMP_TRADE_EVENT + body


@dataclass
class TxBuilder:
    """Accumulates keys, instructions and balances; ``build()`` yields (tx, meta).

    The first key added is the fee payer. Names are turned into addresses with
    :func:`pubkey`, so tests can refer to accounts by readable labels.
    """

    signature: str = "sig"
    err: object = None
    keys: list[str] = field(default_factory=list)
    lookup: list[str] = field(default_factory=list)
    outers: list[tuple] = field(default_factory=list)
    inners: dict[int, list[tuple]] = field(default_factory=dict)
    lamports: dict[str, tuple[int, int]] = field(default_factory=dict)
    pre_tokens: list[tuple[str, str, int, int, str | None]] = field(default_factory=list)
    post_tokens: list[tuple[str, str, int, int, str | None]] = field(default_factory=list)
    logs: list[str] = field(default_factory=list)

    def key(self, name: str) -> None:
        addr = pubkey(name)
        if addr not in self.keys and addr not in self.lookup:
            self.keys.append(addr)

    def loaded(self, name: str) -> None:
        """Place an address in the lookup-table section of the key table."""
        addr = pubkey(name)
        if addr not in self.keys and addr not in self.lookup:
            self.lookup.append(addr)

    def outer(self, program: str, accounts: tuple[str, ...] = (), data: bytes = b"\x09") -> int:
        # indexes are resolved in build(), once the key table is final
        for name in (program, *accounts):
            self.key(name)
        self.outers.append((program, tuple(accounts), data, None))
        return len(self.outers) - 1

    def inner(self, outer: int, program: str, accounts: tuple[str, ...], data: bytes) -> None:
        for name in (program, *accounts):
            self.key(name)
        self.inners.setdefault(outer, []).append((program, tuple(accounts), data, 2))

    def transfer(self, outer: int, src: str, dst: str, authority: str, amount: int, program: str = TOKEN_PROGRAM) -> None:
        self.inner(outer, program, (src, dst, authority), transfer_data(amount))

    def transfer_checked(
        self, outer: int, src: str, mint: str, dst: str, authority: str, amount: int, decimals: int,
        program: str = TOKEN_PROGRAM,
    ) -> None:
        self.inner(outer, program, (src, mint, dst, authority), transfer_checked_data(amount, decimals))

    def token_account(self, acct: str, mint: str, decimals: int, owner: str | None, pre: int = 0, post: int = 0) -> None:
        self.key(acct)
        owner_addr = pubkey(owner) if owner else None
        self.pre_tokens.append((acct, mint, decimals, pre, owner_addr))
        self.post_tokens.append((acct, mint, decimals, post, owner_addr))

    def sol(self, name: str, pre: int, post: int) -> None:
        self.key(name)
        self.lamports[pubkey(name)] = (pre, post)

    def build(self) -> tuple[TransactionRecord, TransactionMeta]:
        table = self.keys + self.lookup
        pre = tuple(self.lamports.get(k, (LAMPORTS, LAMPORTS))[0] for k in table)
        post = tuple(self.lamports.get(k, (LAMPORTS, LAMPORTS))[1] for k in table)

        def index(name: str) -> int:
            return table.index(pubkey(name))

        def inst(ix: tuple) -> Instruction:
            program, accounts, data, height = ix
            return Instruction(index(program), tuple(index(a) for a in accounts), data, stack_height=height)

        def entries(rows):
            return tuple(
                TokenBalanceEntry(table.index(pubkey(a)), pubkey(m), d, amt, owner) for a, m, d, amt, owner in rows
            )

        tx = TransactionRecord(
            signatures=(self.signature,),
            account_keys=tuple(self.keys),
            loaded_addresses=tuple(self.lookup),
            instructions=tuple(inst(o) for o in self.outers),
        )
        meta = TransactionMeta(
            pre_balances=pre,
            post_balances=post,
            pre_token_balances=entries(self.pre_tokens),
            post_token_balances=entries(self.post_tokens),
            inner_instructions={i: tuple(inst(x) for x in v) for i, v in self.inners.items()},
            log_messages=tuple(self.logs),
            err=self.err,
        )
        return tx, meta


def simple_swap(
    signature: str,
    mint_in: str,
    amount_in: int,
    dec_in: int,
    mint_out: str,
    amount_out: int,
    dec_out: int,
    program: str = RAYDIUM_V4,
    signer: str = "trader",
) -> tuple[TransactionRecord, TransactionMeta]:
    """One AMM outer with a signer outflow leg and a pool inflow leg."""
    b = TxBuilder(signature=signature)
    b.sol(signer, 10 * LAMPORTS, 10 * LAMPORTS - 5000)
    i = b.outer(program, (signer,))
    b.token_account(f"{signer}:{mint_in}", mint_in, dec_in, signer)
    b.token_account(f"pool:{mint_in}", mint_in, dec_in, "pool")
    b.token_account(f"pool:{mint_out}", mint_out, dec_out, "pool")
    b.token_account(f"{signer}:{mint_out}", mint_out, dec_out, signer)
    b.transfer(i, f"{signer}:{mint_in}", f"pool:{mint_in}", signer, amount_in)
    b.transfer(i, f"pool:{mint_out}", f"{signer}:{mint_out}", "pool", amount_out)
    b.key(TOKEN_PROGRAM)
    return b.build()


def block(slot: int, block_time: int | None, txs=()) -> Block:
    return Block(slot=slot, block_time=block_time, transactions=tuple(txs))
