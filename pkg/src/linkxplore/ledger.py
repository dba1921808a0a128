"""Domain types for raw Solana ledger data and the decoded swap record.

The JSON readers accept the shape returned by ``getBlock`` / ``getTransaction``
with ``encoding=json`` (base58 instruction data), so RPC captures can be stored
as fixtures and replayed unchanged.
"""

from __future__ import annotations

import decimal
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Iterable, Mapping

import base58

from linkxplore.errors import MalformedMeta

WSOL_MINT = "So11111111111111111111111111111111111111112"
MAX_DECIMALS = 18
SOL_DECIMALS = 9

_SCALE_CTX = decimal.Context(prec=60)


@dataclass(frozen=True, order=True)
class Mint:
    address: str
    is_native: bool = False

    def __post_init__(self) -> None:
        if not self.address:
            raise ValueError("mint address must be non-empty")

    def __str__(self) -> str:
        return self.address


SOL = Mint(WSOL_MINT, is_native=True)


def coalesce_sol(mint: Mint | str) -> Mint:
    """Map wrapped SOL (or a bare mint string) onto the canonical mint value."""
    address = mint.address if isinstance(mint, Mint) else mint
    if address == WSOL_MINT:
        return SOL
    if isinstance(mint, Mint) and not mint.is_native:
        return mint
    return Mint(address)


def ui_amount(raw: int, decimals: int) -> Decimal:
    """``raw / 10**decimals`` without rounding."""
    if raw < 0:
        raise ValueError("raw amounts are unsigned")
    if not 0 <= decimals <= MAX_DECIMALS:
        raise ValueError(f"decimals out of range: {decimals}")
    return _SCALE_CTX.scaleb(Decimal(raw), -decimals)


def raw_amount(ui: Decimal, decimals: int) -> int:
    """Inverse of :func:`ui_amount`; raises if ``ui`` has more precision than ``decimals``."""
    scaled = _SCALE_CTX.scaleb(ui, decimals)
    if scaled != scaled.to_integral_value():
        raise ValueError(f"{ui} is not representable with {decimals} decimals")
    return int(scaled)


@dataclass(frozen=True)
class Instruction:
    program_id_index: int
    accounts: tuple[int, ...]
    data: bytes
    stack_height: int | None = None


@dataclass(frozen=True)
class TokenBalanceEntry:
    account_index: int
    mint: Mint
    decimals: int
    amount: int
    owner: str | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.decimals <= MAX_DECIMALS:
            raise ValueError(f"decimals out of range: {self.decimals}")
        if self.amount < 0:
            raise ValueError("token amounts are unsigned")
        if not isinstance(self.mint, Mint):
            object.__setattr__(self, "mint", coalesce_sol(self.mint))


@dataclass(frozen=True)
class TransactionRecord:
    signatures: tuple[str, ...]
    account_keys: tuple[str, ...]
    loaded_addresses: tuple[str, ...] = ()
    instructions: tuple[Instruction, ...] = ()

    def __post_init__(self) -> None:
        if not self.signatures:
            raise ValueError("a transaction carries at least one signature")
        if not self.account_keys:
            raise ValueError("a transaction carries at least one account key")

    @property
    def signature(self) -> str:
        return self.signatures[0]


@dataclass(frozen=True)
class TransactionMeta:
    pre_balances: tuple[int, ...] = ()
    post_balances: tuple[int, ...] = ()
    pre_token_balances: tuple[TokenBalanceEntry, ...] = ()
    post_token_balances: tuple[TokenBalanceEntry, ...] = ()
    inner_instructions: Mapping[int, tuple[Instruction, ...]] = field(default_factory=dict)
    log_messages: tuple[str, ...] = ()
    err: Any = None


@dataclass(frozen=True)
class Block:
    slot: int
    block_time: int | None
    transactions: tuple[tuple[TransactionRecord, TransactionMeta], ...] = ()

    def __post_init__(self) -> None:
        if self.block_time is None and self.transactions:
            raise ValueError(f"slot {self.slot}: skipped slots carry no transactions")

    @property
    def skipped(self) -> bool:
        return self.block_time is None


@dataclass(frozen=True)
class SwapInfo:
    token_in_mint: Mint
    token_in_amount: int
    token_in_decimals: int
    token_out_mint: Mint
    token_out_amount: int
    token_out_decimals: int
    amm_tags: frozenset[str]
    signer: str
    signatures: tuple[str, ...]
    timestamp: int | None = None

    @property
    def mints(self) -> tuple[Mint, Mint]:
        return self.token_in_mint, self.token_out_mint

    @property
    def token_in_ui(self) -> Decimal:
        return ui_amount(self.token_in_amount, self.token_in_decimals)

    @property
    def token_out_ui(self) -> Decimal:
        return ui_amount(self.token_out_amount, self.token_out_decimals)

    def to_json(self) -> dict[str, Any]:
        return {
            "token_in": {
                "mint": self.token_in_mint.address,
                "is_native": self.token_in_mint.is_native,
                "amount": str(self.token_in_amount),
                "decimals": self.token_in_decimals,
            },
            "token_out": {
                "mint": self.token_out_mint.address,
                "is_native": self.token_out_mint.is_native,
                "amount": str(self.token_out_amount),
                "decimals": self.token_out_decimals,
            },
            "amm_tags": sorted(self.amm_tags),
            "signer": self.signer,
            "signatures": list(self.signatures),
            "timestamp": self.timestamp,
        }


def account_key_table(tx: TransactionRecord) -> tuple[str, ...]:
    """Message account keys followed by addresses loaded from lookup tables."""
    return tx.account_keys + tx.loaded_addresses


def resolve(table: tuple[str, ...], index: int) -> str:
    if not 0 <= index < len(table):
        raise MalformedMeta(f"account index {index} outside key table of length {len(table)}")
    return table[index]


def validate_pair(tx: TransactionRecord, meta: TransactionMeta) -> None:
    """Check index invariants that span transaction and metadata."""
    n = len(account_key_table(tx))
    if len(meta.pre_balances) != len(meta.post_balances):
        raise MalformedMeta("preBalances and postBalances differ in length")
    if meta.pre_balances and len(meta.pre_balances) != n:
        raise MalformedMeta(f"balances cover {len(meta.pre_balances)} accounts, key table has {n}")
    for entry in (*meta.pre_token_balances, *meta.post_token_balances):
        if not 0 <= entry.account_index < n:
            raise MalformedMeta(f"token balance account index {entry.account_index} out of range")
    for outer in meta.inner_instructions:
        if not 0 <= outer < len(tx.instructions):
            raise MalformedMeta(f"inner instructions reference missing outer index {outer}")
    for inst in _all_instructions(tx, meta):
        if not 0 <= inst.program_id_index < n:
            raise MalformedMeta(f"program id index {inst.program_id_index} out of range")
        for idx in inst.accounts:
            if not 0 <= idx < n:
                raise MalformedMeta(f"instruction account index {idx} out of range")


def _all_instructions(tx: TransactionRecord, meta: TransactionMeta) -> Iterable[Instruction]:
    yield from tx.instructions
    for inners in meta.inner_instructions.values():
        yield from inners


# --- JSON (getBlock / getTransaction shape) -------------------------------------------


def _instruction_from_json(obj: Mapping[str, Any]) -> Instruction:
    data = obj.get("data", "")
    return Instruction(
        program_id_index=int(obj["programIdIndex"]),
        accounts=tuple(int(a) for a in obj.get("accounts", ())),
        data=base58.b58decode(data) if data else b"",
        stack_height=obj.get("stackHeight"),
    )


def _instruction_to_json(inst: Instruction) -> dict[str, Any]:
    out: dict[str, Any] = {
        "programIdIndex": inst.program_id_index,
        "accounts": list(inst.accounts),
        "data": base58.b58encode(inst.data).decode("ascii"),
    }
    if inst.stack_height is not None:
        out["stackHeight"] = inst.stack_height
    return out


def _token_balance_from_json(obj: Mapping[str, Any]) -> TokenBalanceEntry:
    ui = obj.get("uiTokenAmount", {})
    return TokenBalanceEntry(
        account_index=int(obj["accountIndex"]),
        mint=coalesce_sol(obj["mint"]),
        decimals=int(ui.get("decimals", 0)),
        amount=int(ui.get("amount", "0")),
        owner=obj.get("owner"),
    )


def _token_balance_to_json(entry: TokenBalanceEntry) -> dict[str, Any]:
    out: dict[str, Any] = {
        "accountIndex": entry.account_index,
        "mint": entry.mint.address,
        "uiTokenAmount": {"amount": str(entry.amount), "decimals": entry.decimals},
    }
    if entry.owner is not None:
        out["owner"] = entry.owner
    return out


def _key(obj: Any) -> str:
    # jsonParsed encodes keys as {"pubkey": ...}
    return obj["pubkey"] if isinstance(obj, Mapping) else str(obj)


def transaction_from_json(obj: Mapping[str, Any]) -> tuple[TransactionRecord, TransactionMeta]:
    """Parse one ``{"transaction": ..., "meta": ...}`` entry."""
    try:
        raw_tx = obj["transaction"]
        if not isinstance(raw_tx, Mapping):
            raise MalformedMeta("only encoding=json transactions are supported")
        message = raw_tx["message"]
        raw_meta = obj.get("meta") or {}
        loaded = raw_meta.get("loadedAddresses") or {}
        tx = TransactionRecord(
            signatures=tuple(raw_tx["signatures"]),
            account_keys=tuple(_key(k) for k in message["accountKeys"]),
            loaded_addresses=tuple(loaded.get("writable", ())) + tuple(loaded.get("readonly", ())),
            instructions=tuple(_instruction_from_json(i) for i in message.get("instructions", ())),
        )
        inner: dict[int, tuple[Instruction, ...]] = {}
        for group in raw_meta.get("innerInstructions") or ():
            idx = int(group["index"])
            inner[idx] = inner.get(idx, ()) + tuple(
                _instruction_from_json(i) for i in group.get("instructions", ())
            )
        meta = TransactionMeta(
            pre_balances=tuple(int(b) for b in raw_meta.get("preBalances") or ()),
            post_balances=tuple(int(b) for b in raw_meta.get("postBalances") or ()),
            pre_token_balances=tuple(
                _token_balance_from_json(b) for b in raw_meta.get("preTokenBalances") or ()
            ),
            post_token_balances=tuple(
                _token_balance_from_json(b) for b in raw_meta.get("postTokenBalances") or ()
            ),
            inner_instructions=inner,
            log_messages=tuple(raw_meta.get("logMessages") or ()),
            err=raw_meta.get("err"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedMeta(f"cannot parse transaction: {exc}") from exc
    return tx, meta


def transaction_to_json(tx: TransactionRecord, meta: TransactionMeta) -> dict[str, Any]:
    return {
        "transaction": {
            "signatures": list(tx.signatures),
            "message": {
                "accountKeys": list(tx.account_keys),
                "instructions": [_instruction_to_json(i) for i in tx.instructions],
            },
        },
        "meta": {
            "err": meta.err,
            "preBalances": list(meta.pre_balances),
            "postBalances": list(meta.post_balances),
            "preTokenBalances": [_token_balance_to_json(b) for b in meta.pre_token_balances],
            "postTokenBalances": [_token_balance_to_json(b) for b in meta.post_token_balances],
            "innerInstructions": [
                {"index": idx, "instructions": [_instruction_to_json(i) for i in insts]}
                for idx, insts in sorted(meta.inner_instructions.items())
            ],
            "logMessages": list(meta.log_messages),
            "loadedAddresses": {"writable": list(tx.loaded_addresses), "readonly": []},
        },
    }


def block_from_json(obj: Mapping[str, Any], slot: int | None = None) -> Block:
    """Parse a fixture record or a ``getBlock`` result (``slot`` supplied separately)."""
    slot = int(obj["slot"]) if slot is None else slot
    block_time = obj.get("blockTime")
    txs = tuple(transaction_from_json(t) for t in obj.get("transactions") or ())
    return Block(slot=slot, block_time=None if block_time is None else int(block_time), transactions=txs)


def block_to_json(block: Block) -> dict[str, Any]:
    return {
        "slot": block.slot,
        "blockTime": block.block_time,
        "transactions": [transaction_to_json(tx, meta) for tx, meta in block.transactions],
    }
