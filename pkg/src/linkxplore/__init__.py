"""Self-hosted Solana DEX market data: swap decoding, prices, candles."""

from linkxplore.decoder import decode_swap
from linkxplore.ledger import SOL, Mint, SwapInfo
from linkxplore.price import BaseCurrency, PriceConfig, PriceEngine, PriceInfo, price_at
from linkxplore.registry import ProgramRegistry, load_registry
from linkxplore.slots import nearest_slot
from linkxplore.source import ChainSource, FixtureStore, SourceConfig

__version__ = "0.1.0"

__all__ = [
    "SOL",
    "BaseCurrency",
    "ChainSource",
    "FixtureStore",
    "Mint",
    "PriceConfig",
    "PriceEngine",
    "PriceInfo",
    "ProgramRegistry",
    "SourceConfig",
    "SwapInfo",
    "decode_swap",
    "load_registry",
    "nearest_slot",
    "price_at",
]
