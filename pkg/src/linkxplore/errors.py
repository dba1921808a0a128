"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class LinkXploreError(Exception):
    """Base class for every error raised by this package."""


# ledger / decoding
class MalformedMeta(LinkXploreError):
    pass


class MalformedInstruction(LinkXploreError):
    pass


class NoSwapFound(LinkXploreError):
    pass


class FailedTransaction(LinkXploreError):
    pass


class AmbiguousSwap(LinkXploreError):
    pass


# chain source
class SourceUnavailable(LinkXploreError):
    pass


class SlotOutOfRange(LinkXploreError):
    pass


# slot search
class FutureTimestamp(LinkXploreError):
    pass


class TimestampBeforeHistory(LinkXploreError):
    pass


# pricing
class NotQuotedAgainstBase(LinkXploreError):
    pass


class RateUnavailable(LinkXploreError):
    pass


class NotAvailable(LinkXploreError):
    pass


# candles
class MissingSolUsd(LinkXploreError):
    pass


class NegativeOffset(LinkXploreError):
    pass


# bench
class EmptySample(LinkXploreError):
    pass
