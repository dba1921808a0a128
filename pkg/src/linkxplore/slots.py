"""Map a unix timestamp to the nearest finalized slot(s).

An estimate from the tip and an average block time seeds an outward doubling
search for a bracket; two binary searches inside it find the last slot at or
before ``t`` and the first slot at or after it. Skipped slots have no block
time and are stepped over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

from linkxplore.errors import FutureTimestamp, SlotOutOfRange, TimestampBeforeHistory


class BlockTimeSource(Protocol):
    def get_slot(self) -> int: ...

    def get_block_time(self, slot: int) -> int | None: ...


@dataclass(frozen=True)
class ClockCalibration:
    avg_block_time: float = 0.4

    def __post_init__(self) -> None:
        if self.avg_block_time <= 0:
            raise ValueError("avg_block_time must be positive")


@dataclass(frozen=True)
class SlotChoice:
    slots: tuple[int, ...]
    floor_slot: int
    ceil_slot: int
    floor_time: int
    ceil_time: int

    def __post_init__(self) -> None:
        if len(self.slots) not in (1, 2):
            raise ValueError("a slot choice holds one or two slots")


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def estimate_slot(t: float, s_now: int, t_now: float, cal: ClockCalibration = ClockCalibration()) -> int:
    if t > t_now:
        raise FutureTimestamp(f"t={t} is after the tip time {t_now}")
    return max(0, s_now - round_half_away((t_now - t) / cal.avg_block_time))


class _Clock:
    """Memoised block-time lookups for a single search."""

    def __init__(self, source: BlockTimeSource) -> None:
        self.source = source
        self.memo: dict[int, int | None] = {}
        self.out_of_range: set[int] = set()

    def time(self, slot: int) -> int | None:
        """Block time, None if skipped; raises SlotOutOfRange outside history."""
        if slot < 0 or slot in self.out_of_range:
            raise SlotOutOfRange(f"slot {slot}")
        if slot not in self.memo:
            try:
                self.memo[slot] = self.source.get_block_time(slot)
            except SlotOutOfRange:
                self.out_of_range.add(slot)
                raise
        return self.memo[slot]

    def resolve(self, slot: int, step: int, stop: int | None = None) -> tuple[int, int] | None:
        """First slot with a block time walking from ``slot`` by ``step`` (exclusive ``stop``).

        Returns None if history ends (or ``stop`` is reached) first.
        """
        s = slot
        while stop is None or (s < stop if step > 0 else s > stop):
            try:
                bt = self.time(s)
            except SlotOutOfRange:
                return None
            if bt is not None:
                return s, bt
            s += step
        return None


Resolved = tuple[int, int]


def _search(clock: _Clock, origin: Resolved, direction: int, ok) -> tuple[Resolved | None, Resolved]:
    """Doubling probes from ``origin`` until a resolved slot satisfies ``ok``.

    Returns ``(hit, last)``; ``hit`` is None when history ends first, and then
    ``last`` is the outermost resolved slot in that direction.
    """
    if ok(origin[1]):
        return origin, origin
    last = origin
    anchor, step = origin[0], 1
    while True:
        target = anchor + direction * step
        probe = clock.resolve(target, direction) if target >= 0 else None
        if probe is None:
            if step == 1:
                return None, last
            # overshot the end of history; restart the doubling from the last hit
            anchor, step = last[0], 1
            continue
        if ok(probe[1]):
            return probe, last
        last = probe
        step *= 2


def _enter_history(clock: _Clock, guess: int, tip: int) -> int:
    """Move a guess that fell outside history onto the first in-range slot.

    Above the tip the tip itself is used. Below the first retained slot the
    search gallops upward to an in-range slot, then bisects back to the edge.
    """
    if guess >= tip:
        return tip

    def in_range(s: int) -> bool:
        try:
            clock.time(s)
        except SlotOutOfRange:
            return False
        return True

    if in_range(guess):
        return guess
    below, step = guess, 1
    while True:
        probe = min(guess + step, tip)
        if in_range(probe):
            break
        below, step = probe, step * 2
    while probe - below > 1:
        mid = (below + probe) // 2
        if in_range(mid):
            probe = mid
        else:
            below = mid
    return probe


def _expand(
    clock: _Clock, t: float, guess: int, *, strict: bool, tip: int | None = None
) -> tuple[Resolved | None, Resolved | None, Resolved, Resolved]:
    """Outward doubling from ``guess``.

    Returns ``(low, high, earliest, latest)``: ``low`` is a resolved slot with
    time below ``t`` (``<=`` when not strict), ``high`` one with time above
    (``>=``); when history ends first the entry is None and ``earliest`` /
    ``latest`` hold the outermost resolved slot in that direction.
    """
    if tip is not None:
        guess = _enter_history(clock, guess, tip)
    down = clock.resolve(guess, -1)
    up = clock.resolve(guess, +1)
    if down is None and up is None:
        raise TimestampBeforeHistory(f"no block at or around slot {guess}")
    down = down or up
    up = up or down
    assert down is not None and up is not None
    if strict:
        low, earliest = _search(clock, down, -1, lambda bt: bt < t)
        high, latest = _search(clock, up, +1, lambda bt: bt > t)
    else:
        low, earliest = _search(clock, down, -1, lambda bt: bt <= t)
        high, latest = _search(clock, up, +1, lambda bt: bt >= t)
    return low, high, earliest, latest


def bracket(t: float, guess: int, source: BlockTimeSource, tip: int | None = None) -> tuple[int, int]:
    """Slots ``L <= H`` around ``guess`` with ``time(L) <= t <= time(H)``."""
    clock = _Clock(source)
    low, high, earliest, latest = _expand(clock, t, guess, strict=False, tip=tip)
    if low is None:
        raise TimestampBeforeHistory(f"t={t} precedes the earliest block (time {earliest[1]})")
    if high is None:
        raise FutureTimestamp(f"t={t} is after the latest block (time {latest[1]})")
    return low[0], high[0]


def _floor_search(clock: _Clock, t: float, lo: int, hi_excl: int) -> int:
    """Largest resolved slot in ``[lo, hi_excl)`` with time <= t; ``time(lo) <= t``."""
    while hi_excl - lo > 1:
        mid = (lo + hi_excl) // 2
        r = clock.resolve(mid, +1, stop=hi_excl)
        if r is None or r[1] > t:
            hi_excl = mid
        else:
            lo = r[0]
    return lo


def _ceil_search(clock: _Clock, t: float, lo_excl: int, hi: int) -> int:
    """Smallest resolved slot in ``(lo_excl, hi]`` with time >= t; ``time(hi) >= t``."""
    while hi - lo_excl > 1:
        mid = (lo_excl + hi + 1) // 2
        r = clock.resolve(mid, -1, stop=lo_excl)
        if r is None or r[1] < t:
            lo_excl = mid
        else:
            hi = r[0]
    return hi


def locate(
    t: float, guess: int, source: BlockTimeSource, clock: _Clock | None = None, tip: int | None = None
) -> SlotChoice:
    """Nearest slot(s) to ``t`` searching outward from ``guess``.

    ``tip`` (the newest slot) lets a guess outside history be pulled back in.
    """
    clock = clock or _Clock(source)
    low, high, earliest, latest = _expand(clock, t, guess, strict=True, tip=tip)
    if low is None and earliest[1] > t:
        raise TimestampBeforeHistory(f"t={t} precedes the earliest block (time {earliest[1]})")
    if high is None and latest[1] < t:
        raise FutureTimestamp(f"t={t} is after the latest block (time {latest[1]})")

    floor_lo = low[0] if low is not None else earliest[0]
    floor_hi = high[0] if high is not None else latest[0] + 1
    ceil_lo = low[0] if low is not None else earliest[0] - 1
    ceil_hi = high[0] if high is not None else latest[0]

    s_floor = _floor_search(clock, t, floor_lo, floor_hi)
    s_ceil = _ceil_search(clock, t, ceil_lo, ceil_hi)
    bt_floor, bt_ceil = clock.memo[s_floor], clock.memo[s_ceil]
    assert bt_floor is not None and bt_ceil is not None
    d_floor, d_ceil = t - bt_floor, bt_ceil - t
    if s_floor == s_ceil:
        slots: tuple[int, ...] = (s_floor,)
    elif d_floor < d_ceil:
        slots = (s_floor,)
    elif d_ceil < d_floor:
        slots = (s_ceil,)
    else:
        slots = tuple(sorted((s_floor, s_ceil)))
    return SlotChoice(slots, s_floor, s_ceil, bt_floor, bt_ceil)


def nearest_slot(t: float, source: BlockTimeSource, cal: ClockCalibration = ClockCalibration()) -> SlotChoice:
    s_now = source.get_slot()
    clock = _Clock(source)
    tip = clock.resolve(s_now, -1)
    if tip is None:
        raise TimestampBeforeHistory("source holds no blocks")
    guess = estimate_slot(t, tip[0], tip[1], cal)
    return locate(t, guess, source, clock, tip=s_now)
