"""Brute-force reference computations the production code is checked against."""

from __future__ import annotations

import math
from decimal import Decimal


def naive_vwap(pairs, r, tau):
    """Independent recomputation: sort-based median, explicit loops."""
    live = [(p, w) for p, w in pairs if w >= tau]
    if not live:
        return None
    logs = sorted(math.log(p) for p, _ in live)
    n = len(logs)
    med = logs[n // 2] if n % 2 == 1 else 0.5 * (logs[n // 2 - 1] + logs[n // 2])
    num = den = 0.0
    count = 0
    for p, w in live:
        if abs(math.log(p) - med) <= math.log(r):
            num += p * w
            den += w
            count += 1
    return (num / den, count, den) if count else None


def naive_candles(trades, delta, t_start, t_end, r):
    """Per bucket, scan every trade; independent median, fence and sums."""
    seen: dict = {}
    for tr in trades:
        if tr.signature not in seen or tr.u > seen[tr.signature].u:
            seen[tr.signature] = tr
    kept = [tr for tr in trades if seen[tr.signature] is tr]
    tau0 = (t_start // delta) * delta
    out = []
    start = tau0
    while start < t_end:
        members = sorted((tr for tr in kept if start <= tr.t < start + delta and tr.t < t_end), key=lambda tr: tr.t)
        if members:
            logs = sorted(math.log(tr.p) for tr in members)
            n = len(logs)
            med = logs[n // 2] if n % 2 else (logs[n // 2 - 1] + logs[n // 2]) / 2
            members = [tr for tr in members if abs(math.log(tr.p) - med) <= math.log(r)]
        if members:
            ps = [tr.p for tr in members]
            out.append((start, ps[0], max(ps), min(ps), ps[-1], sum(tr.q for tr in members),
                        sum(tr.u for tr in members), len(members)))
        else:
            out.append((start, None, None, None, None, Decimal(0), 0.0, 0))
        start += delta
    return out
