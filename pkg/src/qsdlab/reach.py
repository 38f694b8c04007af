"""Interval-set images under a piecewise-monotone map, inflated by the noise.

Sets are lists of closed intervals ``(lo, hi)``.  On the circle each interval
is stored lifted with ``lo`` in ``[0, 1)`` and ``hi - lo < 1``; the whole
circle is the single interval ``(0, 1)`` flagged by :data:`FULL`.
"""

from __future__ import annotations

import math

from .maps import MapModel, Phase, _split_arc

FULL = (0.0, 1.0)
MAX_INTERVALS = 10_000


def normalize(intervals, phase: Phase, cap: int = MAX_INTERVALS) -> list[tuple[float, float]]:
    if not intervals:
        return []
    if phase.circle:
        items = []
        for a, b in intervals:
            if b - a >= 1.0:
                return [FULL]
            k = math.floor(a)
            items.append((a - k, b - k))
    else:
        items = [(max(a, phase.lo), min(b, phase.hi)) for a, b in intervals]
        items = [(a, b) for a, b in items if b >= a]
    items.sort()
    merged = [list(items[0])]
    for a, b in items[1:]:
        if a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    if phase.circle:
        while len(merged) > 1 and merged[-1][1] - 1.0 >= merged[0][0]:
            first = merged.pop(0)
            merged[-1][1] = max(merged[-1][1], first[1] + 1.0)
        if any(b - a >= 1.0 for a, b in merged):
            return [FULL]
    if len(merged) > cap:
        merged = _coarsen(merged, cap)
    return [(a, b) for a, b in merged]


def _coarsen(merged, cap):
    # close the smallest gaps first; the result still contains the original set
    gaps = sorted(range(len(merged) - 1), key=lambda i: merged[i + 1][0] - merged[i][1])
    close = set(gaps[: len(merged) - cap])
    out = [list(merged[0])]
    for i in range(1, len(merged)):
        if i - 1 in close:
            out[-1][1] = merged[i][1]
        else:
            out.append(list(merged[i]))
    return out


def is_full(intervals) -> bool:
    return intervals == [FULL]


def image(intervals, model: MapModel) -> list[tuple[float, float]]:
    """Lifted image of a set under f_delta (one interval per piece it meets)."""
    out = []
    for a, b in intervals:
        for lo, hi, _ in _split_arc(a, b, model.phase):
            for p in model.pieces:
                s, e = max(p.lo, lo), min(p.hi, hi)
                if e >= s:
                    out.append(model.image_range(p, s, e))
    return out


def inflate(intervals, sigma: float):
    return [(a - sigma, b + sigma) for a, b in intervals]


def step(intervals, model: MapModel, sigma: float):
    return normalize(inflate(image(intervals, model), sigma), model.phase)


def overlap_measure(intervals, arcs, phase: Phase) -> float:
    shifts = (-1.0, 0.0, 1.0) if phase.circle else (0.0,)
    total = 0.0
    for a, b in intervals:
        for c, d in arcs:
            for s in shifts:
                total += max(0.0, min(b, d + s) - max(a, c + s))
    return total


def contains_interior(intervals, point: float, phase: Phase) -> tuple[float, float] | None:
    """First interval having ``point`` strictly inside it, if any."""
    shifts = (-1.0, 0.0, 1.0) if phase.circle else (0.0,)
    for a, b in intervals:
        if (a, b) == FULL and phase.circle:
            return (a, b)
        if any(a < point + s < b for s in shifts):
            return (a, b)
    return None


def hole_set(model: MapModel) -> list[tuple[float, float]]:
    return normalize([(model.x0 - model.delta, model.x0 + model.delta)], model.phase)
