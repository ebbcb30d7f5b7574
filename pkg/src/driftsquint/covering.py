"""Geometric covering intervals, box schedules and the partition construction.

Level-n intervals are [i * 2^n, (i+1) * 2^n - 1] for i = 1, 2, ... (index 0 is
excluded, so the first level-n interval starts at 2^n). A box schedule for
horizon T enumerates every covering interval that ends by T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import Interval, validate_interval


@dataclass(frozen=True)
class CoveringInterval:
    level: int
    index: int

    def __post_init__(self):
        if self.level < 0 or self.index < 1:
            raise ValueError(f"invalid covering interval (n={self.level}, i={self.index})")

    @property
    def start(self) -> int:
        return self.index * 2**self.level

    @property
    def end(self) -> int:
        return (self.index + 1) * 2**self.level - 1

    @property
    def length(self) -> int:
        return 2**self.level

    @property
    def bounds(self) -> Interval:
        return (self.start, self.end)

    @classmethod
    def containing(cls, t: int, level: int) -> "CoveringInterval":
        """The level-n interval containing round t; requires 2^n <= t."""
        if t < 1 or 2**level > t:
            raise ValueError(f"no level-{level} interval contains t={t}")
        return cls(level, t // 2**level)

    @classmethod
    def from_bounds(cls, start: int, end: int) -> "CoveringInterval":
        """Reconstruct (n, i) from endpoints, rejecting non-members of the family."""
        length = end - start + 1
        level = length.bit_length() - 1
        if 2**level != length or start % length != 0 or start < length:
            raise ValueError(f"[{start}, {end}] is not a geometric covering interval")
        return cls(level, start // length)

    def __repr__(self):
        return f"[{self.start},{self.end}]"


def active_intervals(t: int) -> list[CoveringInterval]:
    """All covering intervals containing round t, one per level 0..floor(log2 t)."""
    if t < 1:
        raise ValueError("rounds are 1-based")
    return [CoveringInterval.containing(t, n) for n in range(t.bit_length())]


@dataclass
class CoveringSchedule:
    """Boxes {J : J2 <= T} in a stable order (by start, then by length)."""

    horizon: int
    boxes: tuple[CoveringInterval, ...]
    _index: dict[Interval, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self._index:
            self._index = {b.bounds: i for i, b in enumerate(self.boxes)}
        if len(self.boxes) > 2 * self.horizon:
            raise AssertionError("box count exceeds 2T")

    @property
    def size(self) -> int:
        return len(self.boxes)

    def index_of(self, bounds: Interval) -> int:
        return self._index[tuple(bounds)]

    def active_at(self, t: int) -> list[int]:
        """Indices of schedule boxes containing round t (intervals spilling past T
        are not part of the schedule and are skipped)."""
        if not 1 <= t <= self.horizon:
            raise ValueError(f"round {t} outside horizon {self.horizon}")
        return [
            self._index[j.bounds]
            for j in active_intervals(t)
            if j.end <= self.horizon
        ]

    def total_active(self) -> int:
        """Sum over t of |B_t|, the number of box-update events in a full run."""
        return sum(b.length for b in self.boxes)


def enumerate_boxes(horizon: int) -> CoveringSchedule:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    boxes = []
    level = 0
    while 2 ** (level + 1) - 1 <= horizon:
        i = 1
        while (i + 1) * 2**level - 1 <= horizon:
            boxes.append(CoveringInterval(level, i))
            i += 1
        level += 1
    boxes.sort(key=lambda b: (b.start, b.length))
    return CoveringSchedule(horizon, tuple(boxes))


@dataclass(frozen=True)
class Partition:
    """Pieces J^(-c)..J^(0), J^(1)..J^(d): doubling up to the peak, then halving."""

    pieces: tuple[CoveringInterval, ...]
    c: int
    d: int

    @property
    def size(self) -> int:
        return len(self.pieces)


def partition(start: int, end: int) -> Partition:
    """Split [start, end] into consecutive covering intervals, greedily taking at
    each position the longest aligned interval that still fits."""
    validate_interval((start, end))
    pieces = []
    pos = start
    while pos <= end:
        # alignment: level cannot exceed the 2-adic valuation of pos
        max_align = (pos & -pos).bit_length() - 1
        level = max_align
        while pos + 2**level - 1 > end:
            level -= 1
        pieces.append(CoveringInterval(level, pos >> level))
        pos += 2**level
    # the doubling chain runs while each piece is at most half the next one
    c = 0
    while c + 1 < len(pieces) and pieces[c].length * 2 <= pieces[c + 1].length:
        c += 1
    return Partition(tuple(pieces), c, len(pieces) - 1 - c)


def partition_count_bound(length: int) -> float:
    """2 log2(|I| + 2), an upper bound on the number of partition pieces."""
    if length < 1:
        raise ValueError("interval length must be >= 1")
    return 2.0 * math.log2(length + 2)
