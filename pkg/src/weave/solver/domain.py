"""Interval-set domains over 64-bit integers.

Domains are immutable; operations return a new domain or ``None`` when the
result would be empty, which keeps trailing cheap (store the old object).
Ranges are sorted, disjoint, and non-adjacent.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Optional


class Domain:
    __slots__ = ("ranges", "_size")

    def __init__(self, ranges: tuple[tuple[int, int], ...]):
        self.ranges = ranges
        self._size = sum(hi - lo + 1 for lo, hi in ranges)
        if self._size <= 0:
            raise ValueError("empty domain; use None to signal failure")

    # -- constructors --------------------------------------------------------

    @staticmethod
    def from_values(values: Iterable[int]) -> Optional["Domain"]:
        vals = sorted(set(values))
        if not vals:
            return None
        ranges = []
        lo = hi = vals[0]
        for v in vals[1:]:
            if v == hi + 1:
                hi = v
            else:
                ranges.append((lo, hi))
                lo = hi = v
        ranges.append((lo, hi))
        return Domain(tuple(ranges))

    @staticmethod
    def from_range(lo: int, hi: int) -> Optional["Domain"]:
        if lo > hi:
            return None
        return Domain(((lo, hi),))

    @staticmethod
    def singleton(value: int) -> "Domain":
        return Domain(((value, value),))

    # -- queries ----------------------------------------------------------------

    @property
    def size(self) -> int:
        return self._size

    @property
    def min(self) -> int:
        return self.ranges[0][0]

    @property
    def max(self) -> int:
        return self.ranges[-1][1]

    def is_singleton(self) -> bool:
        return self._size == 1

    @property
    def value(self) -> int:
        if self._size != 1:
            raise ValueError("domain not singleton")
        return self.ranges[0][0]

    def __contains__(self, v: int) -> bool:
        lo_idx, hi_idx = 0, len(self.ranges) - 1
        while lo_idx <= hi_idx:
            mid = (lo_idx + hi_idx) // 2
            lo, hi = self.ranges[mid]
            if v < lo:
                hi_idx = mid - 1
            elif v > hi:
                lo_idx = mid + 1
            else:
                return True
        return False

    def values(self) -> Iterator[int]:
        for lo, hi in self.ranges:
            yield from range(lo, hi + 1)

    def __eq__(self, other) -> bool:
        return isinstance(other, Domain) and self.ranges == other.ranges

    def __hash__(self):
        return hash(self.ranges)

    def __repr__(self) -> str:
        parts = [f"{lo}" if lo == hi else f"{lo}..{hi}" for lo, hi in self.ranges]
        return "{" + ", ".join(parts) + "}"

    # -- contractions (never grow) --------------------------------------------------

    def remove_value(self, v: int) -> Optional["Domain"]:
        if v not in self:
            return self
        out = []
        for lo, hi in self.ranges:
            if v < lo or v > hi:
                out.append((lo, hi))
                continue
            if lo <= v - 1:
                out.append((lo, v - 1))
            if v + 1 <= hi:
                out.append((v + 1, hi))
        return Domain(tuple(out)) if out else None

    def remove_below(self, bound: int) -> Optional["Domain"]:
        """Keep values >= bound."""
        if self.min >= bound:
            return self
        out = []
        for lo, hi in self.ranges:
            if hi < bound:
                continue
            out.append((max(lo, bound), hi))
        return Domain(tuple(out)) if out else None

    def remove_above(self, bound: int) -> Optional["Domain"]:
        """Keep values <= bound."""
        if self.max <= bound:
            return self
        out = []
        for lo, hi in self.ranges:
            if lo > bound:
                continue
            out.append((lo, min(hi, bound)))
        return Domain(tuple(out)) if out else None

    def intersect(self, other: "Domain") -> Optional["Domain"]:
        if self.ranges == other.ranges:
            return self
        out = []
        i = j = 0
        a, b = self.ranges, other.ranges
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if lo <= hi:
                out.append((lo, hi))
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        if not out:
            return None
        merged = _normalize(out)
        if merged == self.ranges:
            return self
        return Domain(merged)

    def intersect_values(self, allowed: frozenset[int]) -> Optional["Domain"]:
        kept = [v for v in self.values() if v in allowed]
        if len(kept) == self._size:
            return self
        return Domain.from_values(kept)

    def subtract_values(self, banned) -> Optional["Domain"]:
        dom: Optional[Domain] = self
        for v in banned:
            if dom is None:
                return None
            dom = dom.remove_value(v)
        return dom


def _normalize(ranges: list[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    out: list[tuple[int, int]] = []
    for lo, hi in ranges:
        if out and lo <= out[-1][1] + 1:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return tuple(out)
