"""Streaming transforms: sequential merging, combining, and GoP smoothing.

Demand sequences are kept in exact integer arithmetic.  GoP smoothing can
produce fractional bits per period, so a :class:`DemandSequence` stores
integer values in units of ``1/unit`` bit, with ``unit`` chosen as the
smallest denominator that makes every smoothed share integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .trace import MultiviewTrace, TraceMeta


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.int64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MergedSequence:
    """Round-robin interleave of all views, V*M frames of duration 1/(V*f)."""

    sizes: np.ndarray
    unit_duration: float
    meta: TraceMeta


@dataclass(frozen=True, eq=False)
class CombinedSequence:
    """One multiview frame per frame index, size summed over views."""

    sizes: np.ndarray
    unit_duration: float
    meta: TraceMeta


@dataclass(frozen=True, eq=False)
class DemandSequence:
    """Bits offered to the link in each frame period.

    ``values[t] / unit`` is the demand of period ``t + 1`` in bits.
    """

    values: np.ndarray
    frame_rate: float
    unit: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        if self.values.ndim != 1 or len(self.values) < 1:
            raise ValueError("demand must be a non-empty 1-d sequence")
        if (self.values < 0).any():
            raise ValueError("demand must be >= 0")
        if self.unit < 1:
            raise ValueError("unit must be >= 1")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be > 0")

    @classmethod
    def from_bits(cls, bits, frame_rate: float) -> "DemandSequence":
        return cls(np.asarray(bits, dtype=np.int64), float(frame_rate))

    @property
    def period_count(self) -> int:
        return len(self.values)

    @property
    def bits(self) -> np.ndarray:
        """Per-period demand in bits (float; exact when ``unit`` is 1)."""
        return self.values / self.unit

    def total_bits(self) -> Fraction:
        return Fraction(int(self.values.sum()), self.unit)

    def exact(self) -> list[Fraction]:
        return [Fraction(int(x), self.unit) for x in self.values]

    def __eq__(self, other):
        if not isinstance(other, DemandSequence):
            return NotImplemented
        return (self.frame_rate == other.frame_rate and self.exact() == other.exact())

    __hash__ = None  # type: ignore[assignment]


def sequential_merge(trace: MultiviewTrace) -> MergedSequence:
    stacked = np.stack(trace.sizes, axis=1)  # (M, V)
    return MergedSequence(_readonly(stacked.reshape(-1)),
                          1.0 / (trace.V * trace.meta.frame_rate), trace.meta)


def combine(trace: MultiviewTrace) -> CombinedSequence:
    total = np.sum(np.stack(trace.sizes, axis=0), axis=0, dtype=np.int64)
    return CombinedSequence(_readonly(total), 1.0 / trace.meta.frame_rate, trace.meta)


def to_demand(seq: CombinedSequence) -> DemandSequence:
    """Bits per frame period: 8 times the multiview frame size."""
    return DemandSequence(8 * seq.sizes, seq.meta.frame_rate)


def instantaneous_rate(size_bytes: int, frame_rate: float) -> float:
    """Bit rate of a frame sent over one frame period, 8*f*X."""
    return 8 * frame_rate * size_bytes


def gop_blocks(T: int, G: int, offset: int = 0) -> list[np.ndarray]:
    """Index arrays of the cyclic smoothing blocks.

    Blocks of G periods start at ``offset``; when G does not divide T the last
    block is shorter and wraps past the end of the sequence.
    """
    n_blocks = -(-T // G)
    out = []
    for b in range(n_blocks):
        start = offset + b * G
        length = min(G, T - b * G)
        out.append((start + np.arange(length)) % T)
    return out


def gop_smooth(demand: DemandSequence, G: int, alignment_offset: int = 0) -> DemandSequence:
    """Spread the bits of each block of G periods evenly over that block.

    Totals are conserved exactly; the result is constant within every block.
    """
    T = demand.period_count
    if G < 1:
        raise ValueError("G must be >= 1")
    if G > T:
        raise ValueError(f"G={G} exceeds the number of periods T={T}")
    if not 0 <= alignment_offset < G:
        raise ValueError("alignment_offset must be in [0, G)")

    blocks = gop_blocks(T, G, alignment_offset)
    totals = [int(demand.values[idx].sum()) for idx in blocks]
    # smallest extra denominator making every block share integral
    extra = 1
    for idx, tot in zip(blocks, totals):
        n = len(idx)
        extra = math.lcm(extra, n // math.gcd(tot, n))
    out = np.empty(T, dtype=np.int64)
    for idx, tot in zip(blocks, totals):
        out[idx] = tot * extra // len(idx)
    return DemandSequence(out, demand.frame_rate, demand.unit * extra)
