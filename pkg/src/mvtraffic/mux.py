"""Bufferless statistical multiplexer simulation.

J copies of one demand sequence, each started at its own uniformly random
frame and cycled with wrap-around, feed a link that can carry C/f bits per
frame period.  Bits above that budget are lost in that period; nothing is
carried over.  The information loss ratio of a replication is lost bits over
offered bits.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from .streamshape import DemandSequence

#: replications per phase block; phases of a block depend only on
#: (seed, block index, stream index)
PHASE_BLOCK = 1024
_CHUNK_ELEMS = 1 << 21
ENUMERATION_LIMIT = 10**7


def float_at_least(q: Fraction) -> float:
    """Smallest float not below the exact rational ``q``."""
    x = float(q)
    return x if Fraction(x) >= q else math.nextafter(x, math.inf)


@dataclass(frozen=True)
class MuxScenario:
    demand: DemandSequence
    J: int
    link_rate: float  # bit/s

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be >= 1")
        if not self.link_rate > 0:
            raise ValueError("link rate must be > 0")

    @property
    def frame_rate(self) -> float:
        return self.demand.frame_rate

    @property
    def M(self) -> int:
        return self.demand.period_count

    @property
    def budget_bits(self) -> int:
        """Bits the link carries per frame period, floor(C/f)."""
        return math.floor(Fraction(self.link_rate) / Fraction(self.frame_rate))

    @property
    def budget_units(self) -> int:
        return self.budget_bits * self.demand.unit

    def with_link_rate(self, C: float) -> "MuxScenario":
        return MuxScenario(self.demand, self.J, C)

    def with_streams(self, J: int) -> "MuxScenario":
        return MuxScenario(self.demand, J, self.link_rate)

    @classmethod
    def from_budget(cls, demand: DemandSequence, J: int, budget_bits: int) -> "MuxScenario":
        """Scenario whose per-period budget is exactly ``budget_bits``."""
        return cls(demand, J, float_at_least(Fraction(budget_bits) * Fraction(demand.frame_rate)))


@dataclass(frozen=True)
class ReplicationResult:
    lost: int  # demand units (1/unit bit)
    offered: int
    unit: int
    phases: tuple[int, ...]

    @property
    def lost_bits(self) -> Fraction:
        return Fraction(self.lost, self.unit)

    @property
    def offered_bits(self) -> Fraction:
        return Fraction(self.offered, self.unit)

    @property
    def loss_ratio(self) -> float:
        return self.lost / self.offered if self.offered else 0.0


@dataclass(frozen=True)
class StopRule:
    """Sequential stopping: stop once the CI half-width drops below
    ``rel_half_width`` times the sample mean, after at least
    ``min_replications`` and at most ``max_replications``."""

    rel_half_width: float = 0.10
    confidence: float = 0.95
    min_replications: int = 100
    max_replications: int = 100_000

    def __post_init__(self):
        if self.min_replications < 2:
            raise ValueError("min_replications must be >= 2")
        if self.max_replications < self.min_replications:
            raise ValueError("max_replications must be >= min_replications")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must be in (0, 1)")
        if not self.rel_half_width > 0:
            raise ValueError("rel_half_width must be > 0")

    @classmethod
    def fixed(cls, n: int, **kw) -> "StopRule":
        return cls(min_replications=n, max_replications=n, **kw)


@dataclass(frozen=True)
class LossEstimate:
    p_hat: float
    ci_half_width: float
    confidence_level: float
    replications: int
    zero_loss: bool
    pooled_ratio: float
    converged: bool
    ratios: np.ndarray = field(repr=False, compare=False)

    @property
    def upper_bound(self) -> float:
        """Rule-of-three bound when no loss was seen, else the CI upper end."""
        if self.zero_loss:
            return 3.0 / self.replications
        return self.p_hat + self.ci_half_width

    def run_summary(self, sims_per_run: int) -> tuple[float, float, float, int]:
        """(mean, min, max, count) of per-run mean ratios over complete runs."""
        runs = len(self.ratios) // sims_per_run
        if runs == 0:
            return self.p_hat, self.p_hat, self.p_hat, 0
        per_run = self.ratios[: runs * sims_per_run].reshape(runs, sims_per_run).mean(axis=1)
        return float(per_run.mean()), float(per_run.min()), float(per_run.max()), runs


def _check_phases(scenario: MuxScenario, phases: Sequence[int]) -> tuple[int, ...]:
    M = scenario.M
    phases = tuple(int(p) for p in phases)
    if len(phases) != scenario.J:
        raise ValueError(f"expected {scenario.J} phases, got {len(phases)}")
    for p in phases:
        if not 1 <= p <= M:
            raise ValueError(f"phase {p} outside [1, {M}]")
    return phases


def period_aggregate(scenario: MuxScenario, phases: Sequence[int]) -> np.ndarray:
    """Demand units offered in each of the M periods by streams starting at ``phases``."""
    phases = _check_phases(scenario, phases)
    M = scenario.M
    idx = (np.array(phases)[:, None] - 1 + np.arange(M)[None, :]) % M
    return scenario.demand.values[idx].sum(axis=0)


def period_losses(scenario: MuxScenario, phases: Sequence[int]) -> np.ndarray:
    """Demand units lost in each period: max(0, aggregate - C/f)."""
    return np.maximum(period_aggregate(scenario, phases) - scenario.budget_units, 0)


def simulate_replication(scenario: MuxScenario, phases: Sequence[int]) -> ReplicationResult:
    """Multiplex J streams starting at the given 1-based frames for M periods."""
    phases = _check_phases(scenario, phases)
    agg = period_aggregate(scenario, phases)
    lost = int(np.maximum(agg - scenario.budget_units, 0).sum())
    return ReplicationResult(lost, int(agg.sum()), scenario.demand.unit, phases)


def exact_loss_oracle(scenario: MuxScenario, limit: int = ENUMERATION_LIMIT) -> Fraction:
    """Expected loss ratio over all M**J phase tuples, by full enumeration."""
    M, J = scenario.M, scenario.J
    n_tuples = M**J
    if n_tuples > limit:
        raise ValueError(f"M**J = {n_tuples} exceeds the enumeration limit {limit}")
    d = scenario.demand.values
    offered = J * int(d.sum())
    if offered == 0:
        return Fraction(0)
    budget = scenario.budget_units
    steps = np.arange(M)
    place = M ** np.arange(J)
    chunk = max(1, _CHUNK_ELEMS // (J * M))
    lost_total = 0
    for start in range(0, n_tuples, chunk):
        k = np.arange(start, min(start + chunk, n_tuples), dtype=np.int64)
        ph = (k[:, None] // place[None, :]) % M  # zero-based phases
        agg = d[(ph[:, :, None] + steps[None, None, :]) % M].sum(axis=1)
        lost_total += int(np.maximum(agg - budget, 0).sum())
    return Fraction(lost_total, n_tuples * offered)


def replication_phases(seed: int, block: int, J: int, M: int) -> np.ndarray:
    """Zero-based starting frames of the PHASE_BLOCK replications of ``block``.

    Column j depends only on (seed, block, j), so the first J streams see the
    same phases whatever the total number of streams.
    """
    if seed < 0:
        raise ValueError("seed must be >= 0")
    cols = [np.random.default_rng([seed, block, j]).integers(0, M, PHASE_BLOCK)
            for j in range(J)]
    return np.stack(cols, axis=1)


class _Kernel:
    def __init__(self, scenario: MuxScenario, seed: int):
        d = scenario.demand.values
        self.M = len(d)
        self.J = scenario.J
        self.seed = seed
        self.budget = scenario.budget_units
        # row p holds the stream started at zero-based frame p
        self.windows = sliding_window_view(np.concatenate([d, d]), self.M)[: self.M]

    def block_lost(self, block: int) -> np.ndarray:
        phases = replication_phases(self.seed, block, self.J, self.M)
        lost = np.empty(PHASE_BLOCK, dtype=np.int64)
        rows = max(1, _CHUNK_ELEMS // self.M)
        for a in range(0, PHASE_BLOCK, rows):
            p = phases[a:a + rows]
            agg = self.windows[p[:, 0]]
            for j in range(1, self.J):
                agg += self.windows[p[:, j]]
            agg -= self.budget
            np.maximum(agg, 0, out=agg)
            lost[a:a + rows] = agg.sum(axis=1)
        return lost


def estimate_loss(scenario: MuxScenario, seed: int, stop: StopRule | None = None,
                  workers: int = 1) -> LossEstimate:
    """Monte Carlo estimate of the information loss probability.

    Replications are generated in a fixed order from ``seed``; the stopping
    rule (Student-t CI half-width below ``stop.rel_half_width`` times the
    mean of per-replication loss ratios) is checked after every replication.
    ``workers`` only changes how many phase blocks are simulated at once,
    never the result.
    """
    stop = stop or StopRule()
    d = scenario.demand.values
    offered = scenario.J * int(d.sum())
    n_max = stop.max_replications
    q = (1 + stop.confidence) / 2

    if offered == 0 or scenario.J * int(d.max()) <= scenario.budget_units:
        # no phase tuple can lose bits; identical to simulating n_max zeros
        return LossEstimate(0.0, 0.0, stop.confidence, n_max, True, 0.0, False,
                            np.zeros(n_max))

    kernel = _Kernel(scenario, seed)
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    chunks: list[np.ndarray] = []
    n_done = 0
    s = ss = 0.0
    lost_sum = 0
    converged = False
    block = 0
    try:
        while n_done < n_max and not converged:
            ids = list(range(block, block + max(1, workers)))
            block += len(ids)
            results = pool.map(kernel.block_lost, ids) if pool else map(kernel.block_lost, ids)
            for lost in results:
                if n_done >= n_max or converged:
                    break
                lost = lost[: n_max - n_done]
                r = lost / offered
                cs = np.cumsum(np.concatenate(([s], r)))[1:]
                css = np.cumsum(np.concatenate(([ss], r * r)))[1:]
                ns = n_done + np.arange(1, len(r) + 1)
                take = len(r)
                ok = ns >= stop.min_replications
                if ok.any():
                    n_ok = ns[ok]
                    mean = cs[ok] / n_ok
                    var = np.maximum((css[ok] - cs[ok] * mean) / (n_ok - 1), 0.0)
                    hw = stats.t.ppf(q, n_ok - 1) * np.sqrt(var / n_ok)
                    hit = np.flatnonzero(hw < stop.rel_half_width * mean)
                    if len(hit):
                        take = int(n_ok[hit[0]] - n_done)
                        converged = True
                chunks.append(r[:take])
                lost_sum += int(lost[:take].sum())
                s, ss = cs[take - 1], css[take - 1]
                n_done += take
    finally:
        if pool:
            pool.shutdown()

    ratios = np.concatenate(chunks)
    n = n_done
    mean = s / n
    var = max((ss - s * mean) / (n - 1), 0.0)
    hw = float(stats.t.ppf(q, n - 1) * math.sqrt(var / n))
    return LossEstimate(
        p_hat=float(mean),
        ci_half_width=hw,
        confidence_level=stop.confidence,
        replications=n,
        zero_loss=lost_sum == 0,
        pooled_ratio=lost_sum / (n * offered),
        converged=converged,
        ratios=ratios,
    )
