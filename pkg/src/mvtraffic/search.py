"""Loss-constrained capacity planning: C_min for J streams, J_max for a link.

Every candidate is judged with the same replication seed (common random
numbers), so with phases held fixed the lost bits can only fall as the link
rate grows and only rise as streams are added; this keeps bisection and the
stream-count search well defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .mux import LossEstimate, MuxScenario, StopRule, estimate_loss, float_at_least
from .streamshape import DemandSequence


@dataclass(frozen=True)
class SearchConfig:
    epsilon: float = 1e-5
    runs: int = 500
    sims_per_run: int = 1000
    seed: int = 0
    tolerance: float = 1e-3  # relative bracket width for C_min
    expansion: float = 2.0
    rel_half_width: float = 0.10
    confidence: float = 0.95
    max_expansions: int = 64
    max_streams: int = 1 << 16
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must be in (0, 1)")
        if self.runs < 1 or self.sims_per_run < 1:
            raise ValueError("runs and sims_per_run must be >= 1")
        if self.runs * self.sims_per_run < 2:
            raise ValueError("need at least 2 replications in total")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if not self.expansion > 1:
            raise ValueError("expansion factor must be > 1")

    def fixed_rule(self) -> StopRule:
        """Exactly runs * sims_per_run replications."""
        return StopRule.fixed(self.runs * self.sims_per_run, rel_half_width=self.rel_half_width,
                              confidence=self.confidence)

    def stop_rule(self) -> StopRule:
        """CI-based stopping capped at runs * sims_per_run replications."""
        total = self.runs * self.sims_per_run
        return StopRule(
            rel_half_width=self.rel_half_width,
            confidence=self.confidence,
            min_replications=min(max(2, self.sims_per_run), total),
            max_replications=total,
        )


@dataclass(frozen=True)
class CapacityResult:
    c_min: float
    bracket: tuple[float, float]  # (infeasible, feasible)
    loss: LossEstimate
    evaluations: int
    J: int
    run_mean: float
    run_min: float
    run_max: float


@dataclass(frozen=True)
class AdmissionResult:
    j_max: int
    link_rate: float
    loss: LossEstimate | None  # estimate at j_max, None when j_max == 0
    evaluations: int


def is_feasible(est: LossEstimate, epsilon: float) -> bool:
    """Loss constraint check; with no observed loss the rule-of-three bound decides."""
    if est.zero_loss:
        return 3.0 / est.replications <= epsilon
    return est.p_hat <= epsilon


def find_cmin(demand: DemandSequence, J: int, cfg: SearchConfig | None = None) -> CapacityResult:
    """Smallest link rate (bit/s) keeping the loss estimate of J streams within epsilon.

    Each candidate rate is judged on the same runs * sims_per_run phase
    draws, so the estimated loss is non-increasing in the rate and bisection
    converges on a single crossing.
    """
    cfg = cfg or SearchConfig()
    if J < 1:
        raise ValueError("J must be >= 1")
    total = int(demand.values.sum())
    if total == 0:
        raise ValueError("demand is identically zero")
    stop = cfg.fixed_rule()
    f = Fraction(demand.frame_rate)
    cache: dict[float, LossEstimate] = {}

    def evaluate(C: float) -> tuple[bool, LossEstimate]:
        if C not in cache:
            cache[C] = estimate_loss(MuxScenario(demand, J, C), cfg.seed, stop, cfg.workers)
        est = cache[C]
        return is_feasible(est, cfg.epsilon), est

    lo = float(J * f * Fraction(total, demand.period_count * demand.unit))
    hi = float_at_least(J * f * Fraction(int(demand.values.max()), demand.unit))

    ok, hi_est = evaluate(hi)
    for _ in range(cfg.max_expansions):
        if ok:
            break
        hi *= cfg.expansion
        ok, hi_est = evaluate(hi)
    if not ok:
        raise RuntimeError("upper capacity bracket still infeasible after expansion")

    while True:
        ok, est = evaluate(lo)
        if not ok:
            break
        hi, hi_est = lo, est
        lo /= cfg.expansion

    while hi - lo > cfg.tolerance * hi:
        mid = (lo + hi) / 2
        ok, est = evaluate(mid)
        if ok:
            hi, hi_est = mid, est
        else:
            lo = mid

    mean, lo_run, hi_run, _ = hi_est.run_summary(cfg.sims_per_run)
    return CapacityResult(hi, (lo, hi), hi_est, len(cache), J, mean, lo_run, hi_run)


def admission_search(demand: DemandSequence, C: float,
                     cfg: SearchConfig | None = None) -> AdmissionResult:
    """Largest stream count J whose loss estimate at link rate C stays within epsilon.

    Doubles J until infeasible, then bisects the crossing.
    """
    cfg = cfg or SearchConfig()
    if not C > 0:
        raise ValueError("link rate must be > 0")
    stop = cfg.stop_rule()
    cache: dict[int, LossEstimate] = {}

    def evaluate(J: int) -> bool:
        if J not in cache:
            cache[J] = estimate_loss(MuxScenario(demand, J, C), cfg.seed, stop, cfg.workers)
        return is_feasible(cache[J], cfg.epsilon)

    if not evaluate(1):
        return AdmissionResult(0, C, None, len(cache))
    lo, hi = 1, 2
    while evaluate(hi):
        lo, hi = hi, hi * 2
        if hi > cfg.max_streams:
            raise RuntimeError(f"more than {cfg.max_streams} streams still feasible")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if evaluate(mid):
            lo = mid
        else:
            hi = mid
    return AdmissionResult(lo, C, cache[lo], len(cache))


def find_jmax(demand: DemandSequence, C: float, cfg: SearchConfig | None = None) -> int:
    return admission_search(demand, C, cfg).j_max
