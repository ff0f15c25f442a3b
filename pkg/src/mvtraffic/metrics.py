"""Traffic and quality statistics of traces and demand sequences.

All sums are carried out in exact integer / rational arithmetic and only the
final quantities are converted to float, so results do not depend on the
summation order or platform.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Literal, Sequence

import numpy as np

from .streamshape import DemandSequence, combine, gop_smooth, to_demand
from .trace import MultiviewTrace

Normalization = Literal["paper", "standard"]


@dataclass(frozen=True)
class StreamStats:
    mean_frame_size: float  # bytes
    variance: float  # bytes^2
    std_dev: float
    cov: float
    mean_bitrate: float  # bit/s
    sample_count: int
    normalization: str = "standard"
    label: str = ""


@dataclass(frozen=True)
class CurvePoint:
    kind: Literal["RD", "VD"]
    avg_psnr: float
    avg_bitrate: float | None = None
    cov: float | None = None
    label: str = ""


def _sum_sq_dev(values: Iterable[int], n: int, mean: Fraction) -> Fraction:
    # sum (x - mean)^2 = sum x^2 - n*mean^2, all exact
    ints = [int(x) for x in values]
    return sum(x * x for x in ints) - n * mean * mean


def _sqrt(q: Fraction) -> float:
    return math.sqrt(q) if q > 0 else 0.0


def _cov(var: Fraction, mean: Fraction) -> float:
    if mean == 0:
        return 0.0
    return _sqrt(var) / float(mean)


def view_stats(trace: MultiviewTrace, v: int) -> StreamStats:
    """Mean, sample variance (M-1), CoV and mean bitrate 8*f*mean of one view."""
    x = trace.view_sizes(v)
    M = len(x)
    if M < 2:
        raise ValueError("variance needs at least 2 frames")
    mean = Fraction(int(x.sum()), M)
    var = _sum_sq_dev(x.tolist(), M, mean) / (M - 1)
    return StreamStats(
        mean_frame_size=float(mean),
        variance=float(var),
        std_dev=_sqrt(var),
        cov=_cov(var, mean),
        mean_bitrate=float(8 * Fraction(trace.meta.frame_rate) * mean),
        sample_count=M,
        label=f"view{v}",
    )


def _grand_mean(trace: MultiviewTrace) -> Fraction:
    # (1/V) sum_v mean(v) == total / (V*M) since every view has M frames
    return sum(Fraction(int(s.sum()), len(s)) for s in trace.sizes) / trace.V


def merged_mean(trace: MultiviewTrace) -> tuple[float, float]:
    """Average frame size over views and average multiview bit rate 8*V*f*mean."""
    xbar = _grand_mean(trace)
    rbar = 8 * trace.V * Fraction(trace.meta.frame_rate) * xbar
    return float(xbar), float(rbar)


def sequential_variability(trace: MultiviewTrace,
                           normalization: Normalization = "paper") -> StreamStats:
    """Frame-size variability of the round-robin merged stream.

    ``paper`` divides the squared deviations by (M-1)(V-1), ``standard`` by
    the usual V*M-1.
    """
    V, M = trace.V, trace.M
    if M < 2:
        raise ValueError("variance needs at least 2 frames")
    if normalization == "paper":
        if V < 2:
            raise ValueError("paper normalization (M-1)(V-1) is undefined for V=1")
        denom = (M - 1) * (V - 1)
    elif normalization == "standard":
        denom = V * M - 1
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    xbar = _grand_mean(trace)
    ssd = _sum_sq_dev(np.concatenate(trace.sizes).tolist(), V * M, xbar)
    var = ssd / denom
    return StreamStats(
        mean_frame_size=float(xbar),
        variance=float(var),
        std_dev=_sqrt(var),
        cov=_cov(var, xbar),
        mean_bitrate=float(8 * V * Fraction(trace.meta.frame_rate) * xbar),
        sample_count=V * M,
        normalization=normalization,
        label="S",
    )


def combined_variability(trace: MultiviewTrace) -> StreamStats:
    """Variability of the multiview frames X_m = sum_v X_m(v) around V*mean."""
    M = trace.M
    if M < 2:
        raise ValueError("variance needs at least 2 frames")
    xm = combine(trace).sizes
    vxbar = trace.V * _grand_mean(trace)
    var = _sum_sq_dev(xm.tolist(), M, vxbar) / (M - 1)
    return StreamStats(
        mean_frame_size=float(vxbar),
        variance=float(var),
        std_dev=_sqrt(var),
        cov=_cov(var, vxbar),
        mean_bitrate=float(8 * Fraction(trace.meta.frame_rate) * vxbar),
        sample_count=M,
        label="C",
    )


def demand_stats(demand: DemandSequence, label: str = "demand") -> StreamStats:
    """Statistics of a per-period demand, reported in bytes like the frame stats."""
    T = demand.period_count
    if T < 2:
        raise ValueError("variance needs at least 2 periods")
    mean_u = Fraction(int(demand.values.sum()), T)
    var_u = _sum_sq_dev(demand.values.tolist(), T, mean_u) / (T - 1)
    to_bytes = Fraction(1, 8 * demand.unit)
    mean_b = mean_u * to_bytes
    var_b = var_u * to_bytes * to_bytes
    return StreamStats(
        mean_frame_size=float(mean_b),
        variance=float(var_b),
        std_dev=_sqrt(var_b),
        cov=_cov(var_u, mean_u),
        mean_bitrate=float(8 * Fraction(demand.frame_rate) * mean_b),
        sample_count=T,
        label=label,
    )


def demand_cov(demand: DemandSequence) -> float:
    """Sample standard deviation (T-1) of the per-period demand over its mean."""
    if demand.period_count < 2:
        raise ValueError("CoV needs at least 2 periods")
    if not demand.values.any():
        raise ValueError("CoV undefined for zero-mean demand")
    return demand_stats(demand).cov


def average_psnr(trace: MultiviewTrace) -> float:
    """Arithmetic mean (in dB) of the PSNR of all V*M frames."""
    if trace.psnr is None:
        raise ValueError("trace carries no PSNR values")
    for v, p in enumerate(trace.psnr, start=1):
        missing = np.flatnonzero(np.isnan(p))
        if len(missing):
            raise ValueError(f"PSNR missing for frame {missing[0] + 1} of view {v}")
    return math.fsum(np.concatenate(trace.psnr).tolist()) / sum(len(p) for p in trace.psnr)


_SHAPING = re.compile(r"^(view(?P<v>\d*)|S(?::(?P<norm>paper|standard))?|C|smooth(?P<g>\d*))$")


def parse_shaping(desc: str) -> tuple[str, int | str | None]:
    """Parse a shaping descriptor.

    Accepted forms: ``view`` / ``viewN`` (per-view, default view 1),
    ``S`` / ``S:standard``, ``C``, ``smooth`` (trace GoP length) or
    ``smoothG``.
    """
    m = _SHAPING.match(desc)
    if not m:
        raise ValueError(f"unknown shaping {desc!r}")
    if desc.startswith("view"):
        return "view", int(m["v"]) if m["v"] else 1
    if desc.startswith("S"):
        return "S", m["norm"] or "paper"
    if desc == "C":
        return "C", None
    g = int(m["g"]) if m["g"] else None
    if g is not None and g < 1:
        raise ValueError("smoothing length must be >= 1")
    return "smooth", g


def shaped_cov(trace: MultiviewTrace, shaping: str) -> float:
    kind, arg = parse_shaping(shaping)
    if kind == "view":
        return view_stats(trace, arg).cov
    if kind == "S":
        return sequential_variability(trace, arg).cov
    if kind == "C":
        return combined_variability(trace).cov
    G = arg or trace.meta.gop_length
    return demand_cov(gop_smooth(to_demand(combine(trace)), G))


def _label(trace: MultiviewTrace, shaping: str) -> str:
    meta = trace.meta
    qp = f"qp{meta.quantizer}" if meta.quantizer is not None else "qp-"
    return f"{meta.video_name}/{meta.representation.value}/{qp}/{shaping}"


def build_curves(encodings: Sequence[tuple[MultiviewTrace, str]]) -> list[CurvePoint]:
    """One RD and one VD point per (trace, shaping) pair.

    RD points are (mean multiview bit rate, average PSNR); VD points are
    (average PSNR, CoV under the requested shaping).  Points are sorted by
    average PSNR, RD before VD on ties.
    """
    if not encodings:
        raise ValueError("no encodings given")
    points = []
    for trace, shaping in encodings:
        psnr = average_psnr(trace)
        _, rbar = merged_mean(trace)
        label = _label(trace, shaping)
        points.append(CurvePoint("RD", psnr, avg_bitrate=rbar, label=label))
        points.append(CurvePoint("VD", psnr, cov=shaped_cov(trace, shaping), label=label))
    points.sort(key=lambda p: (p.avg_psnr, p.kind))
    return points
