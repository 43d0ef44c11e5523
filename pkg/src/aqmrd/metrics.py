"""Per-run accounting and the summary statistics reported for each run."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

TraceRow = tuple[float, int, float, float, float]  # (t, q, avg, davg, mid_th)


@dataclass
class RunMetrics:
    """Counters and streaming accumulators for one simulation run.

    Per-packet delays and the sampled trace are only kept when requested;
    the means are always available from the running sums.
    """

    duration: float = 0.0
    packet_size: int = 1000
    bandwidth: float = 0.0
    sent: int = 0
    arrivals: int = 0
    drops: int = 0
    early_drops: int = 0
    overflow_drops: int = 0
    delivered: int = 0
    delivered_bytes: int = 0
    in_network: int = 0
    busy_time: float = 0.0
    delay_sum: float = 0.0
    n_samples: int = 0
    q_sum: float = 0.0
    avg_sum: float = 0.0
    max_q: int = 0
    mid_th_min: float = math.inf
    mid_th_max: float = -math.inf
    delays: Optional[list[float]] = None
    trace: Optional[list[TraceRow]] = None

    def record_delivery(self, size: int, delay: float) -> None:
        self.delivered += 1
        self.delivered_bytes += size
        self.delay_sum += delay
        if self.delays is not None:
            self.delays.append(delay)

    def record_sample(self, t: float, q: int, avg: float, davg: float, mid_th: float) -> None:
        self.n_samples += 1
        self.q_sum += q
        self.avg_sum += avg
        if mid_th == mid_th:  # not NaN
            if mid_th < self.mid_th_min:
                self.mid_th_min = mid_th
            if mid_th > self.mid_th_max:
                self.mid_th_max = mid_th
        if self.trace is not None:
            self.trace.append((t, q, avg, davg, mid_th))

    def __eq__(self, other: object) -> bool:
        # NaN-safe field comparison so that identical runs compare equal
        if not isinstance(other, RunMetrics):
            return NotImplemented
        return _fields_key(self) == _fields_key(other)


def _fields_key(m: RunMetrics) -> tuple:
    def norm(v):
        if isinstance(v, float) and math.isnan(v):
            return "nan"
        if isinstance(v, list):
            return tuple(tuple(norm(x) for x in r) if isinstance(r, tuple) else norm(r) for r in v)
        return v

    return tuple(norm(getattr(m, f)) for f in m.__dataclass_fields__)


def throughput(m: RunMetrics) -> float:
    """Delivered bits per second of simulated time."""
    if m.duration <= 0.0:
        raise ValueError("duration must be positive")
    return m.delivered_bytes * 8.0 / m.duration


def relative_throughput(m: RunMetrics, bandwidth: float) -> float:
    if bandwidth <= 0.0:
        raise ValueError("bandwidth must be positive")
    return throughput(m) / bandwidth


def mean_queuing_delay(m: RunMetrics) -> float | None:
    """Mean time from router arrival to end of transmission, in seconds."""
    if m.delivered == 0:
        return None
    return m.delay_sum / m.delivered


def time_avg(trace: Sequence[float]) -> float | None:
    """Mean of uniformly spaced samples; None for an empty trace."""
    if len(trace) == 0:
        return None
    return math.fsum(trace) / len(trace)


def expected_avg(m: RunMetrics) -> float | None:
    return m.avg_sum / m.n_samples if m.n_samples else None


def expected_q(m: RunMetrics) -> float | None:
    return m.q_sum / m.n_samples if m.n_samples else None


def loss_ratio(m: RunMetrics) -> float | None:
    """Percentage of router arrivals that were dropped."""
    if m.arrivals == 0:
        return None
    return 100.0 * m.drops / m.arrivals


def percent_change(
    metric_scheme: float | None,
    metric_red: float | None,
    sense: Literal["reduction", "increase"] = "reduction",
) -> float | None:
    """Relative difference against the RED baseline, in percent.

    With ``sense="reduction"`` a positive result means the scheme is lower
    than RED; with ``sense="increase"`` a positive result means it is higher.
    """
    if metric_scheme is None or metric_red is None or metric_red == 0:
        return None
    diff = 100.0 * (metric_red - metric_scheme) / metric_red
    if sense == "increase":
        return -diff
    if sense != "reduction":
        raise ValueError(f"unknown sense {sense!r}")
    return diff


SUMMARY_FIELDS = (
    "throughput_bps",
    "relative_throughput",
    "mean_qdelay_s",
    "e_avg_pkts",
    "e_q_pkts",
    "loss_ratio_pct",
)


@dataclass(frozen=True)
class RunSummary:
    throughput_bps: float
    relative_throughput: float
    mean_qdelay_s: float | None
    e_avg_pkts: float | None
    e_q_pkts: float | None
    loss_ratio_pct: float | None
    extras: dict = field(default_factory=dict, compare=False)


def summarize(m: RunMetrics) -> RunSummary:
    return RunSummary(
        throughput_bps=throughput(m),
        relative_throughput=relative_throughput(m, m.bandwidth),
        mean_qdelay_s=mean_queuing_delay(m),
        e_avg_pkts=expected_avg(m),
        e_q_pkts=expected_q(m),
        loss_ratio_pct=loss_ratio(m),
        extras={
            "early_drops": m.early_drops,
            "overflow_drops": m.overflow_drops,
            "mid_th_min": m.mid_th_min,
            "mid_th_max": m.mid_th_max,
        },
    )
