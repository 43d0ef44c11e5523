"""Shared configuration and verdict types for the queue disciplines."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class AboveMidMode(str, enum.Enum):
    """Drop behaviour of AQMRD when davg > 0 and avg has reached mid_th.

    UNIT_PROB drops every arrival in that region. P2_FALLBACK uses the
    gentler linear ramp computed against max_th instead.
    """

    UNIT_PROB = "unit_prob"
    P2_FALLBACK = "p2_fallback"


class EwmaClock(str, enum.Enum):
    """When the queue averages advance.

    SAMPLE updates once per ``sample_interval``; ARRIVAL updates on every
    packet arrival, with the classic RED correction for idle periods.
    """

    SAMPLE = "sample"
    ARRIVAL = "arrival"


class Action(enum.Enum):
    ENQUEUE = "enqueue"
    DROP = "drop"


@dataclass(frozen=True)
class GatewayParams:
    """Static gateway configuration.

    Thresholds and the buffer are in packets; ``sample_interval`` and
    ``mean_tx_time`` are in seconds.
    """

    w_q: float = 0.002
    max_p: float = 0.1
    min_th: float = 16.0
    max_th: float = 48.0
    buffer_capacity: int = 64
    x: float = 2.0
    sample_interval: float = 0.01
    above_mid_mode: AboveMidMode = AboveMidMode.UNIT_PROB
    ewma_clock: EwmaClock = EwmaClock.SAMPLE
    # transmission time of one packet on the bottleneck, for idle correction
    mean_tx_time: float = 0.0004

    def __post_init__(self) -> None:
        if not 0.0 < self.w_q <= 1.0:
            raise ValueError(f"w_q must be in (0, 1], got {self.w_q}")
        if not 0.0 < self.max_p <= 1.0:
            raise ValueError(f"max_p must be in (0, 1], got {self.max_p}")
        if not 0.0 < self.min_th < self.max_th:
            raise ValueError(
                f"need 0 < min_th < max_th, got min_th={self.min_th} max_th={self.max_th}"
            )
        if self.buffer_capacity < 1:
            raise ValueError(f"buffer_capacity must be >= 1, got {self.buffer_capacity}")
        if self.min_th >= self.buffer_capacity:
            raise ValueError(
                f"min_th={self.min_th} must be below buffer_capacity={self.buffer_capacity}"
            )
        if not 1.0 <= self.x <= 3.0:
            raise ValueError(f"x must be in [1, 3], got {self.x}")
        if self.sample_interval <= 0.0:
            raise ValueError(f"sample_interval must be positive, got {self.sample_interval}")
        if self.mean_tx_time <= 0.0:
            raise ValueError(f"mean_tx_time must be positive, got {self.mean_tx_time}")
        object.__setattr__(self, "above_mid_mode", AboveMidMode(self.above_mid_mode))
        object.__setattr__(self, "ewma_clock", EwmaClock(self.ewma_clock))


@dataclass(frozen=True, slots=True)
class Verdict:
    """Outcome for one arriving packet.

    ``p_applied`` is the probability fed to the Bernoulli trial: 0 for a
    forced enqueue, 1 for a forced drop. ``overflow`` marks drops caused by
    a full buffer rather than by the AQM. ``bucket`` is set only by
    multi-queue disciplines.
    """

    action: Action
    p_applied: float
    overflow: bool = False
    bucket: int | None = None

    @property
    def dropped(self) -> bool:
        return self.action is Action.DROP


ENQUEUE_FREE = Verdict(Action.ENQUEUE, 0.0)
FORCED_DROP = Verdict(Action.DROP, 1.0)
OVERFLOW_DROP = Verdict(Action.DROP, 1.0, overflow=True)


def overflow_guard(verdict: Verdict, q: int, capacity: int) -> Verdict:
    """Turn an ENQUEUE into an overflow DROP when the buffer is full."""
    if verdict.action is Action.ENQUEUE and q >= capacity:
        return OVERFLOW_DROP
    return verdict
