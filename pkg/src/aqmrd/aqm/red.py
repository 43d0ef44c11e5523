"""RED and its linear/piecewise relatives: Adaptive-RED and three-section RED."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, TypeVar

from .aqmrd import effective_drop_prob
from .types import ENQUEUE_FREE, Action, GatewayParams, Verdict, overflow_guard

# Adaptive-RED tuning (Floyd, Gummadi & Shenker 2001)
ARED_INTERVAL = 0.5
ARED_BETA = 0.9
ARED_MAX_P_BOUNDS = (0.01, 0.5)


@dataclass(frozen=True, slots=True)
class RedState:
    avg: float = 0.0
    davg: float = 0.0
    q_prev: float = 0.0
    count: int = -1
    # live max_p: fixed for RED/TRED, adapted for Adaptive-RED
    max_p: float = 0.1
    last_adapt: float = 0.0


S = TypeVar("S")


def red_idle_adjust(state: S, idle_duration: float, mean_tx_time: float, w_q: float) -> S:
    """Decay avg as if ``m`` empty-queue samples had been seen while idle.

    ``m = floor(idle_duration / mean_tx_time)``; davg is left alone.
    """
    m = math.floor(idle_duration / mean_tx_time) if idle_duration > 0.0 else 0
    if m <= 0:
        return state
    return replace(state, avg=state.avg * (1.0 - w_q) ** m)


def red_base_prob(avg: float, min_th: float, max_th: float, max_p: float) -> float:
    if avg < min_th:
        return 0.0
    if avg >= max_th:
        return 1.0
    return max_p * (avg - min_th) / (max_th - min_th)


def tred_base_prob(avg: float, min_th: float, max_th: float, max_p: float) -> float:
    """Three-section ramp over [min_th, max_th).

    Quadratic and gentle in the lower third, linear (RED's ramp) in the middle
    third, quadratic and steep in the upper third so that it reaches 1 at
    max_th. The pieces join continuously at the section boundaries.
    """
    if avg < min_th:
        return 0.0
    if avg >= max_th:
        return 1.0
    r = (avg - min_th) / (max_th - min_th)
    if r < 1.0 / 3.0:
        return max_p * 3.0 * r * r
    if r < 2.0 / 3.0:
        return max_p * r
    base = max_p * 2.0 / 3.0
    s = 3.0 * r - 2.0
    return base + (1.0 - base) * s * s


def _ramped_on_arrival(
    state: RedState,
    q: int,
    u: float,
    params: GatewayParams,
    ramp: Callable[[float, float, float, float], float],
    max_p: float,
) -> tuple[Verdict, RedState]:
    avg = state.avg
    if avg < params.min_th:
        verdict = ENQUEUE_FREE
        count = -1
    elif avg < params.max_th:
        p_b = ramp(avg, params.min_th, params.max_th, max_p)
        p_a = effective_drop_prob(p_b, state.count)
        if u < p_a:
            verdict = Verdict(Action.DROP, p_a)
            count = 0
        else:
            verdict = Verdict(Action.ENQUEUE, p_a)
            count = max(state.count, 0) + 1
    else:
        verdict = Verdict(Action.DROP, 1.0)
        count = 0
    if count != state.count:
        state = replace(state, count=count)
    return overflow_guard(verdict, q, params.buffer_capacity), state


def red_on_arrival(
    state: RedState, q: int, u: float, now: float, params: GatewayParams
) -> tuple[Verdict, RedState]:
    return _ramped_on_arrival(state, q, u, params, red_base_prob, params.max_p)


def tred_on_arrival(
    state: RedState, q: int, u: float, now: float, params: GatewayParams
) -> tuple[Verdict, RedState]:
    return _ramped_on_arrival(state, q, u, params, tred_base_prob, params.max_p)


def ared_on_arrival(
    state: RedState, q: int, u: float, now: float, params: GatewayParams
) -> tuple[Verdict, RedState]:
    return _ramped_on_arrival(state, q, u, params, red_base_prob, state.max_p)


def ared_target(params: GatewayParams) -> tuple[float, float]:
    span = params.max_th - params.min_th
    return params.min_th + 0.4 * span, params.min_th + 0.6 * span


def ared_adapt(state: RedState, now: float, params: GatewayParams) -> RedState:
    """AIMD step on max_p toward the target avg band; run every 0.5 s."""
    lo, hi = ared_target(params)
    max_p = state.max_p
    p_lo, p_hi = ARED_MAX_P_BOUNDS
    if state.avg > hi and max_p <= p_hi:
        max_p = min(max_p + min(0.01, max_p / 4.0), p_hi)
    elif state.avg < lo and max_p >= p_lo:
        max_p = max(max_p * ARED_BETA, p_lo)
    return replace(state, max_p=max_p, last_adapt=now)
