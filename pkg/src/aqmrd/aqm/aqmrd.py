"""AQMRD: RED driven by the average queue size *and* its rate of change.

Every function here is pure: it takes a state and returns a fresh one.
"""

from __future__ import annotations

from dataclasses import dataclass

from .types import (
    ENQUEUE_FREE,
    FORCED_DROP,
    AboveMidMode,
    Action,
    GatewayParams,
    Verdict,
    overflow_guard,
)


@dataclass(frozen=True, slots=True)
class AqmrdState:
    avg: float = 0.0
    davg: float = 0.0
    q_prev: float = 0.0
    mid_th: float = 32.0
    count: int = -1


def ewma_step(avg: float, davg: float, q_prev: float, q: float, w_q: float) -> tuple[float, float]:
    """One tick of the queue average and of the averaged queue increment."""
    keep = 1.0 - w_q
    return keep * avg + w_q * q, keep * davg + w_q * (q - q_prev)


def update_ewma(state: AqmrdState, q: float, params: GatewayParams) -> AqmrdState:
    avg, davg = ewma_step(state.avg, state.davg, state.q_prev, q, params.w_q)
    return AqmrdState(avg, davg, q, state.mid_th, state.count)


def init_mid_th(params: GatewayParams) -> float:
    """Starting mid_th: ``x * min_th``, never above max_th."""
    if not 1.0 <= params.x <= 3.0:
        raise ValueError(f"x must be in [1, 3], got {params.x}")
    return min(params.x * params.min_th, params.max_th)


def initial_state(params: GatewayParams) -> AqmrdState:
    return AqmrdState(mid_th=init_mid_th(params))


def adapt_mid_th(state: AqmrdState, params: GatewayParams) -> AqmrdState:
    """Step mid_th one packet toward min_th on a rising queue, toward max_th on a falling one."""
    mid = state.mid_th
    if state.davg < 0.0:
        mid += 1.0
    elif state.davg > 0.0:
        mid -= 1.0
    mid = min(max(mid, params.min_th), params.max_th)
    return AqmrdState(state.avg, state.davg, state.q_prev, mid, state.count)


def _ramp(avg: float, lo: float, hi: float, max_p: float) -> float:
    span = hi - lo
    if span <= 0.0:
        return max_p
    return max_p * (avg - lo) / span


def base_drop_prob(state: AqmrdState, params: GatewayParams) -> float:
    avg = state.avg
    min_th, max_th = params.min_th, params.max_th
    if avg < min_th:
        return 0.0
    if state.davg > 0.0:
        mid_th = state.mid_th
        if avg < mid_th:
            p = _ramp(avg, min_th, mid_th, params.max_p)
        elif params.above_mid_mode is AboveMidMode.UNIT_PROB or avg >= max_th:
            p = 1.0
        else:
            p = _ramp(avg, min_th, max_th, params.max_p)
    elif avg < max_th:
        p = _ramp(avg, min_th, max_th, params.max_p)
    else:
        p = 1.0
    return min(max(p, 0.0), 1.0)


def effective_drop_prob(p_b: float, count: int) -> float:
    """Spread drops evenly: ``p_b / (1 - count * p_b)``, saturating at 1."""
    scaled = max(count, 0) * p_b
    if scaled >= 1.0:
        return 1.0
    return min(max(p_b / (1.0 - scaled), 0.0), 1.0)


def aqmrd_on_arrival(
    state: AqmrdState, q: int, u: float, params: GatewayParams
) -> tuple[Verdict, AqmrdState]:
    """Decide the fate of one arriving packet.

    ``q`` is the current queue occupancy and ``u`` a uniform draw in [0, 1).
    ``count`` holds the number of in-band arrivals since the last drop; it is
    read before the current arrival is added, so consecutive drops are spaced
    uniformly.
    """
    avg = state.avg
    if avg < params.min_th:
        verdict = ENQUEUE_FREE
        state = AqmrdState(avg, state.davg, state.q_prev, state.mid_th, -1)
    elif avg < params.max_th:
        state = adapt_mid_th(state, params)
        p_b = base_drop_prob(state, params)
        p_a = effective_drop_prob(p_b, state.count)
        if u < p_a:
            verdict = Verdict(Action.DROP, p_a)
            count = 0
        else:
            verdict = Verdict(Action.ENQUEUE, p_a)
            count = max(state.count, 0) + 1
        state = AqmrdState(avg, state.davg, state.q_prev, state.mid_th, count)
    else:
        verdict = FORCED_DROP
        state = AqmrdState(avg, state.davg, state.q_prev, state.mid_th, -1)
    return overflow_guard(verdict, q, params.buffer_capacity), state
