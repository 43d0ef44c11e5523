"""Timer-driven baselines: REM's link price and the PI controller, plus drop-tail."""

from __future__ import annotations

from dataclasses import dataclass

from .types import ENQUEUE_FREE, Action, GatewayParams, Verdict, overflow_guard


@dataclass(frozen=True)
class RemParams:
    gamma: float = 0.001
    alpha: float = 0.1
    phi: float = 1.001
    q_ref: float = 20.0
    update_interval: float = 0.002
    # link capacity in packets per second; the engine fills this in
    capacity_pps: float = 2500.0

    def __post_init__(self) -> None:
        if self.gamma <= 0 or self.alpha <= 0 or self.update_interval <= 0:
            raise ValueError("REM gamma, alpha and update_interval must be positive")
        if self.phi <= 1.0:
            raise ValueError(f"REM phi must exceed 1, got {self.phi}")
        if self.capacity_pps <= 0:
            raise ValueError("REM capacity_pps must be positive")


@dataclass(frozen=True, slots=True)
class RemState:
    price: float = 0.0
    prob: float = 0.0
    # packets admitted to the queue since the last price update
    admitted: int = 0


def rem_update(state: RemState, q: float, rp: RemParams) -> RemState:
    """Advance the link price by the queue mismatch and the rate mismatch."""
    rate_mismatch = state.admitted - rp.capacity_pps * rp.update_interval
    price = max(0.0, state.price + rp.gamma * (rp.alpha * (q - rp.q_ref) + rate_mismatch))
    prob = 1.0 - rp.phi ** (-price)
    return RemState(price, min(max(prob, 0.0), 1.0), 0)


def rem_on_arrival(
    state: RemState, q: int, u: float, now: float, params: GatewayParams
) -> tuple[Verdict, RemState]:
    if u < state.prob:
        return Verdict(Action.DROP, state.prob), state
    verdict = overflow_guard(Verdict(Action.ENQUEUE, state.prob), q, params.buffer_capacity)
    if not verdict.dropped:
        state = RemState(state.price, state.prob, state.admitted + 1)
    return verdict, state


@dataclass(frozen=True)
class PiParams:
    a: float = 1.822e-5
    b: float = 1.816e-5
    q_ref: float = 20.0
    frequency: float = 160.0

    def __post_init__(self) -> None:
        if self.frequency <= 0:
            raise ValueError(f"PI frequency must be positive, got {self.frequency}")


@dataclass(frozen=True, slots=True)
class PiState:
    p: float = 0.0
    q_prev: float | None = None


def pi_update(state: PiState, q: float, pp: PiParams) -> PiState:
    # with no previous sample there is no derivative term to apply
    q_prev = q if state.q_prev is None else state.q_prev
    p = state.p + pp.a * (q - pp.q_ref) - pp.b * (q_prev - pp.q_ref)
    return PiState(min(max(p, 0.0), 1.0), q)


def pi_on_arrival(
    state: PiState, q: int, u: float, now: float, params: GatewayParams
) -> tuple[Verdict, PiState]:
    if u < state.p:
        return Verdict(Action.DROP, state.p), state
    return overflow_guard(Verdict(Action.ENQUEUE, state.p), q, params.buffer_capacity), state


def droptail_on_arrival(q: int, params: GatewayParams) -> Verdict:
    return overflow_guard(ENQUEUE_FREE, q, params.buffer_capacity)
