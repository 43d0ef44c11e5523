"""Stateful wrappers that a simulator drives.

Each wrapper owns one of the pure state machines and exposes a common
surface: ``on_sample`` every sample tick, ``on_arrival`` per packet,
``on_timer`` every ``timer_interval`` seconds (when set), and ``on_idle``
when the queue drains. Disciplines without an average of their own still
keep one, as a passive monitor, so every run reports the same statistics.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, replace
from typing import Any

from . import aqmrd as _aqmrd
from . import controllers as _ctl
from . import red as _red
from .sfq import SfqState, sfq_on_arrival, sfq_perturb
from .types import EwmaClock, GatewayParams, Verdict


@dataclass(frozen=True, slots=True)
class _Monitor:
    avg: float = 0.0
    davg: float = 0.0
    q_prev: float = 0.0


class Discipline:
    name = ""
    timer_interval: float | None = None
    owns_queue = False

    def __init__(self, params: GatewayParams):
        self.params = params
        self.state: Any = _Monitor()
        self._idle_since: float | None = 0.0
        self._per_arrival = params.ewma_clock is EwmaClock.ARRIVAL

    @property
    def avg(self) -> float:
        return self.state.avg

    @property
    def davg(self) -> float:
        return self.state.davg

    @property
    def mid_th(self) -> float:
        return math.nan

    def _advance(self, q: float) -> None:
        s = self.state
        avg, davg = _aqmrd.ewma_step(s.avg, s.davg, s.q_prev, q, self.params.w_q)
        self.state = replace(s, avg=avg, davg=davg, q_prev=q)

    def on_sample(self, q: int, now: float) -> None:
        if not self._per_arrival:
            self._advance(q)

    def on_arrival(self, q: int, u: float, now: float, flow_id: int = 0) -> Verdict:
        if self._per_arrival:
            if self._idle_since is not None:
                self.state = _red.red_idle_adjust(
                    self.state, now - self._idle_since, self.params.mean_tx_time, self.params.w_q
                )
            self._advance(q)
        self._idle_since = None
        return self._decide(q, u, now, flow_id)

    def _decide(self, q: int, u: float, now: float, flow_id: int) -> Verdict:
        raise NotImplementedError

    def on_timer(self, q: int, now: float) -> None:
        pass

    def on_idle(self, now: float) -> None:
        self._idle_since = now


class DropTail(Discipline):
    name = "droptail"

    def _decide(self, q, u, now, flow_id):
        return _ctl.droptail_on_arrival(q, self.params)


class Aqmrd(Discipline):
    name = "aqmrd"

    def __init__(self, params: GatewayParams):
        super().__init__(params)
        self.state = _aqmrd.initial_state(params)

    @property
    def mid_th(self) -> float:
        return self.state.mid_th

    def _advance(self, q: float) -> None:
        self.state = _aqmrd.update_ewma(self.state, q, self.params)

    def _decide(self, q, u, now, flow_id):
        verdict, self.state = _aqmrd.aqmrd_on_arrival(self.state, q, u, self.params)
        return verdict


class Red(Discipline):
    name = "red"
    _arrival = staticmethod(_red.red_on_arrival)

    def __init__(self, params: GatewayParams):
        super().__init__(params)
        self.state = _red.RedState(max_p=params.max_p)

    def _decide(self, q, u, now, flow_id):
        verdict, self.state = self._arrival(self.state, q, u, now, self.params)
        return verdict


class Tred(Red):
    name = "tred"
    _arrival = staticmethod(_red.tred_on_arrival)


class AdaptiveRed(Red):
    name = "ared"
    _arrival = staticmethod(_red.ared_on_arrival)
    timer_interval = _red.ARED_INTERVAL

    def on_timer(self, q, now):
        self.state = _red.ared_adapt(self.state, now, self.params)


class Rem(Discipline):
    name = "rem"

    def __init__(self, params: GatewayParams, rem: _ctl.RemParams | None = None):
        super().__init__(params)
        self.rem = rem or _ctl.RemParams()
        self.timer_interval = self.rem.update_interval
        self.ctl = _ctl.RemState()

    def _decide(self, q, u, now, flow_id):
        verdict, self.ctl = _ctl.rem_on_arrival(self.ctl, q, u, now, self.params)
        return verdict

    def on_timer(self, q, now):
        self.ctl = _ctl.rem_update(self.ctl, q, self.rem)


class Pi(Discipline):
    name = "pi"

    def __init__(self, params: GatewayParams, pi: _ctl.PiParams | None = None):
        super().__init__(params)
        self.pi = pi or _ctl.PiParams()
        self.timer_interval = 1.0 / self.pi.frequency
        self.ctl = _ctl.PiState()

    def _decide(self, q, u, now, flow_id):
        verdict, self.ctl = _ctl.pi_on_arrival(self.ctl, q, u, now, self.params)
        return verdict

    def on_timer(self, q, now):
        self.ctl = _ctl.pi_update(self.ctl, q, self.pi)


class Sfq(Discipline):
    """Stochastic fair queueing: hashed per-flow buckets served round-robin.

    Unlike the single-FIFO disciplines this one holds the packets itself;
    the simulator calls :meth:`enqueue` after an ENQUEUE verdict and pulls
    from :meth:`dequeue`.
    """

    name = "sfq"
    owns_queue = True

    def __init__(
        self,
        params: GatewayParams,
        n_buckets: int = 16,
        perturb_interval: float = 5.0,
        seed: int = 0,
    ):
        super().__init__(params)
        self.timer_interval = perturb_interval
        self.ctl = SfqState.create(n_buckets, params.buffer_capacity)
        self.queues: list[deque] = [deque() for _ in range(n_buckets)]
        self.cursor = 0
        self._rng = random.Random(f"sfq-salt:{seed}")

    def _decide(self, q, u, now, flow_id):
        return sfq_on_arrival(self.ctl, flow_id, q)

    def enqueue(self, packet: Any, bucket: int) -> None:
        self.queues[bucket].append(packet)
        self.ctl.lengths[bucket] += 1

    def dequeue(self) -> Any | None:
        n = len(self.queues)
        for i in range(n):
            b = (self.cursor + i) % n
            if self.queues[b]:
                self.cursor = (b + 1) % n
                self.ctl.lengths[b] -= 1
                return self.queues[b].popleft()
        return None

    def __len__(self) -> int:
        return sum(self.ctl.lengths)

    def on_timer(self, q, now):
        sfq_perturb(self.ctl, self._rng.getrandbits(32))


DISCIPLINES: dict[str, type[Discipline]] = {
    cls.name: cls for cls in (DropTail, Red, AdaptiveRed, Tred, Rem, Pi, Sfq, Aqmrd)
}


def make_discipline(name: str, params: GatewayParams, **kwargs: Any) -> Discipline:
    try:
        cls = DISCIPLINES[name.lower()]
    except KeyError:
        known = ", ".join(sorted(DISCIPLINES))
        raise ValueError(f"unknown discipline {name!r}; expected one of: {known}") from None
    return cls(params, **kwargs)
