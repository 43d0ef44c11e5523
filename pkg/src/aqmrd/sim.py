"""Packet-level discrete-event simulation of a single-bottleneck dumbbell.

N greedy TCP-like sources sit behind fast access links with individual
propagation delays; all of them feed one router whose outgoing link is the
bottleneck and whose buffer is governed by a queue discipline. A sink
acknowledges every packet. Losses are reported back to the sender by an
explicit notification one base RTT after the drop.

Events live in a heap as ``(time, seq, kind, payload)`` tuples; ``seq`` is
a global insertion counter, so ties resolve in scheduling order and a run
is fully determined by its configuration and seed.
"""

from __future__ import annotations

import enum
import heapq
import math
import random
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

from .aqm.controllers import RemParams
from .aqm.disciplines import Discipline, make_discipline
from .aqm.types import GatewayParams
from .metrics import RunMetrics


class InvariantError(RuntimeError):
    """A run broke one of the simulator's accounting invariants."""


class EventKind(enum.IntEnum):
    PACKET_ARRIVAL_AT_ROUTER = 0
    DEQUEUE_COMPLETE = 1
    ACK_ARRIVAL_AT_SOURCE = 2
    LOSS_NOTIFICATION = 3
    SAMPLE_TICK = 4
    TIMER = 5
    FLOW_START = 6


_ARRIVAL = int(EventKind.PACKET_ARRIVAL_AT_ROUTER)
_DEQUEUE = int(EventKind.DEQUEUE_COMPLETE)
_ACK = int(EventKind.ACK_ARRIVAL_AT_SOURCE)
_LOSS = int(EventKind.LOSS_NOTIFICATION)
_SAMPLE = int(EventKind.SAMPLE_TICK)
_TIMER = int(EventKind.TIMER)
_START = int(EventKind.FLOW_START)


@dataclass(frozen=True)
class LinkParams:
    bottleneck_bandwidth: float = 20e6
    bottleneck_prop_delay: float = 0.033
    access_bandwidth: float = 100e6
    access_delay_min: float = 0.004
    access_delay_max: float = 0.010
    packet_size: int = 1000

    def __post_init__(self) -> None:
        for name in ("bottleneck_bandwidth", "bottleneck_prop_delay", "access_bandwidth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.access_delay_min <= self.access_delay_max:
            raise ValueError("need 0 <= access_delay_min <= access_delay_max")
        if self.packet_size <= 0:
            raise ValueError("packet_size must be positive")

    @property
    def tx_time(self) -> float:
        return self.packet_size * 8.0 / self.bottleneck_bandwidth

    def bdp_packets(self) -> float:
        """Round-trip delay-bandwidth product, at the mean access delay."""
        mean_access = 0.5 * (self.access_delay_min + self.access_delay_max)
        rtt = 2.0 * (mean_access + self.bottleneck_prop_delay)
        return self.bottleneck_bandwidth * rtt / (8.0 * self.packet_size)


@dataclass(frozen=True)
class TcpParams:
    initial_cwnd: float = 1.0
    initial_ssthresh: float = 200.0
    max_window: float = 200.0
    # sources start uniformly at random in [0, start_jitter]
    start_jitter: float = 1.0


@dataclass(slots=True)
class FlowState:
    flow_id: int
    access_delay: float
    cwnd: float = 1.0
    ssthresh: float = 200.0
    in_flight: int = 0
    next_seq: int = 0
    highest_acked: int = -1
    recovery_until_seq: int = -1
    max_window: float = 200.0
    access_free_at: float = 0.0


class Packet:
    __slots__ = ("flow_id", "seq", "size", "birth_time", "enqueue_time")

    def __init__(self, flow_id: int, seq: int, size: int, birth_time: float):
        self.flow_id = flow_id
        self.seq = seq
        self.size = size
        self.birth_time = birth_time
        self.enqueue_time = math.nan


def tcp_on_ack(flow: FlowState) -> FlowState:
    """Window growth for one newly acknowledged packet (in place)."""
    if flow.cwnd < flow.ssthresh:
        flow.cwnd += 1.0
    else:
        flow.cwnd += 1.0 / flow.cwnd
    if flow.cwnd > flow.max_window:
        flow.cwnd = flow.max_window
    return flow


def tcp_on_loss(flow: FlowState, lost_seq: int) -> FlowState:
    """Halve the window, at most once per window of data (in place).

    ``recovery_until_seq`` records the last sequence number sent before the
    most recent decrease; losses at or below it belong to that window.
    """
    if lost_seq > flow.recovery_until_seq:
        flow.ssthresh = max(flow.cwnd / 2.0, 2.0)
        flow.cwnd = flow.ssthresh
        flow.recovery_until_seq = flow.next_seq - 1
    return flow


class Simulation:
    """One dumbbell run. Build with :func:`build_dumbbell`, then call :meth:`run`."""

    def __init__(
        self,
        n_sources: int,
        seed: int,
        link: LinkParams,
        gw: GatewayParams,
        discipline: Discipline,
        tcp: TcpParams,
        *,
        trace: bool = False,
        record_packets: bool = False,
    ):
        self.n_sources = n_sources
        self.seed = seed
        self.link = link
        self.gw = gw
        self.disc = discipline
        self.tcp = tcp
        self.tx_time = link.tx_time
        self.access_tx = link.packet_size * 8.0 / link.access_bandwidth

        topo_rng = random.Random(f"topology:{seed}")
        self.flows = [
            FlowState(
                flow_id=i,
                access_delay=topo_rng.uniform(link.access_delay_min, link.access_delay_max),
                cwnd=tcp.initial_cwnd,
                ssthresh=tcp.initial_ssthresh,
                max_window=tcp.max_window,
            )
            for i in range(n_sources)
        ]
        self.start_times = [topo_rng.uniform(0.0, tcp.start_jitter) for _ in range(n_sources)]
        self._aqm_rng = random.Random(f"aqm:{seed}")

        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self.queue: deque = deque()
        self.in_service: Optional[Packet] = None
        self.metrics = RunMetrics(
            packet_size=link.packet_size,
            bandwidth=link.bottleneck_bandwidth,
            delays=[] if record_packets else None,
            trace=[] if trace else None,
        )
        # (flow_id, seq, birth, enqueue, dequeue_done, ack_time) per delivered packet
        self.packet_log: Optional[list] = [] if record_packets else None
        # (time, q, overflow) per drop
        self.drop_log: Optional[list] = [] if record_packets else None
        self._ran = False

    # -- event plumbing -------------------------------------------------

    def _schedule(self, time: float, kind: int, payload=None) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, kind, payload))

    def queue_length(self) -> int:
        if self.disc.owns_queue:
            return len(self.disc)
        return len(self.queue)

    # -- sources --------------------------------------------------------

    def _try_send(self, flow: FlowState) -> None:
        now = self.now
        m = self.metrics
        while flow.in_flight < int(flow.cwnd):
            pkt = Packet(flow.flow_id, flow.next_seq, self.link.packet_size, now)
            flow.next_seq += 1
            flow.in_flight += 1
            m.sent += 1
            depart = max(now, flow.access_free_at) + self.access_tx
            flow.access_free_at = depart
            self._schedule(depart + flow.access_delay, _ARRIVAL, pkt)

    # -- router ---------------------------------------------------------

    def _on_router_arrival(self, pkt: Packet) -> None:
        m = self.metrics
        m.arrivals += 1
        q = self.queue_length()
        verdict = self.disc.on_arrival(q, self._aqm_rng.random(), self.now, pkt.flow_id)
        if verdict.dropped:
            m.drops += 1
            if verdict.overflow:
                m.overflow_drops += 1
            else:
                m.early_drops += 1
            if self.drop_log is not None:
                self.drop_log.append((self.now, q, verdict.overflow))
            flow = self.flows[pkt.flow_id]
            self._schedule(
                self.now + 2.0 * (flow.access_delay + self.link.bottleneck_prop_delay),
                _LOSS,
                pkt,
            )
            return
        pkt.enqueue_time = self.now
        if self.in_service is None:
            # work conservation: an idle server implies an empty queue
            if q:
                raise InvariantError(f"server idle with {q} packets queued")
            self._start_service(pkt)
            return
        if self.disc.owns_queue:
            self.disc.enqueue(pkt, verdict.bucket)
        else:
            self.queue.append(pkt)
        q += 1
        if q > self.gw.buffer_capacity:
            raise InvariantError(f"queue length {q} exceeds capacity {self.gw.buffer_capacity}")
        if q > m.max_q:
            m.max_q = q

    def _pop(self) -> Optional[Packet]:
        if self.disc.owns_queue:
            return self.disc.dequeue()
        return self.queue.popleft() if self.queue else None

    def _start_service(self, pkt: Packet) -> None:
        self.in_service = pkt
        self.metrics.busy_time += self.tx_time
        self._schedule(self.now + self.tx_time, _DEQUEUE, pkt)

    def _on_dequeue_complete(self, pkt: Packet) -> None:
        now = self.now
        self.in_service = None
        self.metrics.record_delivery(pkt.size, now - pkt.enqueue_time)
        flow = self.flows[pkt.flow_id]
        ack_at = now + 2.0 * self.link.bottleneck_prop_delay + flow.access_delay
        self._schedule(ack_at, _ACK, pkt)
        if self.packet_log is not None:
            self.packet_log.append(
                (pkt.flow_id, pkt.seq, pkt.birth_time, pkt.enqueue_time, now, ack_at)
            )
        nxt = self._pop()
        if nxt is not None:
            self._start_service(nxt)
        else:
            self.disc.on_idle(now)

    # -- main loop ------------------------------------------------------

    def run(self, duration: float) -> RunMetrics:
        if duration <= 0:
            raise ValueError(f"duration must be positive, got {duration}")
        if self._ran:
            raise RuntimeError("a Simulation can only be run once")
        self._ran = True
        m = self.metrics
        m.duration = duration

        for flow, t0 in zip(self.flows, self.start_times):
            self._schedule(t0, _START, flow)
        self._schedule(0.0, _SAMPLE, 0)
        if self.disc.timer_interval:
            self._schedule(self.disc.timer_interval, _TIMER, 1)

        heap = self._heap
        pop = heapq.heappop
        disc = self.disc
        flows = self.flows
        dt = self.gw.sample_interval
        while heap and heap[0][0] <= duration:
            t, _, kind, payload = pop(heap)
            self.now = t
            if kind == _ARRIVAL:
                self._on_router_arrival(payload)
            elif kind == _DEQUEUE:
                self._on_dequeue_complete(payload)
            elif kind == _ACK:
                flow = flows[payload.flow_id]
                flow.in_flight -= 1
                if payload.seq > flow.highest_acked:
                    flow.highest_acked = payload.seq
                tcp_on_ack(flow)
                self._try_send(flow)
            elif kind == _LOSS:
                flow = flows[payload.flow_id]
                flow.in_flight -= 1
                tcp_on_loss(flow, payload.seq)
                self._try_send(flow)
            elif kind == _SAMPLE:
                q = self.queue_length()
                disc.on_sample(q, t)
                m.record_sample(t, q, disc.avg, disc.davg, disc.mid_th)
                self._schedule((payload + 1) * dt, _SAMPLE, payload + 1)
            elif kind == _TIMER:
                disc.on_timer(self.queue_length(), t)
                self._schedule((payload + 1) * disc.timer_interval, _TIMER, payload + 1)
            else:
                self._try_send(payload)

        m.in_network = (
            sum(1 for ev in heap if ev[2] == _ARRIVAL)
            + self.queue_length()
            + (self.in_service is not None)
        )
        if m.sent != m.delivered + m.drops + m.in_network:
            raise InvariantError(
                f"packet conservation failed: sent={m.sent} delivered={m.delivered} "
                f"dropped={m.drops} in_network={m.in_network}"
            )
        return m


def build_dumbbell(
    n_sources: int,
    seed: int,
    link: LinkParams | None = None,
    gw: GatewayParams | None = None,
    discipline: str = "aqmrd",
    *,
    tcp: TcpParams | None = None,
    trace: bool = False,
    record_packets: bool = False,
) -> Simulation:
    """Assemble a dumbbell with ``n_sources`` flows and the named discipline."""
    if n_sources < 1:
        raise ValueError(f"n_sources must be >= 1, got {n_sources}")
    link = link or LinkParams()
    gw = gw or GatewayParams()
    tcp = tcp or TcpParams()
    # the idle-period correction needs the real per-packet service time
    if gw.mean_tx_time != link.tx_time:
        gw = replace(gw, mean_tx_time=link.tx_time)
    name = discipline.lower()
    kwargs: dict = {}
    if name == "rem":
        kwargs["rem"] = RemParams(capacity_pps=1.0 / link.tx_time)
    elif name == "sfq":
        kwargs["seed"] = seed
    disc = make_discipline(name, gw, **kwargs)
    return Simulation(
        n_sources, seed, link, gw, disc, tcp, trace=trace, record_packets=record_packets
    )


def run(sim: Simulation, duration: float) -> RunMetrics:
    return sim.run(duration)


__all__ = [
    "EventKind",
    "FlowState",
    "InvariantError",
    "LinkParams",
    "Packet",
    "Simulation",
    "TcpParams",
    "build_dumbbell",
    "run",
    "tcp_on_ack",
    "tcp_on_loss",
]
