"""LTE FDD link model: per-TTI proportional-fair RB scheduling, bearer queues, backhaul pipe."""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .packet import Packet
from .sim import RngStream, Simulator

NUM_RBS = 50
TTI_US = 1_000
SUBCARRIERS_PER_RB = 12
SYMBOLS_PER_TTI = 14
OVERHEAD_FACTOR = 0.75
DEFAULT_EWMA_ALPHA = 0.01
AVG_RATE_FLOOR = 1.0  # bits/s
BEARER_CAPACITY_BYTES = 1_000_000
BACKHAUL_DELAY_US = 40_000

# 4-bit CQI efficiencies (bits per resource element) and the SINR needed for each
CQI_EFFICIENCY: tuple[float, ...] = (
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141,
    2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152, 5.5547,
)
CQI_SINR_DB: tuple[float, ...] = (
    -6.7, -4.7, -2.3, 0.2, 2.4, 4.3, 5.9, 8.1,
    10.3, 11.7, 14.1, 16.3, 18.7, 21.0, 22.7,
)
# highest CQI usable on the uplink (16QAM ceiling of common UE categories)
UPLINK_MAX_CQI = 9


@dataclass(frozen=True)
class McsTable:
    efficiency: tuple[float, ...] = CQI_EFFICIENCY
    sinr_db: tuple[float, ...] = CQI_SINR_DB

    def __post_init__(self):
        if len(self.efficiency) != len(self.sinr_db):
            raise ValueError("MCS table columns differ in length")
        if list(self.efficiency) != sorted(self.efficiency) or list(self.sinr_db) != sorted(self.sinr_db):
            raise ValueError("MCS table must be sorted ascending")

    def select(self, sinr: float, max_cqi: int | None = None) -> float:
        """Efficiency of the highest CQI whose threshold ``sinr`` meets; 0 if none."""
        idx = bisect.bisect_right(self.sinr_db, sinr)
        if max_cqi is not None:
            idx = min(idx, max_cqi)
        return self.efficiency[idx - 1] if idx > 0 else 0.0


DEFAULT_MCS = McsTable()


def rb_bits(efficiency: float, table: McsTable | None = DEFAULT_MCS, overhead: float = OVERHEAD_FACTOR) -> float:
    """Bits one RB carries in one TTI at the given spectral efficiency."""
    if efficiency != 0 and table is not None and efficiency not in table.efficiency:
        raise ValueError(f"efficiency {efficiency} is not in the MCS table")
    return SUBCARRIERS_PER_RB * SYMBOLS_PER_TTI * efficiency * overhead


@dataclass
class PfSchedulerState:
    ewma_alpha: float = DEFAULT_EWMA_ALPHA
    avg_rate: dict[int, float] = field(default_factory=dict)
    floor: float = AVG_RATE_FLOOR

    def __post_init__(self):
        if not 0 < self.ewma_alpha < 1:
            raise ValueError("ewma_alpha must lie in (0, 1)")

    def average(self, ue: int) -> float:
        return max(self.avg_rate.get(ue, self.floor), self.floor)

    def decay(self, ttis: int) -> None:
        """Advance ``ttis`` TTIs in which nobody was served."""
        if ttis <= 0:
            return
        factor = (1.0 - self.ewma_alpha) ** ttis
        for ue, avg in self.avg_rate.items():
            self.avg_rate[ue] = max(avg * factor, self.floor)


def tti_schedule(backlog_bits: Mapping[int, float], rates: Mapping[int, float],
                 state: PfSchedulerState, rng: RngStream | None = None,
                 num_rbs: int = NUM_RBS, ues: Iterable[int] | None = None) -> dict[int, int]:
    """Allocate one TTI's RBs and update the PF averages.

    Backlogged UEs are served in descending order of ``rate / avg_rate``, each
    taking as many RBs as its backlog needs until the grid is exhausted.
    ``ues`` lists every UE whose average is updated (defaults to all UEs in
    ``rates``). Returns UE -> RB count for UEs that received RBs.
    """
    tti_s = TTI_US / 1e6
    candidates = []
    for ue, bits in backlog_bits.items():
        r = rates.get(ue, 0.0)
        if bits > 0 and r > 0:
            tie = rng.random() if rng is not None else 0.0
            candidates.append((-(r * num_rbs / tti_s) / state.average(ue), tie, ue))
    candidates.sort()
    alloc: dict[int, int] = {}
    served_bits: dict[int, float] = {}
    free = num_rbs
    for _, _, ue in candidates:
        if free == 0:
            break
        per_rb = rates[ue]
        need = -(-backlog_bits[ue] // per_rb)
        n = int(min(need, free))
        alloc[ue] = n
        served_bits[ue] = min(n * per_rb, backlog_bits[ue])
        free -= n
    alpha = state.ewma_alpha
    for ue in (rates.keys() if ues is None else ues):
        prev = state.avg_rate.get(ue, state.floor)
        state.avg_rate[ue] = max((1 - alpha) * prev + alpha * served_bits.get(ue, 0.0) / tti_s, state.floor)
    return alloc


class LteBearerQueue:
    """Drop-tail FIFO of packets with RLC-style partial service of the head."""

    __slots__ = ("fifo", "byte_count", "capacity", "head_sent_bits", "enqueued", "dequeued", "dropped")

    def __init__(self, capacity: int = BEARER_CAPACITY_BYTES):
        self.fifo: deque[Packet] = deque()
        self.byte_count = 0
        self.capacity = capacity
        self.head_sent_bits = 0.0
        self.enqueued = 0
        self.dequeued = 0
        self.dropped = 0

    def __len__(self) -> int:
        return len(self.fifo)

    def push(self, packet: Packet) -> bool:
        if self.byte_count + packet.size > self.capacity:
            self.dropped += 1
            return False
        self.fifo.append(packet)
        self.byte_count += packet.size
        self.enqueued += 1
        return True

    @property
    def backlog_bits(self) -> float:
        return self.byte_count * 8 - self.head_sent_bits

    def serve(self, bits: float) -> list[Packet]:
        """Consume ``bits`` of service; return packets completed."""
        done = []
        fifo = self.fifo
        budget = bits + self.head_sent_bits
        while fifo:
            need = fifo[0].size * 8
            if budget + 1e-9 < need:
                self.head_sent_bits = budget
                return done
            budget -= need
            pkt = fifo.popleft()
            self.byte_count -= pkt.size
            self.dequeued += 1
            done.append(pkt)
        self.head_sent_bits = 0.0
        return done


class BackhaulPipe:
    """Constant-delay FIFO between the core network and a node."""

    def __init__(self, sim: Simulator, one_way_delay: int = BACKHAUL_DELAY_US):
        if one_way_delay < 0:
            raise ValueError("backhaul delay must be non-negative")
        self.sim = sim
        self.one_way_delay = one_way_delay
        self.in_flight: deque[Packet] = deque()

    def deliver(self, packet: Packet, sink: Callable[[Packet], None]):
        """Schedule ``packet`` to reach ``sink`` exactly ``one_way_delay`` from now."""
        self.in_flight.append(packet)
        return self.sim.schedule_in(self.one_way_delay, self._exit, sink)

    def _exit(self, sink: Callable[[Packet], None]) -> None:
        sink(self.in_flight.popleft())


class LteLink:
    """One direction of one cell: bearer queue per UE, PF scheduler ticking every TTI.

    Packets completed in a TTI reach ``sink`` at the end of that TTI. The TTI
    clock stops while every queue is empty; idle TTIs are folded into the PF
    averages on restart.
    """

    def __init__(self, sim: Simulator, rates: dict[int, float], sink: Callable[[Packet], None],
                 ewma_alpha: float = DEFAULT_EWMA_ALPHA, capacity: int = BEARER_CAPACITY_BYTES,
                 rng: RngStream | None = None, num_rbs: int = NUM_RBS):
        self.sim = sim
        self.rates = dict(rates)
        self.sink = sink
        self.state = PfSchedulerState(ewma_alpha)
        self.queues = {ue: LteBearerQueue(capacity) for ue in sorted(rates)}
        self.rng = rng
        self.num_rbs = num_rbs
        self.in_transit: deque[list[Packet]] = deque()
        self._ticking = False
        self._last_tti = -TTI_US
        self.max_rbs_used = 0
        self.rb_usage = 0
        self.ttis = 0

    def enqueue(self, ue: int, packet: Packet) -> bool:
        ok = self.queues[ue].push(packet)
        if ok and not self._ticking:
            self._ticking = True
            now = self.sim.now
            nxt = -(-now // TTI_US) * TTI_US
            if nxt <= self._last_tti:
                nxt = self._last_tti + TTI_US
            self.state.decay((nxt - self._last_tti) // TTI_US - 1)
            self.sim.schedule(nxt, self._tti)
        return ok

    def _tti(self) -> None:
        self._last_tti = self.sim.now
        self.ttis += 1
        queues = self.queues
        backlog = {ue: q.backlog_bits for ue, q in queues.items() if q.fifo}
        alloc = tti_schedule(backlog, self.rates, self.state, self.rng, self.num_rbs, queues.keys())
        used = sum(alloc.values())
        self.rb_usage += used
        if used > self.max_rbs_used:
            self.max_rbs_used = used
        done: list[Packet] = []
        for ue, n in alloc.items():
            done.extend(queues[ue].serve(n * self.rates[ue]))
        if done:
            self.in_transit.append(done)
            self.sim.schedule_in(TTI_US, self._finish)
        if any(q.fifo for q in queues.values()):
            self.sim.schedule_in(TTI_US, self._tti)
        else:
            self._ticking = False

    def _finish(self) -> None:
        for pkt in self.in_transit.popleft():
            self.sink(pkt)

    def resident(self) -> int:
        return sum(len(q) for q in self.queues.values()) + sum(len(b) for b in self.in_transit)

    def dropped(self) -> int:
        return sum(q.dropped for q in self.queues.values())
