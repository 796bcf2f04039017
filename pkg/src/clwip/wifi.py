"""IEEE 802.11a DCF: slotted CSMA/CA contention, binary exponential backoff, ACKs, AARF."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

from .packet import Packet
from .radio import DEFAULT_ERROR_MODEL, DOT11A_BITS_PER_SYMBOL, AarfState, ErrorModel, per
from .sim import RngStream, Simulator

WIFI_QUEUE_CAPACITY = 400
LLC_SNAP_BYTES = 8


@dataclass(frozen=True)
class Dot11aTiming:
    slot: int = 9
    sifs: int = 16
    difs: int = 34
    preamble: int = 20
    symbol: int = 4
    service_bits: int = 16
    tail_bits: int = 6
    mac_header: int = 24
    fcs: int = 4
    ack_bytes: int = 14
    control_rate: int = 24
    cw_min: int = 15
    cw_max: int = 1023
    retry_limit: int = 7

    def __post_init__(self):
        if self.difs != self.sifs + 2 * self.slot:
            raise ValueError("DIFS must equal SIFS + 2 slots")
        for cw in (self.cw_min, self.cw_max):
            if cw < 1 or (cw + 1) & cw:
                raise ValueError("contention windows must be 2^k - 1")

    @property
    def ack_airtime(self) -> int:
        bits = self.service_bits + 8 * self.ack_bytes + self.tail_bits
        return self.preamble + math.ceil(bits / DOT11A_BITS_PER_SYMBOL[self.control_rate]) * self.symbol

    @property
    def ack_timeout(self) -> int:
        return self.sifs + self.ack_airtime + self.slot


DOT11A = Dot11aTiming()


def frame_airtime(payload_bytes: int, rate: int, timing: Dot11aTiming = DOT11A) -> int:
    """Duration in µs of a data frame carrying ``payload_bytes`` of MSDU at ``rate`` Mbps."""
    if payload_bytes <= 0:
        raise ValueError("payload must be positive")
    try:
        bps = DOT11A_BITS_PER_SYMBOL[rate]
    except KeyError:
        raise ValueError(f"unknown 802.11a rate {rate}") from None
    bits = timing.service_bits + 8 * (timing.mac_header + payload_bytes + timing.fcs) + timing.tail_bits
    return timing.preamble + math.ceil(bits / bps) * timing.symbol


def msdu_bytes(packet: Packet) -> int:
    return packet.size + LLC_SNAP_BYTES


class WifiQueue:
    __slots__ = ("fifo", "capacity", "accepted", "dropped", "delivered", "retry_dropped")

    def __init__(self, capacity: int = WIFI_QUEUE_CAPACITY):
        self.fifo: deque[Packet] = deque()
        self.capacity = capacity
        self.accepted = 0
        self.dropped = 0
        self.delivered = 0
        self.retry_dropped = 0

    def __len__(self) -> int:
        return len(self.fifo)

    def enqueue(self, packet: Packet) -> bool:
        if len(self.fifo) >= self.capacity:
            self.dropped += 1
            return False
        self.fifo.append(packet)
        self.accepted += 1
        return True

    def dequeue(self) -> Packet:
        return self.fifo.popleft()


class DcfPhase(Enum):
    IDLE = "idle"
    DEFERRING = "deferring"
    BACKING_OFF = "backing_off"
    TRANSMITTING = "transmitting"
    AWAITING_ACK = "awaiting_ack"


class DcfState:
    __slots__ = ("cw", "backoff_slots", "retry_count", "phase", "timing")

    def __init__(self, timing: Dot11aTiming = DOT11A):
        self.timing = timing
        self.cw = timing.cw_min
        self.backoff_slots = 0
        self.retry_count = 0
        self.phase = DcfPhase.IDLE

    def draw_backoff(self, rng: RngStream) -> None:
        self.backoff_slots = rng.randint(0, self.cw)
        self.phase = DcfPhase.BACKING_OFF

    def on_failure(self) -> bool:
        """Record a failed attempt; True when the frame must be dropped."""
        self.cw = min(2 * self.cw + 1, self.timing.cw_max)
        self.retry_count += 1
        if self.retry_count > self.timing.retry_limit:
            self.reset()
            return True
        return False

    def reset(self) -> None:
        self.cw = self.timing.cw_min
        self.retry_count = 0
        self.phase = DcfPhase.IDLE


def dcf_contend(stations: Sequence[DcfState], rng: RngStream) -> tuple[str, list[int]]:
    """Advance one slot among backlogged stations.

    Returns ``("idle", [])`` when nobody's counter is at zero (all decrement),
    ``("success", [i])`` when exactly one is, ``("collision", idx)`` otherwise;
    colliding stations double their window and redraw.
    """
    ready = [i for i, s in enumerate(stations) if s.backoff_slots == 0]
    if not ready:
        for s in stations:
            s.backoff_slots -= 1
        return "idle", []
    if len(ready) == 1:
        stations[ready[0]].phase = DcfPhase.TRANSMITTING
        return "success", ready
    for i in ready:
        s = stations[i]
        s.cw = min(2 * s.cw + 1, s.timing.cw_max)
        s.draw_backoff(rng)
    return "collision", ready


class WifiStation:
    """An AP or UE radio: transmit queue, DCF state, per-peer AARF state and SNR."""

    def __init__(self, name: str, sink: Callable[[Packet], None], peer_of: Callable[[Packet], int],
                 snr_db: dict[int, float], timing: Dot11aTiming = DOT11A,
                 queue_capacity: int = WIFI_QUEUE_CAPACITY):
        self.name = name
        self.sink = sink
        self.peer_of = peer_of
        self.snr_db = snr_db
        self.queue = WifiQueue(queue_capacity)
        self.dcf = DcfState(timing)
        self.aarf: dict[int, AarfState] = {}
        self.domain: ContentionDomain | None = None
        self.contending = False
        self.tx_success = 0
        self.tx_failed = 0
        self.goodput_bytes = 0

    def enqueue(self, packet: Packet) -> bool:
        ok = self.queue.enqueue(packet)
        if ok and not self.contending:
            self.domain.join(self)
        return ok

    def rate_state(self, peer: int) -> AarfState:
        st = self.aarf.get(peer)
        if st is None:
            st = self.aarf[peer] = AarfState()
        return st


class ContentionDomain:
    """All stations that hear each other share one medium.

    Time advances from one backoff expiry to the next rather than slot by
    slot: after every busy period the medium idles for DIFS, then the station
    with the smallest remaining counter fires after that many slots and every
    other contender's counter is reduced by the same amount.
    """

    def __init__(self, sim: Simulator, backoff_rng: RngStream, error_rng: RngStream,
                 timing: Dot11aTiming = DOT11A, error_model: ErrorModel = DEFAULT_ERROR_MODEL):
        self.sim = sim
        self.rng = backoff_rng
        self.error_rng = error_rng
        self.timing = timing
        self.error_model = error_model
        self.stations: list[WifiStation] = []
        self.contenders: list[WifiStation] = []
        self.busy = False
        self.countdown_start = 0
        self._expiry = None
        self._per_cache: dict[tuple[int, float, int], float] = {}
        self.collisions = 0
        self.successes = 0
        self.failures = 0
        self.busy_time = 0
        self.tx_log: list[tuple[int, int, bool]] | None = None

    def add(self, station: WifiStation) -> None:
        station.domain = self
        self.stations.append(station)

    def join(self, station: WifiStation) -> None:
        station.contending = True
        station.dcf.draw_backoff(self.rng)
        if not self.busy:
            self._sync()
            if not self.contenders and self.sim.now > self.countdown_start:
                # medium has been idle: a fresh DIFS starts now
                self.countdown_start = self.sim.now + self.timing.difs
            elif self.sim.now > self.countdown_start:
                # joined part-way through a slot: count from the next boundary
                station.dcf.backoff_slots += 1
        self.contenders.append(station)
        if not self.busy:
            self._reschedule()

    def _sync(self) -> None:
        now = self.sim.now
        if now <= self.countdown_start or not self.contenders:
            return
        k = (now - self.countdown_start) // self.timing.slot
        if k:
            for st in self.contenders:
                st.dcf.backoff_slots -= k
            self.countdown_start += k * self.timing.slot

    def _reschedule(self) -> None:
        if self._expiry is not None:
            self._expiry.cancel()
            self._expiry = None
        if not self.contenders:
            return
        m = min(st.dcf.backoff_slots for st in self.contenders)
        self._expiry = self.sim.schedule(self.countdown_start + m * self.timing.slot, self._expire)

    def _per(self, rate: int, snr: float, bits: int) -> float:
        key = (rate, snr, bits)
        p = self._per_cache.get(key)
        if p is None:
            p = self._per_cache[key] = per(rate, snr, bits, self.error_model)
        return p

    def _expire(self) -> None:
        self._expiry = None
        self._sync()
        winners = [st for st in self.contenders if st.dcf.backoff_slots <= 0]
        self.contenders = [st for st in self.contenders if st.dcf.backoff_slots > 0]
        t = self.timing
        now = self.sim.now
        self.busy = True
        if len(winners) == 1:
            st = winners[0]
            pkt = st.queue.fifo[0]
            peer = st.peer_of(pkt)
            rate = st.rate_state(peer).rate
            nbytes = msdu_bytes(pkt)
            air = frame_airtime(nbytes, rate, t)
            p_err = self._per(rate, st.snr_db[peer], 8 * (t.mac_header + nbytes + t.fcs))
            ok = p_err <= 0.0 or self.error_rng.random() >= p_err
            end = now + air + (t.sifs + t.ack_airtime if ok else t.ack_timeout)
            if self.tx_log is not None:
                self.tx_log.append((now, now + air, ok))
            st.dcf.phase = DcfPhase.AWAITING_ACK
            outcome = [(st, ok)]
        else:
            self.collisions += 1
            longest = 0
            for st in winners:
                pkt = st.queue.fifo[0]
                air = frame_airtime(msdu_bytes(pkt), st.rate_state(st.peer_of(pkt)).rate, t)
                longest = max(longest, air)
            end = now + longest + t.ack_timeout
            if self.tx_log is not None:
                self.tx_log.append((now, now + longest, False))
            outcome = [(st, False) for st in winners]
        self.busy_time += end - now
        self.sim.schedule(end, self._tx_end, outcome)

    def _tx_end(self, outcome: list[tuple[WifiStation, bool]]) -> None:
        now = self.sim.now
        collided = len(outcome) > 1
        for st, ok in outcome:
            pkt = st.queue.fifo[0]
            if not collided:
                # rate control reacts to frame errors only; collisions just back off
                st.rate_state(st.peer_of(pkt)).update(ok)
            if ok:
                self.successes += 1
                st.tx_success += 1
                st.dcf.reset()
                st.queue.dequeue()
                st.queue.delivered += 1
                st.goodput_bytes += pkt.payload
                st.sink(pkt)
            else:
                self.failures += 1
                st.tx_failed += 1
                if st.dcf.on_failure():
                    st.queue.dequeue()
                    st.queue.retry_dropped += 1
            if st.queue.fifo:
                st.dcf.draw_backoff(self.rng)
                self.contenders.append(st)
            else:
                st.contending = False
                st.dcf.phase = DcfPhase.IDLE
        self.busy = False
        self.countdown_start = now + self.timing.difs
        self._reschedule()


def saturation_goodput(n_stations: int, payload_bytes: int = 1470, duration_s: float = 10.0,
                       seed: int = 1, snr_db: float = 40.0, ip_overhead: int = 28,
                       timing: Dot11aTiming = DOT11A) -> tuple[float, list[float]]:
    """Aggregate and per-station goodput (bits/s) of ``n_stations`` always-backlogged senders."""
    from .packet import FiveTuple
    from .sim import Stream, seconds

    sim = Simulator(seed)
    dom = ContentionDomain(sim, sim.rng(Stream.WIFI_BACKOFF), sim.rng(Stream.CHANNEL_ERROR), timing)
    flow = FiveTuple("0.0.0.0", "0.0.0.1", 1, 1, "UDP")
    counter = [0]

    def make() -> Packet:
        counter[0] += 1
        return Packet(counter[0], flow, 0, payload_bytes + ip_overhead, payload_bytes, 0, True, sim.now)

    stations = []
    for i in range(n_stations):
        st = WifiStation(f"sta{i}", lambda p: None, lambda p: 0, {0: snr_db}, timing)

        def refill(p, st=st):
            st.queue.enqueue(make())

        st.sink = refill
        dom.add(st)
        stations.append(st)
    for st in stations:
        while len(st.queue) < st.queue.capacity:
            st.queue.enqueue(make())
        dom.join(st)
    sim.run_until(seconds(duration_s))
    per_sta = [st.goodput_bytes * 8 / duration_s for st in stations]
    return sum(per_sta), per_sta
