"""Endpoint behaviour: Reno-style TCP, UDP constant bit rate, and application workloads."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Sequence

from .sim import EventHandle, RngStream, Simulator, ms, seconds

MSS = 1460
INITIAL_CWND_SEGMENTS = 2
INITIAL_RTO_US = seconds(1.0)
MIN_RTO_US = ms(200)
MAX_RTO_US = seconds(60.0)
DUPACK_THRESHOLD = 3


class TcpPhase(str, Enum):
    SLOW_START = "slow_start"
    CONGESTION_AVOIDANCE = "congestion_avoidance"
    FAST_RECOVERY = "fast_recovery"


@dataclass
class TcpState:
    """Sender congestion state; sequence numbers count whole segments."""

    mss: int = MSS
    cwnd: float = INITIAL_CWND_SEGMENTS * MSS
    ssthresh: float = float("inf")
    next_seq: int = 0
    highest_acked: int = -1  # last segment covered by a cumulative ACK
    dupack_count: int = 0
    rto: int = INITIAL_RTO_US
    srtt: float | None = None
    rttvar: float | None = None
    phase: TcpPhase = TcpPhase.SLOW_START
    recover: int = -1  # highest segment sent when the last RTO fired

    @property
    def outstanding(self) -> int:
        return self.next_seq - self.highest_acked - 1


def tcp_on_ack(state: TcpState, ack_seq: int) -> tuple[TcpState, int | None]:
    """Process a cumulative ACK naming ``ack_seq`` as the next expected segment.

    Returns the new state and the segment to retransmit, if any.
    """
    s = replace(state)
    acked = ack_seq - 1
    mss = s.mss
    if acked > s.highest_acked:
        s.highest_acked = acked
        s.dupack_count = 0
        if s.phase is TcpPhase.FAST_RECOVERY:
            s.cwnd = s.ssthresh
            s.phase = TcpPhase.CONGESTION_AVOIDANCE
        elif s.cwnd < s.ssthresh:
            s.cwnd += mss
            if s.cwnd >= s.ssthresh:
                s.phase = TcpPhase.CONGESTION_AVOIDANCE
        else:
            s.cwnd += mss * mss / s.cwnd
            s.phase = TcpPhase.CONGESTION_AVOIDANCE
        return s, None
    if acked < s.highest_acked or s.outstanding <= 0:
        return s, None
    if s.phase is TcpPhase.FAST_RECOVERY:
        # window inflation: each further duplicate means one segment left the network
        s.cwnd += mss
        return s, None
    s.dupack_count += 1
    if s.dupack_count == DUPACK_THRESHOLD and s.highest_acked >= s.recover:
        # below ``recover`` the duplicates echo go-back-N resends, not a loss
        s.ssthresh = max(s.cwnd / 2, 2 * mss)
        s.cwnd = s.ssthresh
        s.phase = TcpPhase.FAST_RECOVERY
        return s, s.highest_acked + 1
    return s, None


def tcp_on_timeout(state: TcpState) -> TcpState:
    s = replace(state)
    if s.outstanding <= 0:
        return s
    s.ssthresh = max(s.cwnd / 2, 2 * s.mss)
    s.cwnd = s.mss
    s.phase = TcpPhase.SLOW_START
    s.dupack_count = 0
    s.recover = s.next_seq - 1
    s.rto = min(2 * s.rto, MAX_RTO_US)
    return s


def update_rtt(state: TcpState, sample_us: float) -> None:
    """RFC 6298 smoothing; sets ``rto`` from the new estimate."""
    if state.srtt is None:
        state.srtt = sample_us
        state.rttvar = sample_us / 2
    else:
        state.rttvar = 0.75 * state.rttvar + 0.25 * abs(state.srtt - sample_us)
        state.srtt = 0.875 * state.srtt + 0.125 * sample_us
    state.rto = int(min(max(state.srtt + 4 * state.rttvar, MIN_RTO_US), MAX_RTO_US))


class TcpSender:
    """Segment-granular Reno sender driven by the simulator clock.

    ``emit(seq, payload, retransmit)`` is called for every segment put on the
    wire. Data comes either from an unbounded source or from ``add_data``.
    """

    def __init__(self, sim: Simulator, emit: Callable[[int, int, bool], None],
                 unbounded: bool = False, mss: int = MSS, trace_interval: int = ms(100)):
        self.sim = sim
        self.emit = emit
        self.state = TcpState(mss=mss, cwnd=INITIAL_CWND_SEGMENTS * mss)
        self.unbounded = unbounded
        self.segment_limit = 0  # segments made available by the application
        self.last_payload = {}  # seq -> payload for short tail segments
        self.sent_at: dict[int, int] = {}
        self.retransmitted: set[int] = set()
        self.timer: EventHandle | None = None
        self.fast_retransmits = 0
        self.timeouts = 0
        self.segments_sent = 0
        self.started = sim.now
        self._cwnd_since = sim.now
        self._cwnd_integral = 0.0
        self.trace_interval = trace_interval
        self.cwnd_trace: list[tuple[int, float]] = []
        self._next_trace = sim.now

    # application side
    def add_data(self, nbytes: int) -> None:
        mss = self.state.mss
        full, tail = divmod(nbytes, mss)
        self.segment_limit += full
        if tail:
            self.last_payload[self.segment_limit] = tail
            self.segment_limit += 1
        self.pump()

    def payload_of(self, seq: int) -> int:
        return self.last_payload.get(seq, self.state.mss)

    def _available(self, seq: int) -> bool:
        return self.unbounded or seq < self.segment_limit

    def pump(self) -> None:
        s = self.state
        while s.outstanding * s.mss < s.cwnd and self._available(s.next_seq):
            seq = s.next_seq
            s.next_seq += 1
            self._send(seq, seq in self.sent_at)
        if s.outstanding > 0 and self.timer is None:
            self._arm()

    def _send(self, seq: int, retransmit: bool) -> None:
        if retransmit:
            self.retransmitted.add(seq)
        self.sent_at[seq] = self.sim.now
        self.segments_sent += 1
        self.emit(seq, self.payload_of(seq), retransmit)

    def _arm(self) -> None:
        if self.timer is not None:
            self.timer.cancel()
        self.timer = self.sim.schedule_in(self.state.rto, self._on_timeout)

    def _account_cwnd(self) -> None:
        now = self.sim.now
        self._cwnd_integral += self.state.cwnd * (now - self._cwnd_since)
        self._cwnd_since = now
        if now >= self._next_trace:
            self.cwnd_trace.append((now, self.state.cwnd))
            self._next_trace = now + self.trace_interval

    def on_ack(self, ack_seq: int) -> None:
        self._account_cwnd()
        old = self.state
        new, rtx = tcp_on_ack(old, ack_seq)
        self.state = new
        if new.highest_acked > old.highest_acked:
            newest = new.highest_acked
            if newest not in self.retransmitted and newest in self.sent_at:
                update_rtt(new, self.sim.now - self.sent_at[newest])
            for seq in range(old.highest_acked + 1, newest + 1):
                self.sent_at.pop(seq, None)
                self.retransmitted.discard(seq)
                self.last_payload.pop(seq, None)
            if new.next_seq <= newest:
                new.next_seq = newest + 1
            if new.outstanding > 0:
                self._arm()
            elif self.timer is not None:
                self.timer.cancel()
                self.timer = None
        if rtx is not None:
            self.fast_retransmits += 1
            self._send(rtx, True)
            self._arm()
        self.pump()

    def _on_timeout(self) -> None:
        self.timer = None
        if self.state.outstanding <= 0:
            return
        self._account_cwnd()
        self.timeouts += 1
        self.state = tcp_on_timeout(self.state)
        # go-back-N from the first unacknowledged segment
        self.state.next_seq = self.state.highest_acked + 1
        self.pump()
        if self.timer is None:
            self._arm()

    def mean_cwnd(self, until: int) -> float:
        span = until - self.started
        if span <= 0:
            return self.state.cwnd
        integral = self._cwnd_integral + self.state.cwnd * (until - self._cwnd_since)
        return integral / span


class TcpReceiver:
    """Cumulative-ACK receiver that hands a contiguous segment stream to the application."""

    def __init__(self, send_ack: Callable[[int], None], deliver: Callable[[int, int], None] | None = None):
        self.send_ack = send_ack
        self.deliver = deliver
        self.rcv_next = 0
        self.out_of_order: dict[int, int] = {}
        self.duplicates = 0
        self.bytes_delivered = 0
        self.checksum = 0

    def on_segment(self, seq: int, payload: int) -> None:
        if seq == self.rcv_next:
            self._accept(seq, payload)
            while self.rcv_next in self.out_of_order:
                self._accept(self.rcv_next, self.out_of_order.pop(self.rcv_next))
        elif seq > self.rcv_next:
            if seq in self.out_of_order:
                self.duplicates += 1
            self.out_of_order[seq] = payload
        else:
            self.duplicates += 1
        self.send_ack(self.rcv_next)

    def _accept(self, seq: int, payload: int) -> None:
        self.rcv_next = seq + 1
        self.bytes_delivered += payload
        self.checksum = zlib.crc32(seq.to_bytes(8, "big"), self.checksum)
        if self.deliver is not None:
            self.deliver(seq, payload)


def stream_checksum(n_segments: int) -> int:
    """Checksum of an in-order, duplicate-free stream of ``n_segments`` segments."""
    c = 0
    for seq in range(n_segments):
        c = zlib.crc32(seq.to_bytes(8, "big"), c)
    return c


@dataclass(frozen=True)
class UdpFlowSpec:
    adr: float  # bits/s
    payload: int  # bytes
    downlink: bool = True

    def __post_init__(self):
        if not self.adr > 0:
            raise ValueError("UDP application data rate must be positive")
        if self.payload <= 0:
            raise ValueError("UDP payload must be positive")

    @property
    def interval_us(self) -> float:
        return self.payload * 8 / self.adr * 1e6


class UdpSource:
    """Jitter-free CBR source; the k-th packet leaves at ``start + k * interval``."""

    def __init__(self, sim: Simulator, spec: UdpFlowSpec, emit: Callable[[int], None],
                 start: int = 0, stop: int | None = None):
        self.sim = sim
        self.spec = spec
        self.emit = emit
        self.start = start
        self.stop = stop
        self.k = 0
        self.sent = 0
        self._schedule_next()

    def _schedule_next(self) -> None:
        self.k += 1
        t = self.start + int(round(self.k * self.spec.interval_us))
        if self.stop is None or t <= self.stop:
            self.sim.schedule(max(t, self.sim.now), self._fire)

    def _fire(self) -> None:
        self.emit(self.k)
        self.sent += 1
        self._schedule_next()


def udp_generate(spec: UdpFlowSpec, duration_us: int, start: int = 0) -> list[int]:
    """Emission times (µs) of a CBR flow over ``(start, start + duration]``."""
    times = []
    k = 1
    while True:
        t = start + int(round(k * spec.interval_us))
        if t > start + duration_us:
            return times
        times.append(t)
        k += 1


class TrafficClass(str, Enum):
    VOICE = "voice"
    FTP = "ftp"
    VIDEO = "video"
    WEB = "web"


TRANSPORT_OF = {
    TrafficClass.VOICE: "UDP",
    TrafficClass.VIDEO: "UDP",
    TrafficClass.FTP: "TCP",
    TrafficClass.WEB: "TCP",
}


@dataclass(frozen=True)
class AppModel:
    cls: TrafficClass
    voice_payload: int = 160
    voice_interval_ms: float = 20.0
    video_rate_bps: float = 2e6
    video_payload: int = 1470
    web_think_mean_s: float = 5.0
    web_median_bytes: float = 100_000
    web_sigma: float = 1.0
    web_request_bytes: int = 300

    @property
    def transport(self) -> str:
        return TRANSPORT_OF[self.cls]

    def voice_spec(self, downlink: bool) -> UdpFlowSpec:
        adr = self.voice_payload * 8 / (self.voice_interval_ms / 1000)
        return UdpFlowSpec(adr, self.voice_payload, downlink)

    def video_spec(self) -> UdpFlowSpec:
        return UdpFlowSpec(self.video_rate_bps, self.video_payload, True)

    def web_response_bytes(self, rng: RngStream) -> int:
        return max(1, int(rng.lognormvariate(math.log(self.web_median_bytes), self.web_sigma)))

    def web_think_us(self, rng: RngStream) -> int:
        return int(rng.expovariate(1.0 / self.web_think_mean_s) * 1e6)


CLASS_ORDER = (TrafficClass.VOICE, TrafficClass.FTP, TrafficClass.VIDEO, TrafficClass.WEB)


def class_counts(user_count: int, weights: Sequence[float]) -> dict[TrafficClass, int]:
    """Split ``user_count`` users over (voice, ftp, video, web) by normalised weight.

    Largest-remainder rounding keeps the total exact.
    """
    if len(weights) != len(CLASS_ORDER):
        raise ValueError("expected four weights (voice, ftp, video, web)")
    if any(w < 0 for w in weights):
        raise ValueError("traffic mix weights must be non-negative")
    total = float(sum(weights))
    if total <= 0:
        raise ValueError("traffic mix must have a positive weight")
    exact = [user_count * w / total for w in weights]
    counts = [math.floor(x) for x in exact]
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: user_count - sum(counts)]:
        counts[i] += 1
    return dict(zip(CLASS_ORDER, counts))


def app_workload(user_count: int, weights: Sequence[float], rng: RngStream | None = None,
                 mode: str = "normalized") -> list[list[TrafficClass]]:
    """Classes carried by each user.

    ``normalized``: each user carries exactly one class, counts proportional
    to the normalised weights. ``multi``: each user independently carries
    each class with probability ``weight / 100``.
    """
    if mode == "normalized":
        counts = class_counts(user_count, weights)
        users = [c for c in CLASS_ORDER for _ in range(counts[c])]
        if rng is not None:
            # Fisher-Yates on the dedicated stream so placement is seed-stable
            for i in range(len(users) - 1, 0, -1):
                j = rng.randint(0, i)
                users[i], users[j] = users[j], users[i]
        return [[c] for c in users]
    if mode == "multi":
        if rng is None:
            raise ValueError("multi mode needs an RNG stream")
        if all(w <= 0 for w in weights):
            raise ValueError("traffic mix must have a positive weight")
        return [[c for c, w in zip(CLASS_ORDER, weights) if rng.random() < w / 100.0] for _ in range(user_count)]
    raise ValueError(f"unknown mix mode {mode!r}")
