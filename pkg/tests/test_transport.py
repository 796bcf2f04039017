import math
import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clwip.sim import RngStream, Simulator, Stream, ms, seconds
from clwip.transport import (
    CLASS_ORDER, MSS, AppModel, TcpPhase, TcpReceiver, TcpSender, TcpState, TrafficClass, UdpFlowSpec,
    UdpSource, app_workload, class_counts, stream_checksum, tcp_on_ack, tcp_on_timeout, udp_generate,
)


def test_slow_start_doubles():
    s = TcpState()
    s.next_seq = 2
    s, _ = tcp_on_ack(s, 1)
    s, _ = tcp_on_ack(s, 2)
    assert s.cwnd == 4 * MSS


def test_triple_dupack_halves_and_retransmits():
    s = TcpState(cwnd=64 * MSS, next_seq=100, highest_acked=9)
    rtx = None
    for _ in range(3):
        s, rtx = tcp_on_ack(s, 10)
    assert s.ssthresh == 32 * MSS and s.cwnd == 32 * MSS
    assert rtx == 10 and s.phase is TcpPhase.FAST_RECOVERY


def test_old_ack_ignored():
    s = TcpState(cwnd=10 * MSS, next_seq=50, highest_acked=20)
    s2, rtx = tcp_on_ack(s, 5)
    assert s2 == s and rtx is None


def test_new_ack_leaves_fast_recovery():
    s = TcpState(cwnd=20 * MSS, next_seq=40, highest_acked=9)
    for _ in range(5):
        s, _ = tcp_on_ack(s, 10)
    assert s.cwnd == 12 * MSS  # 10 after halving, inflated by two further duplicates
    s, _ = tcp_on_ack(s, 30)
    assert s.cwnd == 10 * MSS and s.phase is TcpPhase.CONGESTION_AVOIDANCE


def test_timeout_rules():
    s = TcpState(cwnd=10 * MSS, next_seq=30, highest_acked=9)
    s = tcp_on_timeout(s)
    assert s.cwnd == MSS and s.ssthresh == 5 * MSS and s.phase is TcpPhase.SLOW_START
    r0 = s.rto
    s = tcp_on_timeout(s)
    assert s.rto == 2 * r0
    idle = TcpState(next_seq=5, highest_acked=4)
    assert tcp_on_timeout(idle) == idle


def test_no_fast_retransmit_for_go_back_n_duplicates():
    s = TcpState(cwnd=10 * MSS, next_seq=30, highest_acked=9)
    s = tcp_on_timeout(s)
    s.next_seq = 10
    for _ in range(5):
        s, rtx = tcp_on_ack(s, 10)
        assert rtx is None


@settings(max_examples=200, deadline=None)
@given(st.lists(st.one_of(st.integers(0, 200), st.just(-1)), max_size=200))
def test_cwnd_and_ssthresh_floors(events):
    s = TcpState(next_seq=100)
    for e in events:
        if e < 0:
            s = tcp_on_timeout(s)
        else:
            s, _ = tcp_on_ack(s, e)
            s.next_seq = max(s.next_seq, s.highest_acked + 1)
        assert s.cwnd >= MSS and s.ssthresh >= 2 * MSS
        if s.phase is not TcpPhase.FAST_RECOVERY:
            assert 0 <= s.dupack_count <= 3


def _lossy_link(sim, loss_every, delay, seed=4):
    """Sender and receiver joined by a link that drops and jitters segments."""
    rng = RngStream(seed, Stream.CHANNEL_ERROR)
    received = []
    sender: list[TcpSender] = []
    counter = [0]

    def ack_back(ack):
        sim.schedule_in(delay, sender[0].on_ack, ack)

    rx = TcpReceiver(ack_back, lambda seq, n: received.append(n))

    def emit(seq, payload, retransmit):
        counter[0] += 1
        if loss_every and counter[0] % loss_every == 0:
            return
        sim.schedule_in(delay + rng.randint(0, 3000), rx.on_segment, seq, payload)

    sender.append(TcpSender(sim, emit))
    return sender[0], rx, received


def test_stream_integrity_under_loss_and_reordering():
    sim = Simulator(1)
    tx, rx, received = _lossy_link(sim, loss_every=17, delay=ms(20))
    tx.add_data(500 * MSS + 123)
    sim.run_until(seconds(120))
    assert rx.bytes_delivered == 500 * MSS + 123 == sum(received)
    assert rx.checksum == stream_checksum(501)
    assert tx.fast_retransmits > 0


def test_cwnd_trace_and_mean():
    sim = Simulator(2)
    tx, rx, _ = _lossy_link(sim, loss_every=0, delay=ms(10))
    tx.unbounded = True
    tx.pump()
    sim.run_until(seconds(2))
    assert tx.cwnd_trace and all(c >= MSS for _, c in tx.cwnd_trace)
    assert tx.mean_cwnd(sim.now) > 2 * MSS


def test_udp_packet_interval():
    spec = UdpFlowSpec(1e6, 1250, True)
    assert spec.interval_us == pytest.approx(10_000)


def test_udp_count_100s_6mbps():
    spec = UdpFlowSpec(6e6, 1470, True)
    n = len(udp_generate(spec, seconds(100)))
    assert abs(n - math.floor(100 * 6e6 / (1470 * 8))) <= 1
    assert abs(n - 51020) <= 1


def test_udp_source_matches_generator():
    sim = Simulator()
    sent = []
    spec = UdpFlowSpec(2e6, 1470, False)
    UdpSource(sim, spec, lambda k: sent.append(sim.now), start=0, stop=seconds(3))
    sim.run_until(seconds(5))
    assert sent == udp_generate(spec, seconds(3))


def test_udp_rejects_zero_rate():
    with pytest.raises(ValueError):
        UdpFlowSpec(0.0, 1470, True)


def test_normalized_weights_expt3():
    counts = class_counts(60, [20, 20, 60, 20])
    assert [counts[c] for c in CLASS_ORDER] == [10, 10, 30, 10]


def test_normalized_weights_expt4_30_users():
    counts = class_counts(30, [20, 60, 20, 40])
    exact = [30 * w / 140 for w in (20, 60, 20, 40)]
    assert sum(counts.values()) == 30
    for c, x in zip(CLASS_ORDER, exact):
        assert abs(counts[c] - x) < 1


def test_single_class_weight():
    assert class_counts(7, [0, 0, 100, 0])[TrafficClass.VIDEO] == 7


def test_zero_mix_rejected():
    with pytest.raises(ValueError):
        class_counts(5, [0, 0, 0, 0])


def test_workload_shuffle_is_seeded():
    a = app_workload(40, [40, 50, 30, 60], RngStream(3, Stream.PLACEMENT))
    b = app_workload(40, [40, 50, 30, 60], RngStream(3, Stream.PLACEMENT))
    assert a == b and all(len(u) == 1 for u in a)


def test_multi_mode_uses_weights_as_probabilities():
    users = app_workload(2000, [100, 0, 50, 0], RngStream(5, Stream.PLACEMENT), mode="multi")
    assert all(TrafficClass.VOICE in u and TrafficClass.FTP not in u for u in users)
    frac = sum(TrafficClass.VIDEO in u for u in users) / len(users)
    assert 0.45 < frac < 0.55


def test_app_transport_binding():
    assert AppModel(TrafficClass.VOICE).transport == "UDP"
    assert AppModel(TrafficClass.VIDEO).transport == "UDP"
    assert AppModel(TrafficClass.FTP).transport == "TCP"
    assert AppModel(TrafficClass.WEB).transport == "TCP"


def test_voice_rate():
    spec = AppModel(TrafficClass.VOICE).voice_spec(True)
    assert spec.adr == pytest.approx(64_000) and spec.interval_us == pytest.approx(20_000)
