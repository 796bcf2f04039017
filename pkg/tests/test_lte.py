import pytest

from clwip.lte import (
    CQI_EFFICIENCY, NUM_RBS, TTI_US, BackhaulPipe, LteBearerQueue, LteLink, McsTable, PfSchedulerState,
    rb_bits, tti_schedule,
)
from clwip.sim import Simulator, Stream, ms

from conftest import make_packet

TOP = CQI_EFFICIENCY[-1]


def test_single_backlogged_ue_gets_whole_grid():
    alloc = tti_schedule({1: 1e9}, {1: rb_bits(TOP)}, PfSchedulerState())
    assert alloc == {1: NUM_RBS}


def test_empty_queue_gets_nothing():
    st = PfSchedulerState()
    st.avg_rate[2] = 1.0  # a starved UE has the best metric but no data
    alloc = tti_schedule({1: 1e9, 2: 0.0}, {1: 500.0, 2: 500.0}, st)
    assert 2 not in alloc and alloc[1] == NUM_RBS


def test_empty_system_empty_allocation():
    assert tti_schedule({}, {1: 500.0}, PfSchedulerState()) == {}


def test_allocation_never_exceeds_grid():
    st = PfSchedulerState()
    for _ in range(50):
        alloc = tti_schedule({u: 3000.0 * (u + 1) for u in range(8)}, {u: 300.0 + 50 * u for u in range(8)}, st)
        assert sum(alloc.values()) <= NUM_RBS


def test_rb_bits_top_mcs_capacity():
    # 12 subcarriers * 14 symbols * 5.5547 * 0.75 per RB per TTI, 50 RBs, 1000 TTIs/s
    assert rb_bits(TOP) * NUM_RBS * 1000 == pytest.approx(12 * 14 * 5.5547 * 0.75 * 50 * 1000)
    assert rb_bits(TOP) * NUM_RBS * 1000 == pytest.approx(34.99461e6, rel=1e-6)


def test_rb_bits_zero_and_monotone():
    assert rb_bits(0.0) == 0.0
    caps = [rb_bits(e) for e in CQI_EFFICIENCY]
    assert all(a < b for a, b in zip(caps, caps[1:]))


def test_rb_bits_rejects_unknown_efficiency():
    with pytest.raises(ValueError):
        rb_bits(1.2345)


def test_mcs_select_and_cap():
    t = McsTable()
    assert t.select(-20.0) == 0.0
    assert t.select(40.0) == TOP
    assert t.select(40.0, max_cqi=9) == CQI_EFFICIENCY[8]


def _oracle_pf(rates, ttis, alpha=0.01):
    """Textbook PF with full buffers: the best metric takes the whole grid each TTI."""
    avg = {u: 1.0 for u in rates}
    served = {u: 0.0 for u in rates}
    for _ in range(ttis):
        best = max(rates, key=lambda u: (rates[u] * NUM_RBS / avg[u], -u))
        for u in rates:
            got = rates[u] * NUM_RBS if u == best else 0.0
            served[u] += got
            avg[u] = (1 - alpha) * avg[u] + alpha * got * 1000
    return served


def _full_buffer_link(n_ues, ttis, seed=1):
    sim = Simulator(seed)
    rate = rb_bits(TOP)
    served = {u: 0 for u in range(n_ues)}
    pid = [0]

    def refill(p):
        served[p.ue] += p.size
        pid[0] += 1
        link.enqueue(p.ue, make_packet(pid[0], ue=p.ue))

    link = LteLink(sim, {u: rate for u in range(n_ues)}, refill, rng=sim.rng(Stream.SCHEDULER))
    for u in range(n_ues):
        for _ in range(200):
            pid[0] += 1
            link.enqueue(u, make_packet(pid[0], ue=u))
    sim.run_until(ttis * TTI_US)
    return served


def test_pf_two_symmetric_ues_within_five_percent():
    served = _full_buffer_link(2, 1000)
    a, b = served.values()
    assert abs(a - b) <= 0.05 * max(a, b)
    oracle = _oracle_pf({0: rb_bits(TOP), 1: rb_bits(TOP)}, 1000)
    oa, ob = oracle.values()
    assert abs(oa - ob) <= 0.05 * max(oa, ob)
    # the link and the oracle move the same total (grid always full)
    assert sum(served.values()) * 8 == pytest.approx(sum(oracle.values()), rel=0.01)


def test_pf_fairness_many_symmetric_ues():
    served = _full_buffer_link(6, 3000)
    assert max(served.values()) / min(served.values()) <= 1.1


def test_pf_average_floor():
    st = PfSchedulerState()
    st.avg_rate[1] = 5.0
    st.decay(10**6)
    assert st.average(1) >= st.floor > 0


def test_pf_alpha_validated():
    with pytest.raises(ValueError):
        PfSchedulerState(ewma_alpha=1.0)


def test_bearer_queue_capacity_and_conservation(packet_factory):
    q = LteBearerQueue(capacity=3000)
    assert q.push(packet_factory(size=1500))
    assert q.push(packet_factory(size=1500))
    assert not q.push(packet_factory(size=1))
    done = q.serve(1500 * 8 + 100)
    assert len(done) == 1 and q.head_sent_bits == pytest.approx(100)
    assert q.backlog_bits == pytest.approx(1500 * 8 - 100)
    assert q.enqueued == q.dequeued + len(q)
    assert q.byte_count == sum(p.size for p in q.fifo)


def test_bearer_queue_fifo(packet_factory):
    q = LteBearerQueue()
    pkts = [packet_factory(size=100 + i) for i in range(20)]
    for p in pkts:
        q.push(p)
    out = q.serve(10**9)
    assert out == pkts


def test_backhaul_exact_delay_and_fifo(packet_factory):
    sim = Simulator()
    pipe = BackhaulPipe(sim, ms(40))
    seen = []
    a, b = packet_factory(), packet_factory()
    pipe.deliver(a, lambda p: seen.append((sim.now, p)))
    sim.run_until(1)
    pipe.deliver(b, lambda p: seen.append((sim.now, p)))
    sim.run_until(ms(100))
    assert seen == [(40_000, a), (40_001, b)]


def test_backhaul_zero_delay(packet_factory):
    sim = Simulator()
    pipe = BackhaulPipe(sim, 0)
    seen = []
    sim.schedule(7, lambda: pipe.deliver(packet_factory(), lambda p: seen.append(sim.now)))
    sim.run_until(10)
    assert seen == [7]


def test_lte_link_conservation(packet_factory):
    sim = Simulator(3)
    delivered = []
    link = LteLink(sim, {0: 200.0, 1: 600.0}, delivered.append, capacity=20_000, rng=sim.rng(Stream.SCHEDULER))
    for i in range(100):
        link.enqueue(i % 2, packet_factory(ue=i % 2))
    sim.run_until(ms(5))
    enq = sum(q.enqueued for q in link.queues.values())
    assert 100 == len(delivered) + link.dropped() + link.resident()
    assert enq == len(delivered) + link.resident()
    sim.run_until(ms(1000))
    assert link.resident() == 0
    assert link.max_rbs_used <= NUM_RBS
