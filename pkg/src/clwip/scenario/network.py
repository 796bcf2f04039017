"""Wire nodes, UEs, radios, the LAL and application flows into one simulation run."""

from __future__ import annotations

import math
from collections import Counter
from typing import Callable

from ..lal import FlowTable, LasPolicy, MacIpMap, ReorderBuffer, steer_downlink, steer_uplink, strip_gtp
from ..lte import BackhaulPipe, LteLink, McsTable, rb_bits
from ..packet import ACK, DATA, IP_TCP_HEADER, IP_UDP_HEADER, REQUEST, FiveTuple, Interface, Packet
from ..radio import Position, path_loss_db, received_dbm, sinr_db
from ..sim import Simulator, Stream, ms, seconds
from ..transport import AppModel, TcpReceiver, TcpSender, TrafficClass, UdpFlowSpec, UdpSource, app_workload
from ..wifi import ContentionDomain, Dot11aTiming, WifiStation
from .config import ScenarioConfig
from .metrics import FlowMetrics, MetricsRecord

SERVER_IP = "203.0.113.10"
AP_PEER = -1


def node_positions(cfg: ScenarioConfig) -> list[Position]:
    lay = cfg.layout
    if lay.kind == "single":
        return [Position(0.0, 0.0)]
    return [Position(c * lay.pitch_m, r * lay.pitch_m) for r in range(lay.rows) for c in range(lay.cols)]


def place_ues(cfg: ScenarioConfig, nodes: list[Position], rng) -> list[tuple[int, Position]]:
    """UE ``i`` attaches to node ``i mod n`` at a random bearing.

    ``ring`` puts every UE at exactly ``ue_distance_m``; ``disc`` spreads them
    uniformly over the area within that radius (at least 1 m out).
    """
    out = []
    radius = cfg.layout.ue_distance_m
    disc = cfg.layout.placement == "disc"
    for i in range(cfg.ue_count):
        n = i % len(nodes)
        theta = rng.uniform(0.0, 2 * math.pi)
        d = max(1.0, radius * math.sqrt(rng.random())) if disc else radius
        out.append((n, Position(nodes[n].x + d * math.cos(theta), nodes[n].y + d * math.sin(theta))))
    return out


def wifi_domains(nodes: list[Position], cs_range: float) -> list[int]:
    """Group APs within carrier-sense range (transitively) into shared contention domains."""
    parent = list(range(len(nodes)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            if nodes[i].distance(nodes[j]) <= cs_range:
                parent[find(j)] = find(i)
    roots = {}
    return [roots.setdefault(find(i), len(roots)) for i in range(len(nodes))]


class Node:
    """A collocated eNodeB + AP with the LAL between the backhaul and both radios."""

    def __init__(self, net: Network, index: int, pos: Position):
        self.net = net
        self.index = index
        self.pos = pos
        sim = net.sim
        delay = ms(net.cfg.backhaul_delay_ms)
        self.backhaul_dl = BackhaulPipe(sim, delay)
        self.backhaul_ul = BackhaulPipe(sim, delay)
        self.registry = MacIpMap()
        self.dl_table = FlowTable()
        self.lte_dl: LteLink | None = None
        self.lte_ul: LteLink | None = None
        self.ap: WifiStation | None = None
        self.reorder = ReorderBuffer(sim, self.to_core, ms(net.cfg.reorder.hold_ms), net.cfg.reorder.cap) \
            if net.cfg.reorder.enabled else None

    # downlink: core -> backhaul -> LAL -> radio
    def from_core(self, pkt: Packet) -> None:
        strip_gtp(pkt)
        self.dl_table.stamp(pkt)
        iface = steer_downlink(pkt, self.net.policy, self.dl_table, self.registry)
        if iface is Interface.LTE:
            self.lte_dl.enqueue(pkt.ue, pkt)
        else:
            self.ap.enqueue(pkt)

    # uplink: radio -> LAL -> backhaul -> core
    def from_radio(self, pkt: Packet) -> None:
        self.net.iface_bytes[f"{pkt.iface.value}_ul"] += pkt.size
        if pkt.iface is Interface.WIFI:
            self.net.wifi_uplink_packets += 1
        if self.reorder is not None:
            self.reorder.reorder_deliver(pkt)
        else:
            self.to_core(pkt)

    def to_core(self, pkt: Packet) -> None:
        self.backhaul_ul.deliver(pkt, self.net.deliver)


class Ue:
    def __init__(self, net: Network, index: int, node: Node, pos: Position):
        self.net = net
        self.index = index
        self.node = node
        self.pos = pos
        self.ip = f"10.{node.index}.{index // 250}.{index % 250 + 1}"
        self.mac = f"02:00:00:{(index >> 16) & 0xFF:02x}:{(index >> 8) & 0xFF:02x}:{index & 0xFF:02x}"
        # offset the cursor by UE parity so single-flow UEs still split half/half across the population
        self.ul_table = FlowTable(cursor=index % 2)
        self.station: WifiStation | None = None
        self.reorder = ReorderBuffer(net.sim, net.deliver, ms(net.cfg.reorder.hold_ms), net.cfg.reorder.cap) \
            if net.cfg.reorder.enabled else None

    def send(self, pkt: Packet) -> None:
        self.ul_table.stamp(pkt)
        iface = steer_uplink(pkt, self.net.policy, self.ul_table)
        if iface is Interface.LTE:
            self.node.lte_ul.enqueue(self.index, pkt)
        else:
            self.station.enqueue(pkt)

    def from_radio(self, pkt: Packet) -> None:
        self.net.iface_bytes[f"{pkt.iface.value}_dl"] += pkt.size
        if self.reorder is not None:
            self.reorder.reorder_deliver(pkt)
        else:
            self.net.deliver(pkt)


class Flow:
    """One application flow; holds both endpoints and its metrics."""

    def __init__(self, net: Network, fid: int, ue: Ue, app: str, transport: str, downlink: bool):
        self.net = net
        self.fid = fid
        self.ue = ue
        proto = transport
        server_port, ue_port = 5000 + fid, 10000 + fid
        down = FiveTuple(SERVER_IP, ue.ip, server_port, ue_port, proto)
        self.dl_tuple = down
        self.ul_tuple = down.reversed()
        self.metrics = FlowMetrics(fid, app, transport, "dl" if downlink else "ul", ue.index, ue.node.index)
        self._delay_sum = 0.0
        self._jitter_sum = 0.0
        self._last_transit: int | None = None

    def packet(self, size: int, payload: int, downlink: bool, kind: int = DATA, seq: int = 0, ack: int = -1,
               retransmit: bool = False) -> Packet:
        net = self.net
        net.generated += 1
        net.pid += 1
        return Packet(net.pid, self.dl_tuple if downlink else self.ul_tuple, self.fid, size, payload,
                      self.ue.index, downlink, net.sim.now, kind, seq, ack, retransmit, gtp=downlink)

    def send(self, pkt: Packet) -> None:
        if pkt.downlink:
            self.ue.node.backhaul_dl.deliver(pkt, self.ue.node.from_core)
        else:
            self.ue.send(pkt)

    def record_transit(self, pkt: Packet) -> None:
        transit = self.net.sim.now - pkt.created
        self._delay_sum += transit
        if self._last_transit is not None:
            self._jitter_sum += abs(transit - self._last_transit)
        self._last_transit = transit

    def on_packet(self, pkt: Packet) -> None:
        raise NotImplementedError

    def finalize(self, duration_s: float) -> FlowMetrics:
        m = self.metrics
        m.goodput_bps = m.goodput_bytes * 8 / duration_s
        if m.packets_received:
            m.mean_delay_s = self._delay_sum / m.packets_received / 1e6
        if m.packets_received > 1:
            m.jitter_s = self._jitter_sum / (m.packets_received - 1) / 1e6
        return m


class UdpFlow(Flow):
    def __init__(self, net: Network, fid: int, ue: Ue, app: str, spec: UdpFlowSpec):
        super().__init__(net, fid, ue, app, "UDP", spec.downlink)
        self.spec = spec
        interval = spec.interval_us
        start = int(net.sim.rng(Stream.TRAFFIC).uniform(0.0, interval))
        self.source = UdpSource(net.sim, spec, self._emit, start=start - int(round(interval)),
                                stop=seconds(net.cfg.duration_s))

    def _emit(self, k: int) -> None:
        pkt = self.packet(self.spec.payload + IP_UDP_HEADER, self.spec.payload, self.spec.downlink, seq=k)
        self.metrics.packets_sent += 1
        self.send(pkt)

    def on_packet(self, pkt: Packet) -> None:
        m = self.metrics
        m.packets_received += 1
        m.goodput_bytes += pkt.payload
        self.record_transit(pkt)


class TcpFlow(Flow):
    """Downlink TCP transfer: sender at the server, receiver at the UE."""

    def __init__(self, net: Network, fid: int, ue: Ue, app: str, unbounded: bool, start: int):
        super().__init__(net, fid, ue, app, "TCP", True)
        self.sender: TcpSender | None = None
        self.receiver = TcpReceiver(self._send_ack, self._on_deliver)
        self.unbounded = unbounded
        net.sim.schedule(start, self._start)

    def _start(self) -> None:
        self.sender = TcpSender(self.net.sim, self._emit, unbounded=self.unbounded)
        self.sender.pump()

    def _emit(self, seq: int, payload: int, retransmit: bool) -> None:
        self.metrics.packets_sent += 1
        self.send(self.packet(payload + IP_TCP_HEADER, payload, True, DATA, seq, retransmit=retransmit))

    def _send_ack(self, ack: int) -> None:
        self.send(self.packet(IP_TCP_HEADER, 0, False, ACK, ack=ack))

    def _on_deliver(self, seq: int, payload: int) -> None:
        self.metrics.goodput_bytes += payload

    def on_packet(self, pkt: Packet) -> None:
        if pkt.kind == DATA:
            self.metrics.packets_received += 1
            self.record_transit(pkt)
            self.receiver.on_segment(pkt.seq, pkt.payload)
        elif pkt.kind == ACK:
            if self.sender is not None:
                self.sender.on_ack(pkt.ack)
        elif pkt.kind == REQUEST:
            self.on_request(pkt)

    def on_request(self, pkt: Packet) -> None:
        pass

    def finalize(self, duration_s: float) -> FlowMetrics:
        m = super().finalize(duration_s)
        if self.sender is not None:
            m.fast_retransmits = self.sender.fast_retransmits
            m.timeouts = self.sender.timeouts
            m.mean_cwnd_bytes = self.sender.mean_cwnd(self.net.sim.now)
        return m


REQUEST_RETRY_US = seconds(3.0)


class WebFlow(TcpFlow):
    """Request/response browsing: think time, small uplink request, log-normal download."""

    def __init__(self, net: Network, fid: int, ue: Ue, model: AppModel):
        self.model = model
        self.rng = net.sim.rng(Stream.TRAFFIC)
        super().__init__(net, fid, ue, "web", False, 0)
        self.request_id = 0
        self.served_id = 0
        self.target_bytes = 0
        self.waiting = False

    def _start(self) -> None:
        super()._start()
        self.net.sim.schedule_in(self.model.web_think_us(self.rng), self._request)

    def _request(self) -> None:
        self.request_id += 1
        self.waiting = True
        self._send_request()

    def _send_request(self) -> None:
        pkt = self.packet(self.model.web_request_bytes + IP_TCP_HEADER, 0, False, REQUEST, seq=self.request_id)
        self.send(pkt)
        self.net.sim.schedule_in(REQUEST_RETRY_US, self._check_request, self.request_id)

    def _check_request(self, rid: int) -> None:
        if rid == self.request_id and self.served_id < rid:
            self._send_request()

    def on_request(self, pkt: Packet) -> None:
        if pkt.seq <= self.served_id:
            return
        self.served_id = pkt.seq
        size = self.model.web_response_bytes(self.rng)
        self.target_bytes += size
        self.sender.add_data(size)

    def _on_deliver(self, seq: int, payload: int) -> None:
        super()._on_deliver(seq, payload)
        if self.waiting and self.receiver.bytes_delivered >= self.target_bytes and self.served_id == self.request_id:
            self.waiting = False
            self.net.sim.schedule_in(self.model.web_think_us(self.rng), self._request)


class Network:
    """One seeded realisation of a scenario."""

    def __init__(self, cfg: ScenarioConfig, seed: int, trace: bool = False):
        cfg.validate()
        self.cfg = cfg
        self.seed = seed
        self.policy: LasPolicy = cfg.las_policy
        self.sim = Simulator(seed, trace=trace)
        self.generated = 0
        self.delivered = 0
        self.pid = 0
        self.iface_bytes: Counter = Counter()
        self.wifi_uplink_packets = 0
        self.flows: list[Flow] = []
        self.channel = cfg.radio.channel()
        self.error_model = cfg.radio.error_model()
        self.timing = Dot11aTiming(cw_min=cfg.wifi.cw_min, cw_max=cfg.wifi.cw_max, retry_limit=cfg.wifi.retry_limit)
        lte = cfg.lte
        self.mcs = McsTable(tuple(lte.efficiency), tuple(lte.sinr_db)) if lte.efficiency and lte.sinr_db else McsTable()
        self._build()

    # --- construction -------------------------------------------------
    def _build(self) -> None:
        cfg, sim, ch = self.cfg, self.sim, self.channel
        positions = node_positions(cfg)
        self.nodes = [Node(self, i, p) for i, p in enumerate(positions)]
        placement = place_ues(cfg, positions, sim.rng(Stream.PLACEMENT))
        self.ues = [Ue(self, i, self.nodes[n], pos) for i, (n, pos) in enumerate(placement)]
        by_node: dict[int, list[Ue]] = {n.index: [] for n in self.nodes}
        for ue in self.ues:
            by_node[ue.node.index].append(ue)
            ue.node.registry.register_ue(ue.mac, ue.ip)

        self.lte_sinr_dl: dict[int, float] = {}
        self.lte_snr_ul: dict[int, float] = {}
        self.wifi_snr: dict[int, float] = {}
        sched_rng = sim.rng(Stream.SCHEDULER)
        for node in self.nodes:
            dl_rates, ul_rates = {}, {}
            for ue in by_node[node.index]:
                d = max(ue.pos.distance(node.pos), 1.0)
                signal = received_dbm(ch.lte_enb_tx_dbm, d, ch)
                interf = [received_dbm(ch.lte_enb_tx_dbm, max(ue.pos.distance(o.pos), 1.0), ch)
                          for o in self.nodes if o is not node]
                self.lte_sinr_dl[ue.index] = sinr_db(signal, interf, ch.lte_noise_dbm)
                self.lte_snr_ul[ue.index] = ch.lte_ue_tx_dbm - path_loss_db(d, ch) - ch.lte_noise_dbm
                self.wifi_snr[ue.index] = ch.wifi_tx_dbm - path_loss_db(d, ch) - ch.wifi_noise_dbm
                dl_rates[ue.index] = rb_bits(self.mcs.select(self.lte_sinr_dl[ue.index]), self.mcs)
                ul_rates[ue.index] = rb_bits(self.mcs.select(self.lte_snr_ul[ue.index], cfg.lte.uplink_max_cqi),
                                             self.mcs)
            node.lte_dl = LteLink(sim, dl_rates, self._ue_from_radio, cfg.lte.ewma_alpha,
                                  cfg.lte.bearer_capacity_bytes, sched_rng)
            node.lte_ul = LteLink(sim, ul_rates, node.from_radio, cfg.lte.ewma_alpha,
                                  cfg.lte.bearer_capacity_bytes, sched_rng)

        domain_of = wifi_domains(positions, cfg.wifi.carrier_sense_range_m)
        backoff_rng, error_rng = sim.rng(Stream.WIFI_BACKOFF), sim.rng(Stream.CHANNEL_ERROR)
        self.domains = [ContentionDomain(sim, backoff_rng, error_rng, self.timing, self.error_model)
                        for _ in range(max(domain_of) + 1)]
        for node in self.nodes:
            dom = self.domains[domain_of[node.index]]
            snrs = {ue.index: self.wifi_snr[ue.index] for ue in by_node[node.index]}
            node.ap = WifiStation(f"ap{node.index}", self._ue_from_radio, _peer_ue, snrs, self.timing,
                                  cfg.wifi.queue_packets)
            dom.add(node.ap)
            for ue in by_node[node.index]:
                ue.station = WifiStation(f"ue{ue.index}", node.from_radio, _peer_ap,
                                         {AP_PEER: self.wifi_snr[ue.index]}, self.timing, cfg.wifi.queue_packets)
                dom.add(ue.station)
        self._build_flows()

    def _build_flows(self) -> None:
        cfg, t = self.cfg, self.cfg.traffic
        if t.kind == "udp":
            adr = t.adr_mbps * 1e6
            for ue in self.ues:
                for _ in range(t.dl_flows_per_ue):
                    self._add_udp(ue, "udp", UdpFlowSpec(adr, t.payload_bytes, True))
                for _ in range(t.ul_flows_per_ue):
                    self._add_udp(ue, "udp", UdpFlowSpec(adr, t.payload_bytes, False))
            return
        model = AppModel(TrafficClass.VOICE, voice_payload=t.voice_payload_bytes,
                         voice_interval_ms=t.voice_interval_ms, video_rate_bps=t.video_rate_mbps * 1e6,
                         web_think_mean_s=t.web_think_mean_s, web_median_bytes=t.web_median_kb * 1000)
        classes = app_workload(cfg.ue_count, t.weights, self.sim.rng(Stream.PLACEMENT), t.mix_mode)
        traffic_rng = self.sim.rng(Stream.TRAFFIC)
        for ue, ue_classes in zip(self.ues, classes):
            for c in ue_classes:
                if c is TrafficClass.VOICE:
                    self._add_udp(ue, "voice", model.voice_spec(True))
                    self._add_udp(ue, "voice", model.voice_spec(False))
                elif c is TrafficClass.VIDEO:
                    self._add_udp(ue, "video", model.video_spec())
                elif c is TrafficClass.FTP:
                    start = int(traffic_rng.uniform(0.0, t.ftp_start_window_s) * 1e6)
                    self.flows.append(TcpFlow(self, len(self.flows), ue, "ftp", True, start))
                else:
                    self.flows.append(WebFlow(self, len(self.flows), ue, model))

    def _add_udp(self, ue: Ue, app: str, spec: UdpFlowSpec) -> None:
        self.flows.append(UdpFlow(self, len(self.flows), ue, app, spec))

    # --- packet plumbing ----------------------------------------------
    def _ue_from_radio(self, pkt: Packet) -> None:
        self.ues[pkt.ue].from_radio(pkt)

    def deliver(self, pkt: Packet) -> None:
        self.delivered += 1
        self.flows[pkt.flow_id].on_packet(pkt)

    # --- accounting ----------------------------------------------------
    def in_flight(self) -> int:
        n = 0
        for node in self.nodes:
            n += len(node.backhaul_dl.in_flight) + len(node.backhaul_ul.in_flight)
            n += node.lte_dl.resident() + node.lte_ul.resident()
            n += len(node.ap.queue)
            if node.reorder is not None:
                n += node.reorder.resident()
        for ue in self.ues:
            n += len(ue.station.queue)
            if ue.reorder is not None:
                n += ue.reorder.resident()
        return n

    def queue_drops(self) -> dict[str, int]:
        drops = Counter()
        for node in self.nodes:
            drops["lte_dl_queue"] += node.lte_dl.dropped()
            drops["lte_ul_queue"] += node.lte_ul.dropped()
            drops["wifi_ap_queue"] += node.ap.queue.dropped
            drops["wifi_retry"] += node.ap.queue.retry_dropped
        for ue in self.ues:
            drops["wifi_ue_queue"] += ue.station.queue.dropped
            drops["wifi_retry"] += ue.station.queue.retry_dropped
        return dict(drops)

    def run(self) -> MetricsRecord:
        end = seconds(self.cfg.duration_s)
        self.sim.run_until(end)
        duration = self.cfg.duration_s
        flows = [f.finalize(duration) for f in self.flows]
        drops = self.queue_drops()
        rec = MetricsRecord(seed=self.seed, duration_s=duration, flows=flows)
        rec.throughput_bps = sum(f.goodput_bps for f in flows)
        rec.tcp_goodput_bps = sum(f.goodput_bps for f in flows if f.transport == "TCP")
        rec.generated = self.generated
        rec.delivered = self.delivered
        rec.dropped_retry = drops.get("wifi_retry", 0)
        rec.dropped_queue = sum(v for k, v in drops.items() if k != "wifi_retry")
        rec.in_flight = self.in_flight()
        rec.drops = drops
        rec.iface_bytes = dict(self.iface_bytes)
        rec.wifi_collisions = sum(d.collisions for d in self.domains)
        rec.wifi_uplink_packets = self.wifi_uplink_packets
        rec.fast_retransmits = sum(f.fast_retransmits for f in flows)
        rec.dispatched_events = self.sim.dispatched
        for f in self.flows:
            if isinstance(f, TcpFlow) and f.sender is not None and f.metrics.app == "ftp":
                rec.cwnd_traces[f.fid] = [(t / 1e6, c) for t, c in f.sender.cwnd_trace]
        return rec


def _peer_ue(pkt: Packet) -> int:
    return pkt.ue


def _peer_ap(pkt: Packet) -> int:
    return AP_PEER


def simulate(cfg: ScenarioConfig, seed: int, trace: bool = False) -> MetricsRecord:
    return Network(cfg, seed, trace).run()
