"""Link Aggregation Layer: flow classification, MAC/IP registry, steering policies, reordering."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .packet import FiveTuple, Interface, Packet
from .sim import EventHandle, Simulator, ms

__all__ = [
    "FiveTuple", "Interface", "LasPolicy", "MacIpMap", "FlowTable", "ReorderBuffer",
    "strip_gtp", "steer_downlink", "steer_uplink",
]


class LasPolicy(str, Enum):
    LTE_NO_LAS = "LteNoLas"
    WIFI_NO_LAS = "WifiNoLas"
    PS_N_LAS = "PsNLas"
    FS_N_LAS = "FsNLas"
    WOD_LAS = "WoDLas"

    @classmethod
    def parse(cls, name: str) -> LasPolicy:
        key = name.replace("-", "").replace("_", "").lower()
        for p in cls:
            if p.value.lower() == key or p.name.replace("_", "").lower() == key:
                return p
        raise ValueError(f"unknown policy {name!r}; expected one of {[p.value for p in cls]}")


class MacIpMap:
    """Bijective UE Wi-Fi MAC <-> UE IP registry, filled at association."""

    def __init__(self):
        self._ip_by_mac: dict[str, str] = {}
        self._mac_by_ip: dict[str, str] = {}

    def register_ue(self, mac: str, ip: str) -> None:
        if mac in self._ip_by_mac or ip in self._mac_by_ip:
            raise ValueError(f"duplicate registration for mac={mac} ip={ip}")
        self._ip_by_mac[mac] = ip
        self._mac_by_ip[ip] = mac

    def mac_for(self, ip: str) -> str | None:
        return self._mac_by_ip.get(ip)

    def ip_for(self, mac: str) -> str | None:
        return self._ip_by_mac.get(mac)

    def __contains__(self, ip: str) -> bool:
        return ip in self._mac_by_ip

    def __len__(self) -> int:
        return len(self._mac_by_ip)


@dataclass
class FlowTable:
    """Per-direction steering state of one LAL instance."""

    assignment: dict[FiveTuple, Interface] = field(default_factory=dict)
    parity: dict[FiveTuple, int] = field(default_factory=dict)
    cursor: int = 0
    next_seq: dict[FiveTuple, int] = field(default_factory=dict)
    counts: Counter = field(default_factory=Counter)

    def stamp(self, packet: Packet) -> None:
        """Tag ``packet`` with the next per-flow LAL sequence number."""
        n = self.next_seq.get(packet.flow, 0)
        packet.lal_seq = n
        self.next_seq[packet.flow] = n + 1

    def _alternate(self, flow: FiveTuple) -> Interface:
        k = self.parity.get(flow, 0)
        self.parity[flow] = k + 1
        return Interface.LTE if k % 2 == 0 else Interface.WIFI

    def _sticky(self, flow: FiveTuple) -> Interface:
        iface = self.assignment.get(flow)
        if iface is None:
            iface = Interface.LTE if self.cursor % 2 == 0 else Interface.WIFI
            self.cursor += 1
            self.assignment[flow] = iface
        return iface


def strip_gtp(packet: Packet) -> Packet:
    """Drop the tunnel encapsulation; the IP datagram itself is untouched."""
    packet.gtp = False
    return packet


def _steer(packet: Packet, policy: LasPolicy, table: FlowTable, downlink: bool) -> Interface:
    if policy is LasPolicy.LTE_NO_LAS:
        iface = Interface.LTE
    elif policy is LasPolicy.WIFI_NO_LAS:
        iface = Interface.WIFI
    elif policy is LasPolicy.PS_N_LAS:
        iface = table._alternate(packet.flow)
    elif policy is LasPolicy.FS_N_LAS:
        iface = table._sticky(packet.flow)
    elif policy is LasPolicy.WOD_LAS:
        iface = table._sticky(packet.flow) if downlink else Interface.LTE
    else:
        raise ValueError(f"unhandled policy {policy}")
    table.counts[(packet.flow, iface)] += 1
    packet.iface = iface
    return iface


def steer_downlink(packet: Packet, policy: LasPolicy, table: FlowTable, registry: MacIpMap | None = None) -> Interface:
    """Pick the radio for a packet heading to a UE."""
    if registry is not None and packet.flow.dst_ip not in registry:
        raise ValueError(f"downlink packet for unregistered UE {packet.flow.dst_ip}")
    return _steer(packet, policy, table, True)


def steer_uplink(packet: Packet, policy: LasPolicy, table: FlowTable) -> Interface:
    """Pick the radio for a packet leaving a UE (WoD-LAS pins these to LTE)."""
    return _steer(packet, policy, table, False)


REORDER_HOLD_US = ms(60)
REORDER_CAP = 1000


class _FlowReorder:
    __slots__ = ("expected", "held", "timer")

    def __init__(self):
        self.expected = 0
        self.held: dict[int, Packet] = {}
        self.timer: EventHandle | None = None


class ReorderBuffer:
    """Per-flow in-order release keyed on the LAL sequence number.

    Out-of-sequence packets wait until the gap fills or ``hold_us`` passes;
    on expiry the missing numbers are skipped and everything held up to the
    next gap is released.
    """

    def __init__(self, sim: Simulator, release: Callable[[Packet], None],
                 hold_us: int = REORDER_HOLD_US, cap: int = REORDER_CAP):
        self.sim = sim
        self.release = release
        self.hold_us = hold_us
        self.cap = cap
        self.flows: dict[FiveTuple, _FlowReorder] = {}
        self.timeouts = 0
        self.late = 0

    def resident(self) -> int:
        return sum(len(f.held) for f in self.flows.values())

    def reorder_deliver(self, packet: Packet) -> list[Packet]:
        st = self.flows.get(packet.flow)
        if st is None:
            st = self.flows[packet.flow] = _FlowReorder()
        seq = packet.lal_seq
        out: list[Packet] = []
        if seq < st.expected:
            self.late += 1
            out.append(packet)
        elif seq == st.expected:
            out.append(packet)
            st.expected += 1
            self._drain(st, out)
        else:
            st.held[seq] = packet
            if len(st.held) > self.cap:
                self._skip_gap(st, out)
        self._arm(st, packet.flow)
        for p in out:
            self.release(p)
        return out

    def _drain(self, st: _FlowReorder, out: list[Packet]) -> None:
        held = st.held
        while st.expected in held:
            out.append(held.pop(st.expected))
            st.expected += 1

    def _skip_gap(self, st: _FlowReorder, out: list[Packet]) -> None:
        st.expected = min(st.held)
        self._drain(st, out)

    def _arm(self, st: _FlowReorder, flow: FiveTuple) -> None:
        if st.held and st.timer is None:
            st.timer = self.sim.schedule_in(self.hold_us, self._expire, flow)
        elif not st.held and st.timer is not None:
            st.timer.cancel()
            st.timer = None

    def _expire(self, flow: FiveTuple) -> None:
        st = self.flows[flow]
        st.timer = None
        if not st.held:
            return
        self.timeouts += 1
        out: list[Packet] = []
        self._skip_gap(st, out)
        self._arm(st, flow)
        for p in out:
            self.release(p)
