"""Packet and flow identifiers shared by every layer."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple


class Protocol(str, Enum):
    TCP = "TCP"
    UDP = "UDP"


class Interface(str, Enum):
    LTE = "LTE"
    WIFI = "WiFi"


class FiveTuple(NamedTuple):
    """Flow identifier; tuple ordering gives a total order for deterministic iteration."""

    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: str

    def reversed(self) -> FiveTuple:
        return FiveTuple(self.dst_ip, self.src_ip, self.dst_port, self.src_port, self.protocol)


DATA = 0
ACK = 1
REQUEST = 2

IP_UDP_HEADER = 28
IP_TCP_HEADER = 40


@dataclass(slots=True, eq=False)
class Packet:
    pid: int
    flow: FiveTuple
    flow_id: int
    size: int  # IP datagram bytes
    payload: int  # application bytes carried
    ue: int
    downlink: bool
    created: int
    kind: int = DATA
    seq: int = 0
    ack: int = -1
    retransmit: bool = False
    lal_seq: int = -1
    gtp: bool = False
    iface: Interface | None = None
