"""Packet decoding, bidirectional flow assembly and per-flow feature extraction."""

import csv
import ipaddress
import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _accel
from ._io import atomic_write
from ._kernels_py import KIND_ARP, KIND_IPV4, KIND_IPV6, KIND_LLC, KIND_OTHER
from .errors import BadMagic, EmptyFlow, TruncatedPacket, UnsupportedLinkType
from .schema import FEATURE_NAMES

__all__ = [
    "KIND_ARP", "KIND_IPV4", "KIND_IPV6", "KIND_LLC", "KIND_OTHER",
    "TCP_FIN", "TCP_SYN", "TCP_RST", "TCP_PSH", "TCP_ACK", "TCP_URG",
    "PacketMeta", "FlowKey", "FlowRecord", "FlowAssembler",
    "decode_pcap", "assemble_flows", "extract_features", "flow_key",
    "write_feature_csv", "format_ip",
]

TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_PSH = 0x08
TCP_ACK = 0x10
TCP_URG = 0x20
_FLAG_MASK = 0x3F

LINKTYPE_ETHERNET = 1
_MAGIC_USEC = 0xA1B2C3D4
_MAGIC_NSEC = 0xA1B23C4D

RATE_EPSILON = 1e-6
DEFAULT_IDLE_TIMEOUT = 60.0

APP_PORTS = {
    "http": (80,),
    "https": (443,),
    "dns": (53,),
    "telnet": (23,),
    "smtp": (25,),
    "ssh": (22,),
    "irc": (6667,),
    "dhcp": (67, 68),
}


class PacketMeta(NamedTuple):
    """Header summary of one captured frame.

    ``kind`` is one of the ``KIND_*`` constants; addresses are integers (IPv4,
    IPv6 or the ARP protocol addresses). ``malformed`` marks frames whose headers
    were cut short or inconsistent; flow assembly skips them.
    """

    ts: float
    wire_len: int
    kind: int
    ethertype: int
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    ip_proto: int
    ttl: int
    header_len: int
    payload_len: int
    tcp_flags: int
    malformed: bool = False

    def swapped(self):
        return self._replace(
            src_ip=self.dst_ip, dst_ip=self.src_ip,
            src_port=self.dst_port, dst_port=self.src_port,
        )

    def has_flag(self, flag):
        return bool(self.tcp_flags & flag)


def format_ip(value, kind=KIND_IPV4):
    if kind == KIND_IPV6:
        return str(ipaddress.IPv6Address(value))
    return str(ipaddress.IPv4Address(value))


class FlowKey(NamedTuple):
    a_ip: int
    a_port: int
    b_ip: int
    b_port: int
    proto: int


def flow_key(pkt):
    """Canonical key and whether ``pkt`` travels from the key's ``a`` side."""
    src = (pkt.src_ip, pkt.src_port)
    dst = (pkt.dst_ip, pkt.dst_port)
    if src <= dst:
        return FlowKey(*src, *dst, pkt.ip_proto), True
    return FlowKey(*dst, *src, pkt.ip_proto), False


@dataclass
class FlowRecord:
    key: FlowKey
    initiator: tuple
    first_ts: float
    last_ts: float
    fwd_packets: int = 0
    bwd_packets: int = 0
    fwd_bytes: int = 0
    bwd_bytes: int = 0
    ack_count: int = 0
    syn_count: int = 0
    fin_count: int = 0
    urg_count: int = 0
    rst_count: int = 0
    psh_count: int = 0
    flag_bits: int = 0
    header_bytes: int = 0
    payload_bytes: int = 0
    ttl_sum: int = 0
    ttl_packets: int = 0
    kinds: set = field(default_factory=set)
    ip_protos: set = field(default_factory=set)
    seq: int = 0

    @classmethod
    def start(cls, key, pkt):
        return cls(key, (pkt.src_ip, pkt.src_port), pkt.ts, pkt.ts)

    @property
    def packets(self):
        return self.fwd_packets + self.bwd_packets

    @property
    def responder(self):
        k = self.key
        a = (k.a_ip, k.a_port)
        return (k.b_ip, k.b_port) if self.initiator == a else a

    def add(self, pkt):
        if (pkt.src_ip, pkt.src_port) == self.initiator:
            self.fwd_packets += 1
            self.fwd_bytes += pkt.wire_len
        else:
            self.bwd_packets += 1
            self.bwd_bytes += pkt.wire_len
        if pkt.ts < self.first_ts:
            self.first_ts = pkt.ts
        if pkt.ts > self.last_ts:
            self.last_ts = pkt.ts
        flags = pkt.tcp_flags & _FLAG_MASK
        if flags:
            self.flag_bits += bin(flags).count("1")
            self.ack_count += bool(flags & TCP_ACK)
            self.syn_count += bool(flags & TCP_SYN)
            self.fin_count += bool(flags & TCP_FIN)
            self.urg_count += bool(flags & TCP_URG)
            self.rst_count += bool(flags & TCP_RST)
            self.psh_count += bool(flags & TCP_PSH)
        self.header_bytes += pkt.header_len
        self.payload_bytes += pkt.payload_len
        if pkt.kind in (KIND_IPV4, KIND_IPV6):
            self.ttl_sum += pkt.ttl
            self.ttl_packets += 1
            self.ip_protos.add(pkt.ip_proto)
        self.kinds.add(pkt.kind)


def decode_pcap(path, chunk_size=1 << 20):
    """Yield a :class:`PacketMeta` for every record of a classic pcap file.

    Both byte orders and the nanosecond-resolution magic are accepted. Only
    Ethernet captures are supported.
    """
    with open(path, "rb") as fh:
        header = fh.read(24)
        if len(header) < 4:
            raise BadMagic(f"{path}: file too short for a pcap header")
        magic_le = struct.unpack("<I", header[:4])[0]
        if magic_le in (_MAGIC_USEC, _MAGIC_NSEC):
            big_endian = False
            magic = magic_le
        else:
            magic = struct.unpack(">I", header[:4])[0]
            if magic not in (_MAGIC_USEC, _MAGIC_NSEC):
                raise BadMagic(f"{path}: not a classic pcap file (magic {header[:4].hex()})")
            big_endian = True
        if len(header) < 24:
            raise TruncatedPacket(0)
        linktype = struct.unpack(">I" if big_endian else "<I", header[20:24])[0] & 0x0FFFFFFF
        if linktype != LINKTYPE_ETHERNET:
            raise UnsupportedLinkType(f"{path}: link type {linktype} (only Ethernet is supported)")
        nanosecond = magic == _MAGIC_NSEC

        parse = _accel.parse_records
        make = PacketMeta._make
        pending = b""
        index = 0
        while True:
            chunk = fh.read(chunk_size)
            if not chunk:
                break
            buf = pending + chunk if pending else chunk
            records, consumed = parse(buf, big_endian, nanosecond)
            for rec in records:
                yield make(rec)
            index += len(records)
            pending = buf[consumed:]
        if pending:
            raise TruncatedPacket(index)


class FlowAssembler:
    """Incremental bidirectional flow table.

    Packets sharing a canonical key join the same record while the gap since the
    flow's last packet stays within ``idle_timeout``; a longer gap closes the
    record and opens a new one.
    """

    def __init__(self, idle_timeout=DEFAULT_IDLE_TIMEOUT):
        if idle_timeout <= 0:
            raise ValueError("idle_timeout must be positive")
        self.idle_timeout = idle_timeout
        self.active = {}
        self.seen = 0
        self.skipped = 0
        self._seq = 0
        self._last_sweep = None

    def add(self, pkt):
        """Account ``pkt``; returns the flows this packet caused to close."""
        self.seen += 1
        if pkt.malformed:
            self.skipped += 1
            return []
        closed = []
        if self._last_sweep is None:
            self._last_sweep = pkt.ts
        elif pkt.ts - self._last_sweep > 1.0:
            closed.extend(self.expire(pkt.ts))
            self._last_sweep = pkt.ts
        key, _ = flow_key(pkt)
        rec = self.active.get(key)
        if rec is not None and pkt.ts - rec.last_ts > self.idle_timeout:
            closed.append(self._close(key))
            rec = None
        if rec is None:
            rec = FlowRecord.start(key, pkt)
            rec.seq = self._seq
            self._seq += 1
            self.active[key] = rec
        rec.add(pkt)
        return closed

    def _close(self, key):
        return self.active.pop(key)

    def expire(self, now):
        """Close every flow idle for longer than the timeout at time ``now``."""
        stale = [k for k, r in self.active.items() if now - r.last_ts > self.idle_timeout]
        return [self._close(k) for k in stale]

    def flush(self):
        flows = list(self.active.values())
        self.active.clear()
        return flows


def assemble_flows(packets, idle_timeout=DEFAULT_IDLE_TIMEOUT, stats=None):
    """Group packets into :class:`FlowRecord` objects ordered by first packet.

    If ``stats`` is a dict it receives ``packets``, ``skipped`` and ``flows``.
    """
    asm = FlowAssembler(idle_timeout)
    flows = []
    for pkt in packets:
        flows.extend(asm.add(pkt))
    flows.extend(asm.flush())
    flows.sort(key=lambda f: (f.first_ts, f.seq))
    if stats is not None:
        stats.update(packets=asm.seen, skipped=asm.skipped, flows=len(flows))
    return flows


def _port_match(flow, ports):
    k = flow.key
    return k.a_port in ports or k.b_port in ports


def extract_features(flow):
    """Compute the 28-value feature vector of a flow, in ``FEATURE_NAMES`` order."""
    n = flow.packets
    if n < 1:
        raise EmptyFlow("flow has no packets")
    dur = flow.last_ts - flow.first_ts
    denom = max(dur, RATE_EPSILON)
    kinds = flow.kinds
    ip_flow = KIND_IPV4 in kinds or KIND_IPV6 in kinds
    proto = flow.key.proto
    values = {
        "flow_duration": dur,
        "header_length": flow.header_bytes,
        "protocol_type": proto,
        "duration": flow.ttl_sum / flow.ttl_packets if flow.ttl_packets else 0.0,
        "rate": n / denom,
        "srate": flow.fwd_packets / denom,
        "drate": flow.bwd_packets / denom,
        "flag_number": flow.flag_bits,
        "ack_count": flow.ack_count,
        "syn_count": flow.syn_count,
        "fin_count": flow.fin_count,
        "urg_count": flow.urg_count,
        "rst_count": flow.rst_count,
        "tcp": float(ip_flow and proto == 6),
        "udp": float(ip_flow and proto == 17),
        "arp": float(KIND_ARP in kinds),
        "icmp": float(ip_flow and proto in (1, 58)),
        "ipv": float(KIND_IPV4 in kinds),
        "llc": float(KIND_LLC in kinds),
        "tot_sum": flow.payload_bytes,
    }
    for name, ports in APP_PORTS.items():
        transport = (17,) if name == "dhcp" else (6, 17)
        values[name] = float(ip_flow and proto in transport and _port_match(flow, ports))
    return np.array([values[name] for name in FEATURE_NAMES], dtype=np.float64)


FLOW_ID_COLUMNS = ("src_ip", "src_port", "dst_ip", "dst_port", "first_ts", "packets")


def flow_identity(flow):
    kind = KIND_IPV6 if KIND_IPV6 in flow.kinds else KIND_IPV4
    (sip, sport), (dip, dport) = flow.initiator, flow.responder
    return (format_ip(sip, kind), sport, format_ip(dip, kind), dport,
            repr(float(flow.first_ts)), flow.packets)


def write_feature_csv(flows, path, label="Benign", label_column="label"):
    """Write one feature row per flow, followed by the label and flow identity columns."""
    with atomic_write(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*FEATURE_NAMES, label_column, *FLOW_ID_COLUMNS])
        for flow in flows:
            vec = extract_features(flow)
            writer.writerow([*(repr(float(v)) for v in vec), label, *flow_identity(flow)])
