"""Build Ethernet frames and classic pcap files from scratch.

Used for test fixtures, demo captures and the decoder benchmark.
"""

import ipaddress
import struct

from ._io import atomic_write

_MAC_A = bytes.fromhex("020000000001")
_MAC_B = bytes.fromhex("020000000002")


def _ip(addr):
    return int(ipaddress.IPv4Address(addr)).to_bytes(4, "big")


def ethernet(payload, ethertype, src_mac=_MAC_A, dst_mac=_MAC_B):
    return dst_mac + src_mac + struct.pack(">H", ethertype) + payload


def ipv4(src, dst, proto, l4, ttl=64, ident=0):
    total = 20 + len(l4)
    hdr = struct.pack(">BBHHHBBH4s4s", 0x45, 0, total, ident, 0, ttl, proto, 0, _ip(src), _ip(dst))
    return hdr + l4


def tcp(sport, dport, flags, payload=b"", seq=0, ack=0):
    return struct.pack(">HHIIBBHHH", sport, dport, seq, ack, 5 << 4, flags, 65535, 0, 0) + payload


def udp(sport, dport, payload=b""):
    return struct.pack(">HHHH", sport, dport, 8 + len(payload), 0) + payload


def icmp_echo(payload=b""):
    return struct.pack(">BBHHH", 8, 0, 0, 0, 0) + payload


def tcp_frame(src, sport, dst, dport, flags, payload=b"", ttl=64):
    return ethernet(ipv4(src, dst, 6, tcp(sport, dport, flags, payload), ttl=ttl), 0x0800)


def udp_frame(src, sport, dst, dport, payload=b"", ttl=64):
    return ethernet(ipv4(src, dst, 17, udp(sport, dport, payload), ttl=ttl), 0x0800)


def icmp_frame(src, dst, payload=b"", ttl=64):
    return ethernet(ipv4(src, dst, 1, icmp_echo(payload), ttl=ttl), 0x0800)


def arp_frame(sender_ip, target_ip, op=1):
    body = struct.pack(">HHBBH6s4s6s4s", 1, 0x0800, 6, 4, op,
                       _MAC_A, _ip(sender_ip), b"\x00" * 6, _ip(target_ip))
    return ethernet(body, 0x0806, dst_mac=b"\xff" * 6)


def llc_frame(payload=b"\x42\x42\x03"):
    return ethernet(payload, len(payload))


def pcap_bytes(packets, big_endian=False, nanosecond=False, linktype=1, snaplen=65535):
    """Serialize ``(timestamp, frame_bytes)`` pairs as a classic pcap image."""
    e = ">" if big_endian else "<"
    magic = 0xA1B23C4D if nanosecond else 0xA1B2C3D4
    scale = 1_000_000_000 if nanosecond else 1_000_000
    out = [struct.pack(e + "IHHiIII", magic, 2, 4, 0, 0, snaplen, linktype)]
    for ts, frame in packets:
        sec = int(ts)
        frac = int(round((ts - sec) * scale))
        if frac >= scale:
            sec, frac = sec + 1, frac - scale
        out.append(struct.pack(e + "IIII", sec, frac, len(frame), len(frame)))
        out.append(frame)
    return b"".join(out)


def write_pcap(path, packets, **kwargs):
    with atomic_write(path, "wb") as fh:
        fh.write(pcap_bytes(packets, **kwargs))


def mqtt_session(client, broker, sport, t0, exchanges=2, dport=1883):
    """A small TCP session to an MQTT broker: handshake, publishes, teardown."""
    SYN, ACK, PSH, FIN = 0x02, 0x10, 0x08, 0x01
    pkts = [
        (t0, tcp_frame(client, sport, broker, dport, SYN)),
        (t0 + 0.001, tcp_frame(broker, dport, client, sport, SYN | ACK)),
        (t0 + 0.002, tcp_frame(client, sport, broker, dport, ACK)),
    ]
    t = t0 + 0.01
    for i in range(exchanges):
        publish = b"\x30" + bytes([10 + i]) + b"\x00\x03t/a" + b"x" * (5 + i)
        pkts.append((t, tcp_frame(client, sport, broker, dport, PSH | ACK, publish)))
        pkts.append((t + 0.001, tcp_frame(broker, dport, client, sport, ACK)))
        t += 0.05
    pkts.append((t, tcp_frame(client, sport, broker, dport, FIN | ACK)))
    pkts.append((t + 0.001, tcp_frame(broker, dport, client, sport, FIN | ACK)))
    pkts.append((t + 0.002, tcp_frame(client, sport, broker, dport, ACK)))
    return pkts
