"""Pure-Python packet decoding kernels.

Reference implementation of the contract shared with the compiled
``_kernels`` extension; both must return identical tuples for identical input.

A decoded packet is the tuple::

    (ts, wire_len, kind, ethertype, src_ip, dst_ip, src_port, dst_port,
     ip_proto, ttl, header_len, payload_len, tcp_flags, malformed)
"""

import struct

KIND_IPV4 = 0
KIND_IPV6 = 1
KIND_ARP = 2
KIND_LLC = 3
KIND_OTHER = 4

_ETH_VLAN = 0x8100
_ETH_IPV4 = 0x0800
_ETH_IPV6 = 0x86DD
_ETH_ARP = 0x0806

_u16 = struct.Struct(">H").unpack_from
_u32 = struct.Struct(">I").unpack_from


def _l4_header(data, off, end, proto):
    """Return (header_len, src_port, dst_port, flags) or None if truncated."""
    if proto == 6:
        if end - off < 20:
            return None
        hl = (data[off + 12] >> 4) * 4
        if hl < 20 or end - off < hl:
            return None
        return hl, _u16(data, off)[0], _u16(data, off + 2)[0], data[off + 13]
    if proto == 17:
        if end - off < 8:
            return None
        return 8, _u16(data, off)[0], _u16(data, off + 2)[0], 0
    if proto == 1 or proto == 58:
        if end - off < 8:
            return None
        return 8, 0, 0, 0
    return 0, 0, 0, 0


def parse_frame(data, ts, wire_len):
    """Decode one Ethernet frame (``data`` holds the captured bytes)."""
    cap = len(data)
    if cap < 14:
        return (ts, wire_len, KIND_OTHER, 0, 0, 0, 0, 0, 0, 0, cap, 0, 0, True)
    ethertype = _u16(data, 12)[0]
    l2 = 14
    if ethertype == _ETH_VLAN:
        if cap < 18:
            return (ts, wire_len, KIND_OTHER, ethertype, 0, 0, 0, 0, 0, 0, cap, 0, 0, True)
        ethertype = _u16(data, 16)[0]
        l2 = 18

    if ethertype <= 1500:
        return (ts, wire_len, KIND_LLC, ethertype, 0, 0, 0, 0, 0, 0,
                l2, max(wire_len - l2, 0), 0, False)

    if ethertype == _ETH_ARP:
        if cap < l2 + 28:
            return (ts, wire_len, KIND_ARP, ethertype, 0, 0, 0, 0, 0, 0, l2, 0, 0, True)
        src = _u32(data, l2 + 14)[0]
        dst = _u32(data, l2 + 24)[0]
        return (ts, wire_len, KIND_ARP, ethertype, src, dst, 0, 0, 0, 0,
                l2 + 28, 0, 0, False)

    if ethertype == _ETH_IPV4:
        off = l2
        if cap < off + 20 or (data[off] >> 4) != 4:
            return (ts, wire_len, KIND_IPV4, ethertype, 0, 0, 0, 0, 0, 0, l2, 0, 0, True)
        ihl = (data[off] & 0x0F) * 4
        total = _u16(data, off + 2)[0]
        frag = _u16(data, off + 6)[0] & 0x1FFF
        ttl = data[off + 8]
        proto = data[off + 9]
        src = _u32(data, off + 12)[0]
        dst = _u32(data, off + 16)[0]
        if ihl < 20 or cap < off + ihl or total < ihl or l2 + total > wire_len:
            return (ts, wire_len, KIND_IPV4, ethertype, src, dst, 0, 0, proto, ttl,
                    l2, 0, 0, True)
        end = min(cap, off + total)
        l4 = (0, 0, 0, 0) if frag else _l4_header(data, off + ihl, end, proto)
        if l4 is None or total < ihl + l4[0]:
            return (ts, wire_len, KIND_IPV4, ethertype, src, dst, 0, 0, proto, ttl,
                    l2 + ihl, 0, 0, True)
        hl, sport, dport, flags = l4
        return (ts, wire_len, KIND_IPV4, ethertype, src, dst, sport, dport, proto, ttl,
                l2 + ihl + hl, total - ihl - hl, flags, False)

    if ethertype == _ETH_IPV6:
        off = l2
        if cap < off + 40 or (data[off] >> 4) != 6:
            return (ts, wire_len, KIND_IPV6, ethertype, 0, 0, 0, 0, 0, 0, l2, 0, 0, True)
        plen = _u16(data, off + 4)[0]
        proto = data[off + 6]
        ttl = data[off + 7]
        src = int.from_bytes(data[off + 8:off + 24], "big")
        dst = int.from_bytes(data[off + 24:off + 40], "big")
        if l2 + 40 + plen > wire_len:
            return (ts, wire_len, KIND_IPV6, ethertype, src, dst, 0, 0, proto, ttl,
                    l2 + 40, 0, 0, True)
        end = min(cap, off + 40 + plen)
        l4 = _l4_header(data, off + 40, end, proto)
        if l4 is None or plen < l4[0]:
            return (ts, wire_len, KIND_IPV6, ethertype, src, dst, 0, 0, proto, ttl,
                    l2 + 40, 0, 0, True)
        hl, sport, dport, flags = l4
        return (ts, wire_len, KIND_IPV6, ethertype, src, dst, sport, dport, proto, ttl,
                l2 + 40 + hl, plen - hl, flags, False)

    return (ts, wire_len, KIND_OTHER, ethertype, 0, 0, 0, 0, 0, 0,
            l2, max(wire_len - l2, 0), 0, False)


def parse_records(buf, big_endian, nanosecond):
    """Decode every complete pcap record in ``buf``.

    Returns ``(packets, consumed)``; ``consumed`` is the byte offset of the first
    record that is not fully contained in ``buf``.
    """
    rec = struct.Struct(">IIII" if big_endian else "<IIII").unpack_from
    scale = 1e-9 if nanosecond else 1e-6
    out = []
    off = 0
    n = len(buf)
    while n - off >= 16:
        sec, frac, incl, orig = rec(buf, off)
        if n - off - 16 < incl:
            break
        start = off + 16
        out.append(parse_frame(bytes(buf[start:start + incl]), sec + frac * scale, orig))
        off = start + incl
    return out, off
