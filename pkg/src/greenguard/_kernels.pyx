# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled packet decoding kernels; same contract as ``_kernels_py``."""

from libc.stdint cimport uint32_t

cdef enum:
    KIND_IPV4 = 0
    KIND_IPV6 = 1
    KIND_ARP = 2
    KIND_LLC = 3
    KIND_OTHER = 4


cdef inline unsigned int be16(const unsigned char* p) nogil:
    return (<unsigned int>p[0] << 8) | p[1]


cdef inline uint32_t be32(const unsigned char* p) nogil:
    return ((<uint32_t>p[0] << 24) | (<uint32_t>p[1] << 16)
            | (<uint32_t>p[2] << 8) | <uint32_t>p[3])


cdef inline uint32_t le32(const unsigned char* p) nogil:
    return ((<uint32_t>p[3] << 24) | (<uint32_t>p[2] << 16)
            | (<uint32_t>p[1] << 8) | <uint32_t>p[0])


cdef inline int l4_header(const unsigned char* p, Py_ssize_t avail, int proto,
                          int* hl, int* sport, int* dport, int* flags) nogil:
    # returns 0 on success, -1 when the captured bytes cut the header short
    hl[0] = 0
    sport[0] = 0
    dport[0] = 0
    flags[0] = 0
    if proto == 6:
        if avail < 20:
            return -1
        hl[0] = (p[12] >> 4) * 4
        if hl[0] < 20 or avail < hl[0]:
            return -1
        sport[0] = be16(p)
        dport[0] = be16(p + 2)
        flags[0] = p[13]
    elif proto == 17:
        if avail < 8:
            return -1
        hl[0] = 8
        sport[0] = be16(p)
        dport[0] = be16(p + 2)
    elif proto == 1 or proto == 58:
        if avail < 8:
            return -1
        hl[0] = 8
    return 0


cdef tuple _parse(const unsigned char* d, Py_ssize_t cap, double ts, long wire_len):
    cdef unsigned int ethertype
    cdef Py_ssize_t l2 = 14, off, end
    cdef int ihl, total, frag, ttl, proto, plen
    cdef int hl, sport, dport, flags, rc
    cdef object src, dst

    if cap < 14:
        return (ts, wire_len, KIND_OTHER, 0, 0, 0, 0, 0, 0, 0, cap, 0, 0, True)
    ethertype = be16(d + 12)
    if ethertype == 0x8100:
        if cap < 18:
            return (ts, wire_len, KIND_OTHER, ethertype, 0, 0, 0, 0, 0, 0, cap, 0, 0, True)
        ethertype = be16(d + 16)
        l2 = 18

    if ethertype <= 1500:
        return (ts, wire_len, KIND_LLC, ethertype, 0, 0, 0, 0, 0, 0,
                l2, max(wire_len - l2, 0), 0, False)

    if ethertype == 0x0806:
        if cap < l2 + 28:
            return (ts, wire_len, KIND_ARP, ethertype, 0, 0, 0, 0, 0, 0, l2, 0, 0, True)
        return (ts, wire_len, KIND_ARP, ethertype, be32(d + l2 + 14), be32(d + l2 + 24),
                0, 0, 0, 0, l2 + 28, 0, 0, False)

    if ethertype == 0x0800:
        off = l2
        if cap < off + 20 or (d[off] >> 4) != 4:
            return (ts, wire_len, KIND_IPV4, ethertype, 0, 0, 0, 0, 0, 0, l2, 0, 0, True)
        ihl = (d[off] & 0x0F) * 4
        total = be16(d + off + 2)
        frag = be16(d + off + 6) & 0x1FFF
        ttl = d[off + 8]
        proto = d[off + 9]
        src = be32(d + off + 12)
        dst = be32(d + off + 16)
        if ihl < 20 or cap < off + ihl or total < ihl or l2 + total > wire_len:
            return (ts, wire_len, KIND_IPV4, ethertype, src, dst, 0, 0, proto, ttl,
                    l2, 0, 0, True)
        end = min(cap, off + total)
        if frag:
            hl = 0
            sport = 0
            dport = 0
            flags = 0
            rc = 0
        else:
            rc = l4_header(d + off + ihl, end - off - ihl, proto, &hl, &sport, &dport, &flags)
        if rc != 0 or total < ihl + hl:
            return (ts, wire_len, KIND_IPV4, ethertype, src, dst, 0, 0, proto, ttl,
                    l2 + ihl, 0, 0, True)
        return (ts, wire_len, KIND_IPV4, ethertype, src, dst, sport, dport, proto, ttl,
                l2 + ihl + hl, total - ihl - hl, flags, False)

    if ethertype == 0x86DD:
        off = l2
        if cap < off + 40 or (d[off] >> 4) != 6:
            return (ts, wire_len, KIND_IPV6, ethertype, 0, 0, 0, 0, 0, 0, l2, 0, 0, True)
        plen = be16(d + off + 4)
        proto = d[off + 6]
        ttl = d[off + 7]
        src = int.from_bytes(d[off + 8:off + 24], "big")
        dst = int.from_bytes(d[off + 24:off + 40], "big")
        if l2 + 40 + plen > wire_len:
            return (ts, wire_len, KIND_IPV6, ethertype, src, dst, 0, 0, proto, ttl,
                    l2 + 40, 0, 0, True)
        end = min(cap, off + 40 + plen)
        rc = l4_header(d + off + 40, end - off - 40, proto, &hl, &sport, &dport, &flags)
        if rc != 0 or plen < hl:
            return (ts, wire_len, KIND_IPV6, ethertype, src, dst, 0, 0, proto, ttl,
                    l2 + 40, 0, 0, True)
        return (ts, wire_len, KIND_IPV6, ethertype, src, dst, sport, dport, proto, ttl,
                l2 + 40 + hl, plen - hl, flags, False)

    return (ts, wire_len, KIND_OTHER, ethertype, 0, 0, 0, 0, 0, 0,
            l2, max(wire_len - l2, 0), 0, False)


def parse_frame(const unsigned char[:] data, double ts, long wire_len):
    cdef Py_ssize_t cap = data.shape[0]
    if cap == 0:
        return (ts, wire_len, KIND_OTHER, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, True)
    return _parse(&data[0], cap, ts, wire_len)


def parse_records(const unsigned char[:] buf, bint big_endian, bint nanosecond):
    cdef Py_ssize_t off = 0, n = buf.shape[0], start
    cdef const unsigned char* p
    cdef uint32_t sec, frac, incl, orig
    cdef double scale = 1e-9 if nanosecond else 1e-6
    cdef list out = []
    if n == 0:
        return out, 0
    p = &buf[0]
    while n - off >= 16:
        if big_endian:
            sec = be32(p + off)
            frac = be32(p + off + 4)
            incl = be32(p + off + 8)
            orig = be32(p + off + 12)
        else:
            sec = le32(p + off)
            frac = le32(p + off + 4)
            incl = le32(p + off + 8)
            orig = le32(p + off + 12)
        if n - off - 16 < <Py_ssize_t>incl:
            break
        start = off + 16
        if incl == 0:
            out.append((<double>sec + <double>frac * scale, <long>orig, KIND_OTHER,
                        0, 0, 0, 0, 0, 0, 0, 0, 0, 0, True))
        else:
            out.append(_parse(p + start, incl, <double>sec + <double>frac * scale, orig))
        off = start + incl
    return out, off
