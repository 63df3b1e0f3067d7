"""Sensor agent: filter traffic, build flows, ship normalized feature frames to the hub."""

import json
import logging
import socket
import threading
import time
from dataclasses import dataclass

import numpy as np

from .. import _accel
from ..datasets import NormalizationParams, apply_normalizer
from ..errors import CaptureError, HubUnreachable
from ..flowmeter import (
    DEFAULT_IDLE_TIMEOUT,
    FlowAssembler,
    PacketMeta,
    decode_pcap,
    extract_features,
)
from ..smfilter import MonitorConfig, filter_stream
from . import wire

log = logging.getLogger(__name__)

HEARTBEAT_INTERVAL = 5.0
BACKOFF_BASE = 1.0
BACKOFF_FACTOR = 2.0
BACKOFF_CAP = 60.0


def backoff_delays(base=BACKOFF_BASE, factor=BACKOFF_FACTOR, cap=BACKOFF_CAP):
    """Infinite sequence ``base, base*factor, ...`` clipped at ``cap``."""
    delay = base
    while True:
        yield min(delay, cap)
        delay *= factor


@dataclass
class SensorStats:
    packets: int = 0
    kept: int = 0
    dropped_packets: int = 0
    skipped: int = 0
    flows: int = 0
    frames_sent: int = 0
    frames_dropped: int = 0
    acks: int = 0
    heartbeats: int = 0
    reconnects: int = 0
    connect_attempts: int = 0

    def as_dict(self):
        return dict(self.__dict__)

    def summary(self):
        return "".join(f"{k}={v}\n" for k, v in self.as_dict().items())


class HubLink:
    """Blocking connection to the hub with reconnect/backoff and an Ack reader thread."""

    def __init__(self, address, stats, max_retries=6, backoff=None, sleep=time.sleep,
                 connect_timeout=5.0):
        self.address = tuple(address)
        self.stats = stats
        self.max_retries = max_retries
        self._backoff = backoff or (BACKOFF_BASE, BACKOFF_FACTOR, BACKOFF_CAP)
        self._sleep = sleep
        self._timeout = connect_timeout
        self._sock = None
        self._lock = threading.Lock()
        self._acks = threading.Condition()
        self._reader = None
        self.delays = []

    @property
    def connected(self):
        return self._sock is not None

    def connect(self):
        """Connect, retrying up to ``max_retries`` times with exponential backoff."""
        delays = backoff_delays(*self._backoff)
        last = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                d = next(delays)
                self.delays.append(d)
                self._sleep(d)
            self.stats.connect_attempts += 1
            try:
                sock = socket.create_connection(self.address, timeout=self._timeout)
            except OSError as exc:
                last = exc
                continue
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._sock = sock
            self._reader = threading.Thread(target=self._read_acks, args=(sock,), daemon=True)
            self._reader.start()
            return
        raise HubUnreachable(f"hub {self.address[0]}:{self.address[1]} unreachable: {last}")

    def _read_acks(self, sock):
        dec = wire.FrameDecoder()
        try:
            while True:
                data = sock.recv(65536)
                if not data:
                    break
                for msg in dec.feed(data):
                    if isinstance(msg, wire.Ack):
                        with self._acks:
                            self.stats.acks += 1
                            self._acks.notify_all()
        except (OSError, wire.MalformedPayload, Exception) as exc:  # connection is done either way
            log.debug("ack reader stopped: %s", exc)
        with self._lock:
            if self._sock is sock:
                self._sock = None

    def _drop_socket(self):
        sock, self._sock = self._sock, None
        if sock is not None:
            try:
                sock.close()
            except OSError:
                pass

    def send(self, msg):
        """Send a message; reconnect once on failure. Returns False if it was dropped."""
        data = wire.encode_frame(msg)
        with self._lock:
            for reconnect in (False, True):
                if reconnect or self._sock is None:
                    self._drop_socket()
                    try:
                        self.stats.reconnects += 1
                        self.connect()
                    except HubUnreachable as exc:
                        log.warning("%s", exc)
                        return False
                try:
                    self._sock.sendall(data)
                    return True
                except OSError as exc:
                    log.info("send failed (%s); reconnecting", exc)
            return False

    def wait_acks(self, expected, timeout):
        deadline = time.monotonic() + timeout
        with self._acks:
            while self.stats.acks < expected:
                left = deadline - time.monotonic()
                if left <= 0:
                    return False
                self._acks.wait(left)
        return True

    def close(self):
        with self._lock:
            sock = self._sock
            self._sock = None
        if sock is not None:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()
        if self._reader is not None:
            self._reader.join(timeout=2)


class LiveCapture:
    """Raw Ethernet capture from a Linux interface (needs CAP_NET_RAW)."""

    ETH_P_ALL = 0x0003

    def __init__(self, interface, snaplen=65535):
        self.interface = interface
        self.snaplen = snaplen
        self._stop = threading.Event()
        try:
            self._sock = socket.socket(socket.AF_PACKET, socket.SOCK_RAW, socket.htons(self.ETH_P_ALL))
            self._sock.bind((interface, 0))
            self._sock.settimeout(0.5)
        except (OSError, AttributeError) as exc:
            raise CaptureError(f"cannot capture on {interface!r}: {exc}") from exc

    def stop(self):
        self._stop.set()

    def __iter__(self):
        parse = _accel.parse_frame
        try:
            while not self._stop.is_set():
                try:
                    data = self._sock.recv(self.snaplen)
                except socket.timeout:
                    continue
                yield PacketMeta._make(parse(data, time.time(), len(data)))
        finally:
            self._sock.close()


def flow_protocol(flow, cfg):
    k = flow.key
    return cfg.match(k.proto, k.b_port) or cfg.match(k.proto, k.a_port) or "unknown"


def load_normalizer(path):
    with open(path, encoding="utf-8") as fh:
        return NormalizationParams.from_dict(json.load(fh))


def save_normalizer(params, path):
    from .._io import atomic_write
    with atomic_write(path, "w", encoding="utf-8") as fh:
        json.dump(params.to_dict(), fh)


def _packets(source):
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        try:
            return decode_pcap(source)
        except OSError as exc:
            raise CaptureError(str(exc)) from exc
    return iter(source)


def run_sensor(source, cfg=None, hub_address=("127.0.0.1", 7641), normalization=None,
               sensor_id=1, idle_timeout=DEFAULT_IDLE_TIMEOUT,
               heartbeat_interval=HEARTBEAT_INTERVAL, max_retries=6, backoff=None,
               sleep=time.sleep, ack_timeout=10.0):
    """Filter, featurize and forward flows from ``source`` to the hub.

    ``source`` is a pcap path, a :class:`LiveCapture`, or any iterable of
    :class:`PacketMeta`. One FlowFeatures frame is sent per closed flow;
    remaining flows are flushed when the source ends. Sending blocks when the
    hub is slow, which in turn stalls packet reading.

    Raises:
        HubUnreachable: the initial connection failed after all retries.
    """
    cfg = cfg or MonitorConfig()
    stats = SensorStats()
    link = HubLink(hub_address, stats, max_retries, backoff, sleep)
    link.connect()

    stop = threading.Event()

    def beat():
        while not stop.wait(heartbeat_interval):
            if link.connected and link.send(wire.Heartbeat()):
                stats.heartbeats += 1

    beater = threading.Thread(target=beat, name="greenguard-heartbeat", daemon=True)
    beater.start()

    def ship(flows):
        for flow in flows:
            stats.flows += 1
            vec = extract_features(flow)
            if normalization is not None:
                vec = apply_normalizer(normalization, vec)
            msg = wire.FlowFeatures(sensor_id, flow.first_ts, flow_protocol(flow, cfg),
                                    np.asarray(vec, dtype=np.float32).tolist())
            if link.send(msg):
                stats.frames_sent += 1
            else:
                stats.frames_dropped += 1

    try:
        kept, fstats = filter_stream(_packets(source), cfg)
        asm = FlowAssembler(idle_timeout)
        for pkt in kept:
            ship(asm.add(pkt))
        ship(sorted(asm.flush(), key=lambda f: (f.first_ts, f.seq)))
        stats.packets = fstats.total
        stats.kept = fstats.total_kept
        stats.dropped_packets = fstats.dropped
        stats.skipped = asm.skipped
        link.wait_acks(stats.frames_sent, ack_timeout)
    finally:
        stop.set()
        beater.join(timeout=heartbeat_interval + 1)
        link.close()
    return stats
