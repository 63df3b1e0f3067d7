"""Intrusion detection hub: accepts sensor connections, classifies flows, writes alerts."""

import asyncio
import datetime as _dt
import json
import logging
import signal
import sys
import threading
from dataclasses import dataclass, field

import numpy as np

from .. import detector
from ..autoenc import load_model
from ..errors import BadMagic, BindFailure, ModelSchemaMismatch, ProtocolError
from ..schema import FEATURE_NAMES
from . import wire

log = logging.getLogger(__name__)


@dataclass
class SensorCounters:
    frames: int = 0
    alerts: int = 0
    heartbeats: int = 0
    protocol_errors: int = 0
    last_seen: float = None


@dataclass
class HubStatus:
    connections: int = 0
    active: int = 0
    frames: int = 0
    acks: int = 0
    alerts: int = 0
    heartbeats: int = 0
    protocol_errors: int = 0
    sensors: dict = field(default_factory=dict)

    def summary(self):
        lines = [
            f"connections={self.connections}", f"active={self.active}", f"frames={self.frames}",
            f"acks={self.acks}", f"alerts={self.alerts}", f"heartbeats={self.heartbeats}",
            f"protocol_errors={self.protocol_errors}",
        ]
        for sid in sorted(self.sensors):
            c = self.sensors[sid]
            lines.append(f"sensor.{sid}.frames={c.frames}")
            lines.append(f"sensor.{sid}.alerts={c.alerts}")
            lines.append(f"sensor.{sid}.heartbeats={c.heartbeats}")
        return "\n".join(lines) + "\n"


class AlertSink:
    """Append-only JSON-lines alert log with a single serialized writer."""

    def __init__(self, path=None):
        self.path = path
        self._fh = open(path, "a", encoding="utf-8") if path else None
        self._lock = threading.Lock()
        self.count = 0

    def write(self, record):
        line = json.dumps(record, sort_keys=True) + "\n"
        with self._lock:
            self.count += 1
            if self._fh is not None:
                self._fh.write(line)
                self._fh.flush()

    def close(self):
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


def check_schema(model):
    if tuple(model.feature_names) != FEATURE_NAMES or model.input_dim != len(FEATURE_NAMES):
        raise ModelSchemaMismatch(
            f"model expects {model.input_dim} features {tuple(model.feature_names)[:3]}..., "
            f"the wire schema carries {len(FEATURE_NAMES)}"
        )


class Hub:
    """Asyncio TCP server holding one immutable detector model."""

    def __init__(self, model, cfg=None, alert_path=None, verbose=False, clock=None):
        check_schema(model)
        self.model = model
        self.cfg = cfg or detector.DetectorConfig.from_model(model)
        self.sink = AlertSink(alert_path)
        self.verbose = verbose
        self.status = HubStatus()
        self._server = None
        self._writers = set()
        self._clock = clock or (lambda: _dt.datetime.now(_dt.timezone.utc))

    async def start(self, host="127.0.0.1", port=0):
        try:
            self._server = await asyncio.start_server(self._handle, host, port)
        except OSError as exc:
            raise BindFailure(f"cannot listen on {host}:{port}: {exc}") from exc
        return self.address

    @property
    def address(self):
        sock = self._server.sockets[0]
        return sock.getsockname()[:2]

    async def serve_forever(self):
        async with self._server:
            await self._server.serve_forever()

    async def close(self):
        if self._server is not None:
            self._server.close()
            for writer in list(self._writers):
                writer.close()
            await self._server.wait_closed()
        self.sink.close()

    def _counters(self, sensor_id):
        return self.status.sensors.setdefault(sensor_id, SensorCounters())

    def handle_features(self, msg):
        """Classify one FlowFeatures message; returns the verdict."""
        if len(msg.features) != self.model.input_dim:
            raise wire.MalformedPayload(
                f"feature_count {len(msg.features)}, model expects {self.model.input_dim}"
            )
        x = np.asarray(msg.features, dtype=np.float64)
        verdict = detector.classify(self.model, self.cfg, x)
        c = self._counters(msg.sensor_id)
        c.frames += 1
        c.last_seen = msg.first_ts
        self.status.frames += 1
        if verdict.is_zero_day or self.verbose:
            if verdict.is_zero_day:
                c.alerts += 1
                self.status.alerts += 1
            self.sink.write({
                "ts": self._clock().isoformat(),
                "sensor_id": msg.sensor_id,
                "flow_first_ts": msg.first_ts,
                "protocol": msg.protocol_name,
                "error": verdict.error,
                "threshold": verdict.threshold,
                "decision": verdict.decision.value,
            })
        return verdict

    async def _handle(self, reader, writer):
        peer = writer.get_extra_info("peername")
        self.status.connections += 1
        self.status.active += 1
        sensor_id = None
        self._writers.add(writer)
        try:
            while True:
                msg = await wire.read_message(reader)
                if msg is None:
                    break
                if isinstance(msg, wire.FlowFeatures):
                    self.handle_features(msg)
                    sensor_id = msg.sensor_id
                    writer.write(wire.encode_frame(wire.Ack()))
                    self.status.acks += 1
                    await writer.drain()
                elif isinstance(msg, wire.Heartbeat):
                    # heartbeats carry no sensor id; credit the connection's last sensor
                    self.status.heartbeats += 1
                    if sensor_id is not None:
                        self._counters(sensor_id).heartbeats += 1
        except (ProtocolError, BadMagic) as exc:
            self.status.protocol_errors += 1
            log.warning("closing %s: protocol error: %s", peer, exc)
        except (ConnectionError, OSError) as exc:
            log.info("connection %s lost: %s", peer, exc)
        finally:
            self.status.active -= 1
            self._writers.discard(writer)
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass


class HubThread:
    """Run a :class:`Hub` on a private event loop in a background thread."""

    def __init__(self, hub, host="127.0.0.1", port=0):
        self.hub = hub
        self._host, self._port = host, port
        self._loop = asyncio.new_event_loop()
        self._thread = threading.Thread(target=self._run, name="greenguard-hub", daemon=True)
        self._ready = threading.Event()
        self._error = None
        self.address = None

    def _run(self):
        asyncio.set_event_loop(self._loop)
        try:
            self.address = self._loop.run_until_complete(self.hub.start(self._host, self._port))
        except Exception as exc:
            self._error = exc
            self._ready.set()
            return
        self._ready.set()
        self._loop.run_forever()
        self._loop.run_until_complete(self.hub.close())
        self._loop.close()

    def start(self):
        self._thread.start()
        self._ready.wait()
        if self._error is not None:
            raise self._error
        return self.address

    def stop(self):
        if self._thread.is_alive():
            self._loop.call_soon_threadsafe(self._loop.stop)
            self._thread.join(timeout=10)

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()


def run_hub(listen, model_path, cfg=None, alert_path=None, verbose=False, out=sys.stdout,
            ready=None):
    """Serve until SIGINT/SIGTERM. SIGUSR1 prints the status summary to ``out``."""
    host, port = listen
    model = load_model(model_path)
    hub = Hub(model, cfg, alert_path, verbose)

    async def main():
        loop = asyncio.get_running_loop()
        stop = asyncio.Event()
        address = await hub.start(host, port)
        print(f"listening={address[0]}:{address[1]}", file=out, flush=True)
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)
        if hasattr(signal, "SIGUSR1"):
            loop.add_signal_handler(signal.SIGUSR1, lambda: print(hub.status.summary(), file=out, flush=True))
        if ready is not None:
            ready(address)
        await stop.wait()
        await hub.close()

    asyncio.run(main())
    return hub.status
