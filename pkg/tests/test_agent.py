import json
import socket
import threading
import time

import numpy as np
import pytest

from greenguard import detector, pipeline, synthetic
from greenguard.agent import Hub, HubThread, run_sensor, wire
from greenguard.agent.sensor import backoff_delays, load_normalizer, save_normalizer
from greenguard.autoenc import row_errors
from greenguard.errors import HubUnreachable, ModelSchemaMismatch
from greenguard.flowmeter import decode_pcap

from fixtures import captures


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def raw_client(address, msgs, n_acks, out):
    with socket.create_connection(address, timeout=5) as sock:
        sock.sendall(b"".join(wire.encode_frame(m) for m in msgs))
        dec, got = wire.FrameDecoder(), []
        while len(got) < n_acks:
            data = sock.recv(4096)
            if not data:
                break
            got.extend(dec.feed(data))
        out.append(got)


def test_two_sensors_loopback(tmp_path, trained_model):
    rng = np.random.default_rng(0)
    rows = rng.uniform(0, 1.2, size=(20, 28)).astype(np.float32)
    expected_alerts = int(np.sum(row_errors(trained_model, rows.astype(np.float64)) > trained_model.threshold))
    alerts = tmp_path / "alerts.jsonl"
    hub = Hub(trained_model, alert_path=alerts)
    with HubThread(hub) as ht:
        results = []
        threads = [
            threading.Thread(target=raw_client, args=(ht.address, [
                wire.FlowFeatures(sid, float(i), "MQTT", rows[sid * 10 + i].tolist()) for i in range(10)
            ], 10, results))
            for sid in (0, 1)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join(10)
    assert sorted(len(r) for r in results) == [10, 10]
    assert all(isinstance(m, wire.Ack) for r in results for m in r)
    assert hub.status.acks == 20 and hub.status.frames == 20
    assert hub.status.alerts == expected_alerts
    records = [json.loads(line) for line in alerts.read_text().splitlines()]
    assert len(records) == expected_alerts
    assert all(r["decision"] == "ZeroDay" and r["error"] > r["threshold"] for r in records)
    assert expected_alerts > 0
    assert {"ts", "sensor_id", "flow_first_ts", "protocol"} <= set(records[0])
    assert hub.status.sensors[0].frames == hub.status.sensors[1].frames == 10


def test_bad_frame_closes_only_its_connection(trained_model):
    hub = Hub(trained_model)
    with HubThread(hub) as ht:
        with socket.create_connection(ht.address, timeout=5) as bad:
            bad.sendall(wire.encode_frame(wire.FlowFeatures(9, 0.0, "MQTT", [0.1] * 27)))
            assert bad.recv(64) == b""
        good = []
        raw_client(ht.address, [wire.FlowFeatures(1, 0.0, "MQTT", [0.1] * 28)], 1, good)
    assert good == [[wire.Ack()]]
    assert hub.status.protocol_errors == 1 and hub.status.frames == 1


def test_heartbeat_gets_no_ack(trained_model):
    hub = Hub(trained_model)
    with HubThread(hub) as ht:
        out = []
        raw_client(ht.address, [wire.Heartbeat(), wire.FlowFeatures(1, 0.0, "CoAP", [0.0] * 28)], 1, out)
        time.sleep(0.05)
    assert out == [[wire.Ack()]]
    assert hub.status.heartbeats == 1 and hub.status.acks == 1


def test_verbose_mode_logs_every_frame(tmp_path, trained_model):
    alerts = tmp_path / "all.jsonl"
    hub = Hub(trained_model, alert_path=alerts, verbose=True)
    with HubThread(hub) as ht:
        raw_client(ht.address, [wire.FlowFeatures(1, 0.0, "MQTT", [0.0] * 28)] * 3, 3, [])
    assert len(alerts.read_text().splitlines()) == 3


def test_benign_replay_false_alarms_match_detector(benchmark_run):
    model = benchmark_run.model
    test = benchmark_run.test.subset(benchmark_run.test.benign_mask)
    rows = pipeline.normalize_rows(model, test.X).astype(np.float32)
    hub = Hub(model)
    with HubThread(hub) as ht:
        msgs = [wire.FlowFeatures(1, float(i), "MQTT", r.tolist()) for i, r in enumerate(rows)]
        raw_client(ht.address, msgs, len(msgs), [])
    report = detector.evaluate_errors(row_errors(model, rows.astype(np.float64)), test.labels, model.threshold)
    assert hub.status.alerts == report.confusion["fp"]
    assert hub.status.alerts / len(rows) <= 0.05


def test_schema_mismatch_rejected():
    ds = synthetic.make_benchmark(200, 20, seed=1, n_features=10)
    with pytest.raises(ModelSchemaMismatch):
        Hub(pipeline.train_detector(ds, seed=1).model)


def replay(model, pcap):
    hub = Hub(model)
    with HubThread(hub) as ht:
        stats = run_sensor(pcap, hub_address=ht.address, normalization=model.normalization)
        time.sleep(0.05)
    return stats, hub.status


def test_sensor_ships_one_frame_per_flow(tmp_path, trained_model):
    pcap = captures.write(tmp_path / "mixed.pcap", captures.mixed())
    stats, status = replay(trained_model, pcap)
    assert stats.flows == 3 and stats.frames_sent == 3 and stats.acks == 3
    assert stats.dropped_packets == 12 and stats.frames_dropped == 0
    assert status.frames == 3 and status.acks == 3


def test_loopback_alerts_reproducible(tmp_path):
    pcap = captures.write(tmp_path / "mqtt.pcap", captures.mqtt_sessions())
    ds = synthetic.make_benchmark(800, 80, seed=3)
    counts = []
    for _ in range(2):
        model = pipeline.train_detector(ds, seed=3).model
        _, status = replay(model, pcap)
        counts.append((status.frames, status.alerts))
    assert counts[0] == counts[1] and counts[0][0] == 3


def decoded(tmp_path, packets):
    return list(decode_pcap(captures.write(tmp_path / "c.pcap", packets)))


def test_no_iot_traffic_sends_heartbeats_only(tmp_path, trained_model):
    packets = decoded(tmp_path, captures.web_traffic())

    def slow():
        for p in packets:
            time.sleep(0.05)
            yield p

    hub = Hub(trained_model)
    with HubThread(hub) as ht:
        stats = run_sensor(slow(), hub_address=ht.address, heartbeat_interval=0.1)
        time.sleep(0.05)
    assert stats.frames_sent == 0 and stats.flows == 0
    assert stats.heartbeats >= 2 and hub.status.frames == 0
    assert hub.status.heartbeats == stats.heartbeats


def test_backoff_schedule():
    gen = backoff_delays()
    assert [next(gen) for _ in range(9)] == [1, 2, 4, 8, 16, 32, 60, 60, 60]


def test_unreachable_hub_backs_off():
    slept = []
    with pytest.raises(HubUnreachable):
        run_sensor([], hub_address=("127.0.0.1", free_port()), max_retries=8, sleep=slept.append)
    assert slept == [1, 2, 4, 8, 16, 32, 60, 60]


def test_frames_dropped_when_hub_goes_away(tmp_path, trained_model):
    packets = decoded(tmp_path, captures.mqtt_sessions())
    first_of_second = next(i for i, p in enumerate(packets) if p.ts >= captures.T0 + 100)
    hub = Hub(trained_model)
    ht = HubThread(hub)
    ht.start()

    def source():
        yield from packets[:first_of_second + 1]
        time.sleep(0.3)  # let the Ack for the first flow arrive
        ht.stop()
        time.sleep(0.3)
        yield from packets[first_of_second + 1:]

    slept = []
    stats = run_sensor(source(), hub_address=ht.address, max_retries=2, sleep=slept.append,
                       ack_timeout=0.5)
    assert stats.frames_sent == 1 and stats.frames_dropped == 2 and stats.acks == 1
    assert hub.status.frames == 1
    assert slept[:2] == [1, 2]


def test_normalizer_sidecar_roundtrip(tmp_path, trained_model):
    path = tmp_path / "norm.json"
    save_normalizer(trained_model.normalization, path)
    assert load_normalizer(path) == trained_model.normalization
