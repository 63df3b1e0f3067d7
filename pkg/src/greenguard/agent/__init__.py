"""Sensor agent, detection hub and the binary frame protocol between them."""

from .hub import Hub, HubThread, run_hub
from .sensor import LiveCapture, SensorStats, run_sensor
from .wire import Ack, FlowFeatures, FrameDecoder, Heartbeat, decode_frame, encode_frame

__all__ = [
    "Ack", "FlowFeatures", "FrameDecoder", "Heartbeat", "Hub", "HubThread", "LiveCapture",
    "SensorStats", "decode_frame", "encode_frame", "run_hub", "run_sensor",
]
