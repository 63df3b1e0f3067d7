"""Sensor-side traffic filter: keep only IoT application-protocol packets."""

import collections
import enum
import ipaddress
from dataclasses import dataclass, field
from importlib import resources
from typing import NamedTuple

from .flowmeter import KIND_IPV4, KIND_IPV6

_TRANSPORT_PROTO = {"TCP": 6, "UDP": 17}


@dataclass(frozen=True)
class FilterRule:
    protocol_name: str
    transport: str
    ports: frozenset

    def __post_init__(self):
        transport = self.transport.upper()
        if transport not in _TRANSPORT_PROTO:
            raise ValueError(f"{self.protocol_name}: transport must be TCP or UDP, got {self.transport!r}")
        ports = frozenset(int(p) for p in self.ports)
        if not ports:
            raise ValueError(f"{self.protocol_name}: rule needs at least one port")
        bad = sorted(p for p in ports if not 1 <= p <= 65535)
        if bad:
            raise ValueError(f"{self.protocol_name}: ports out of range: {bad}")
        object.__setattr__(self, "transport", transport)
        object.__setattr__(self, "ports", ports)

    @property
    def ip_proto(self):
        return _TRANSPORT_PROTO[self.transport]

    def format(self):
        return f"{self.protocol_name} {self.transport} {','.join(str(p) for p in sorted(self.ports))}"


def parse_rules(text):
    """Parse rule lines ``NAME TCP|UDP port[,port...]``; ``#`` starts a comment."""
    rules = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 2)
        if len(parts) != 3:
            raise ValueError(f"rule line {lineno}: expected 'NAME TCP|UDP port[,port...]'")
        name, transport, ports = parts
        try:
            port_list = [int(p) for p in ports.replace(" ", "").split(",") if p]
        except ValueError:
            raise ValueError(f"rule line {lineno}: bad port list {ports!r}") from None
        rules.append(FilterRule(name, transport, frozenset(port_list)))
    return rules


def load_rules(path):
    with open(path, encoding="utf-8") as fh:
        return parse_rules(fh.read())


def format_rules(rules):
    return "".join(rule.format() + "\n" for rule in rules)


def default_rules():
    """The five IoT protocols and nine ports the sensor monitors out of the box."""
    text = resources.files("greenguard").joinpath("data/iot_ports.rules").read_text(encoding="utf-8")
    return parse_rules(text)


class Direction(enum.Enum):
    OUTBOUND = "outbound"
    INBOUND = "inbound"
    INTERNAL = "internal"
    EXTERNAL = "external"


class FilterDecision(NamedTuple):
    keep: bool
    protocol: str = None
    direction: Direction = None


DROP = FilterDecision(False)


@dataclass
class MonitorConfig:
    monitored_cidrs: list = field(default_factory=list)
    rules: list = field(default_factory=default_rules)
    promiscuous: bool = False

    def __post_init__(self):
        if not self.rules:
            raise ValueError("monitor config needs at least one rule")
        self.monitored_cidrs = [ipaddress.ip_network(c, strict=False) for c in self.monitored_cidrs]
        self._index = {}
        for rule in self.rules:
            for port in rule.ports:
                self._index.setdefault((rule.ip_proto, port), rule.protocol_name)

    def match(self, ip_proto, port):
        return self._index.get((ip_proto, port))

    def is_monitored(self, addr, kind):
        if not self.monitored_cidrs:
            return False
        ip = ipaddress.IPv6Address(addr) if kind == KIND_IPV6 else ipaddress.IPv4Address(addr)
        return any(ip.version == net.version and ip in net for net in self.monitored_cidrs)


def classify_packet(pkt, cfg):
    """Keep a packet whose transport and source-or-destination port match a rule."""
    if pkt.kind not in (KIND_IPV4, KIND_IPV6) or pkt.malformed:
        return DROP
    name = cfg.match(pkt.ip_proto, pkt.dst_port) or cfg.match(pkt.ip_proto, pkt.src_port)
    if name is None:
        return DROP
    src_in = cfg.is_monitored(pkt.src_ip, pkt.kind)
    dst_in = cfg.is_monitored(pkt.dst_ip, pkt.kind)
    if src_in and dst_in:
        direction = Direction.INTERNAL
    elif src_in:
        direction = Direction.OUTBOUND
    elif dst_in:
        direction = Direction.INBOUND
    else:
        direction = Direction.EXTERNAL
    return FilterDecision(True, name, direction)


@dataclass
class FilterStats:
    kept: collections.Counter = field(default_factory=collections.Counter)
    dropped: int = 0
    dropped_by_port: collections.Counter = field(default_factory=collections.Counter)

    @property
    def total_kept(self):
        return sum(self.kept.values())

    @property
    def total(self):
        return self.total_kept + self.dropped

    def __add__(self, other):
        return FilterStats(self.kept + other.kept, self.dropped + other.dropped,
                           self.dropped_by_port + other.dropped_by_port)

    def as_dict(self):
        out = {f"kept.{name}": n for name, n in sorted(self.kept.items())}
        out["kept"] = self.total_kept
        out["dropped"] = self.dropped
        return out


def filter_stream(packets, cfg):
    """Lazily filter ``packets``.

    Returns ``(kept, stats)``: ``kept`` is a generator preserving input order and
    ``stats`` is filled in as the generator is consumed.
    """
    stats = FilterStats()

    def run():
        for pkt in packets:
            decision = classify_packet(pkt, cfg)
            if decision.keep:
                stats.kept[decision.protocol] += 1
                yield pkt
            else:
                stats.dropped += 1
                if cfg.promiscuous:
                    stats.dropped_by_port[(pkt.ip_proto, min(pkt.src_port, pkt.dst_port))] += 1

    return run(), stats
