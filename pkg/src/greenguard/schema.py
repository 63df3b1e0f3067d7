"""Feature schema and attack taxonomy shared by every stage of the pipeline."""

import enum
import re

FEATURE_NAMES = (
    "flow_duration", "header_length", "protocol_type", "duration",
    "rate", "srate", "drate", "flag_number",
    "ack_count", "syn_count", "fin_count", "urg_count", "rst_count",
    "http", "https", "dns", "telnet", "smtp", "ssh", "irc",
    "tcp", "udp", "dhcp", "arp", "icmp", "ipv", "llc",
    "tot_sum",
)
N_FEATURES = len(FEATURE_NAMES)

INDICATOR_FEATURES = frozenset(FEATURE_NAMES[13:27])


def normalize_name(name):
    """Canonical form of a column name: ``"Protocol Type"`` -> ``"protocol_type"``."""
    return re.sub(r"[\s\-]+", "_", name.strip().lower())


class AttackClass(enum.Enum):
    BENIGN = "Benign"
    DDOS = "DDoS"
    DOS = "DoS"
    RECON = "Recon"
    WEB_BASED = "WebBased"
    BRUTE_FORCE = "BruteForce"
    SPOOFING = "Spoofing"
    MIRAI = "Mirai"

    @property
    def is_attack(self):
        return self is not AttackClass.BENIGN

    @classmethod
    def parse(cls, text):
        """Parse a canonical class name (case-insensitive) or a CICIoT2023 fine-grained label.

        >>> AttackClass.parse("web-based")
        <AttackClass.WEB_BASED: 'WebBased'>
        >>> AttackClass.parse("DDoS-ICMP_Flood")
        <AttackClass.DDOS: 'DDoS'>
        """
        key = _squash(text)
        if key in _CANONICAL:
            return _CANONICAL[key]
        for prefix, klass in _FINE_PREFIXES:
            if key.startswith(prefix):
                return klass
        for fragment, klass in _FINE_FRAGMENTS:
            if fragment in key:
                return klass
        raise ValueError(f"unknown attack class {text!r}")


def _squash(text):
    return re.sub(r"[^a-z0-9]", "", text.strip().lower())


_CANONICAL = {_squash(c.value): c for c in AttackClass}
_CANONICAL.update({"benigntraffic": AttackClass.BENIGN, "normal": AttackClass.BENIGN})

# CICIoT2023 publishes 34 fine labels; these fold them into the 8 categories.
_FINE_PREFIXES = (
    ("ddos", AttackClass.DDOS),
    ("dos", AttackClass.DOS),
    ("mirai", AttackClass.MIRAI),
    ("recon", AttackClass.RECON),
    ("vulnerabilityscan", AttackClass.RECON),
    ("benign", AttackClass.BENIGN),
)
_FINE_FRAGMENTS = (
    ("spoofing", AttackClass.SPOOFING),
    ("bruteforce", AttackClass.BRUTE_FORCE),
    ("browserhijacking", AttackClass.WEB_BASED),
    ("backdoor", AttackClass.WEB_BASED),
    ("xss", AttackClass.WEB_BASED),
    ("upload", AttackClass.WEB_BASED),
    ("sqlinjection", AttackClass.WEB_BASED),
    ("commandinjection", AttackClass.WEB_BASED),
)
