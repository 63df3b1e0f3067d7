"""Seeded synthetic flow-feature benchmark.

Benign rows are Gaussian with low-rank correlation (a 4-dimensional latent
factor plus isotropic noise). Each attack class shifts the benign distribution
by three per-feature standard deviations along 8 of the 28 features; every
class uses its own feature subset and signs.
"""

import csv

import numpy as np

from ._io import atomic_write
from .datasets import LabeledDataset
from .schema import FEATURE_NAMES, AttackClass

N_SHIFTED = 8
SHIFT_SIGMAS = 3.0
LATENT_DIM = 4
NOISE = 0.1


def make_benchmark(n_benign=4000, n_per_attack=400, seed=0, n_features=len(FEATURE_NAMES)):
    rng = np.random.default_rng(seed)
    loading = rng.normal(size=(LATENT_DIM, n_features))
    sigma = np.sqrt((loading ** 2).sum(axis=0) + NOISE ** 2)
    center = rng.uniform(5.0, 50.0, size=n_features)
    scale = rng.uniform(0.5, 5.0, size=n_features)

    def draw(n):
        z = rng.normal(size=(n, LATENT_DIM))
        raw = z @ loading + NOISE * rng.normal(size=(n, n_features))
        return raw / sigma

    blocks = [draw(n_benign)]
    labels = [AttackClass.BENIGN] * n_benign
    for klass in AttackClass:
        if not klass.is_attack:
            continue
        dims = rng.choice(n_features, size=N_SHIFTED, replace=False)
        signs = rng.choice([-1.0, 1.0], size=N_SHIFTED)
        rows = draw(n_per_attack)
        rows[:, dims] += SHIFT_SIGMAS * signs
        blocks.append(rows)
        labels.extend([klass] * n_per_attack)
    X = np.vstack(blocks) * scale + center
    names = FEATURE_NAMES if n_features == len(FEATURE_NAMES) else tuple(f"f{i}" for i in range(n_features))
    order = rng.permutation(len(labels))
    return LabeledDataset(names, X[order], tuple(labels[i] for i in order))


# Column names and fine-grained labels as published in the CICIoT2023 CSV export.
CICIOT_COLUMNS = (
    "flow_duration", "Header_Length", "Protocol Type", "Duration", "Rate", "Srate", "Drate",
    "fin_flag_number", "syn_flag_number", "rst_flag_number", "psh_flag_number",
    "ack_flag_number", "ece_flag_number", "cwr_flag_number",
    "ack_count", "syn_count", "fin_count", "urg_count", "rst_count",
    "HTTP", "HTTPS", "DNS", "Telnet", "SMTP", "SSH", "IRC", "TCP", "UDP", "DHCP", "ARP",
    "ICMP", "IPv", "LLC", "Tot sum", "Min", "Max", "AVG", "Std", "Tot size", "IAT", "Number",
    "Magnitue", "Radius", "Covariance", "Variance", "Weight", "label",
)
CICIOT_LABELS = {
    AttackClass.BENIGN: ("BenignTraffic",),
    AttackClass.DDOS: ("DDoS-ICMP_Flood", "DDoS-SYN_Flood", "DDoS-UDP_Flood"),
    AttackClass.DOS: ("DoS-TCP_Flood", "DoS-HTTP_Flood"),
    AttackClass.RECON: ("Recon-PortScan", "Recon-OSScan", "VulnerabilityScan"),
    AttackClass.WEB_BASED: ("SqlInjection", "XSS", "Uploading_Attack", "BrowserHijacking"),
    AttackClass.BRUTE_FORCE: ("DictionaryBruteForce",),
    AttackClass.SPOOFING: ("DNS_Spoofing", "MITM-ArpSpoofing"),
    AttackClass.MIRAI: ("Mirai-greeth_flood", "Mirai-udpplain"),
}


def write_ciciot_sample(path, n_rows=20000, seed=0):
    """Write the benchmark with CICIoT2023 headers, per-flag columns and fine labels.

    About 60% of rows are benign and the rest split evenly over the seven attack
    classes. ``flag_number`` is spread over the per-flag columns so that their
    sum reproduces it. Returns the number of rows written.
    """
    n_per_attack = max(2, (n_rows * 2 // 5) // 7)
    ds = make_benchmark(n_rows - 7 * n_per_attack, n_per_attack, seed)
    rng = np.random.default_rng(seed + 1)
    col = {name: i for i, name in enumerate(FEATURE_NAMES)}
    flag_cols = CICIOT_COLUMNS[7:14]
    with atomic_write(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CICIOT_COLUMNS)
        for row, lab in zip(ds.X, ds.labels):
            values = {}
            share = rng.dirichlet(np.ones(len(flag_cols))) * row[col["flag_number"]]
            share[-1] = row[col["flag_number"]] - share[:-1].sum()
            values.update(zip(flag_cols, share))
            for name in CICIOT_COLUMNS[:-1]:
                if name in values:
                    continue
                key = name.strip().lower().replace(" ", "_")
                values[name] = row[col[key]] if key in col else rng.normal()
            fine = CICIOT_LABELS[lab]
            writer.writerow([repr(float(values[c])) for c in CICIOT_COLUMNS[:-1]]
                            + [fine[rng.integers(len(fine))]])
    return len(ds)
