"""Compare pcap record decoding throughput of the compiled and pure-Python kernels.

    python benchmarks/bench_decode.py [--packets N] [--repeat R]
"""

import argparse
import importlib
import time

from greenguard import pcapgen


def build_capture(n):
    frames = []
    for i in range(n):
        sport = 40000 + i % 2000
        if i % 3 == 0:
            frame = pcapgen.udp_frame("10.0.0.2", sport, "10.0.0.1", 5683, b"x" * (i % 64))
        else:
            frame = pcapgen.tcp_frame("10.0.0.2", sport, "10.0.0.1", 1883, 0x18, b"y" * (i % 128))
        frames.append((i * 1e-4, frame))
    return pcapgen.pcap_bytes(frames)


def bench(module, body, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        records, consumed = module.parse_records(body, False, False)
        best = min(best, time.perf_counter() - t0)
    assert consumed == len(body)
    return best, len(records)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--packets", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    body = build_capture(args.packets)[24:]  # skip the global header
    results = {}
    for name in ("greenguard._kernels_py", "greenguard._kernels"):
        try:
            module = importlib.import_module(name)
        except ImportError:
            print(f"{name}: not built")
            continue
        seconds, n = bench(module, body, args.repeat)
        results[name] = seconds
        print(f"{name}: {n} packets in {seconds:.4f} s ({n / seconds / 1e6:.2f} Mpkt/s)")
    if len(results) == 2:
        py, ext = results["greenguard._kernels_py"], results["greenguard._kernels"]
        print(f"speedup={py / ext:.1f}x")


if __name__ == "__main__":
    main()
