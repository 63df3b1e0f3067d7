import numpy as np
import pytest

from greenguard import pipeline, synthetic
from greenguard.schema import FEATURE_NAMES

from fixtures import handshake


@pytest.fixture
def handshake_pcap(tmp_path):
    path = tmp_path / "handshake.pcap"
    path.write_bytes(handshake.capture_bytes())
    return path


@pytest.fixture(scope="session")
def benchmark_run():
    """A detector trained on a small seeded synthetic benchmark."""
    ds = synthetic.make_benchmark(n_benign=1500, n_per_attack=150, seed=11)
    return pipeline.train_detector(ds, seed=11)


@pytest.fixture(scope="session")
def trained_model(benchmark_run):
    return benchmark_run.model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def feature_names():
    return FEATURE_NAMES


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line[1])
