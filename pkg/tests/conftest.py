import numpy as np
import pytest

from sgtrack.dataset_io import SyntheticConfig, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def short_sequence():
    return generate_synthetic(SyntheticConfig(frame_count=12))


@pytest.fixture(scope="session")
def static_sequence():
    from sgtrack.dataset_io import MotionPath

    return generate_synthetic(SyntheticConfig(frame_count=50, motion_path=MotionPath((100, 80), (0, 0)),
                                              noise_sigma=0.0))


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
