import numpy as np
import pytest

from wavefield.lattice import build_lattice
from wavefield.wavesim import KernelProfile, NeuronModel, Variant


@pytest.fixture
def small_lattice():
    return build_lattice(24, 24, spacing=0.2, conduction_velocity=0.2)


@pytest.fixture
def quiet_spiking():
    return NeuronModel(noise_std=0.0)


@pytest.fixture
def linear_rate():
    return NeuronModel(variant=Variant.RATE, rectify=False, noise_std=0.0, recurrent_gain=0.05)


@pytest.fixture
def default_kernel():
    return KernelProfile()


def brute_distance(a, b, width, height, spacing, periodic):
    """Reference Euclidean distance written without the library helpers."""
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    if periodic:
        dx, dy = min(dx, width - dx), min(dy, height - dy)
    return spacing * float(np.hypot(dx, dy))


#: criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
