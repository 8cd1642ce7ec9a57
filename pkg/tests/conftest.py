import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stratbous.basis import Truncation
from stratbous.dynamics import restore_invariants
from stratbous.fields import FlowState

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
settings.load_profile("default")


def random_coeffs(trunc: Truncation, rng, decay: float = 0.0, real: bool = True) -> np.ndarray:
    """Random coefficients, conjugate-symmetric in n when ``real``."""
    shape = trunc.coeff_shape
    c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.exp(-decay * np.sqrt(trunc.eta2))
    if real:
        r = c
        for ax in range(trunc.nh):
            r = np.flip(r, axis=ax)
        c = 0.5 * (c + np.conj(r))
    return c


def random_state(trunc: Truncation, alpha: int, seed: int = 0, amplitude: float = 1.0, decay: float = 0.3) -> FlowState:
    rng = np.random.default_rng(seed)
    vh = np.stack([random_coeffs(trunc, rng, decay) for _ in range(trunc.nh)])
    vd = random_coeffs(trunc, rng, decay)
    th = random_coeffs(trunc, rng, decay)
    vh, vd, th = restore_invariants(trunc, amplitude * vh, amplitude * vd, amplitude * th)
    return FlowState.from_arrays(trunc, alpha, vh, vd, th)


@pytest.fixture
def small2d():
    return Truncation(2, 4, 8)


@pytest.fixture
def small3d():
    return Truncation(3, 2, 6)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import SUMMARY
    except ImportError:
        return
    if SUMMARY:
        terminalreporter.section("acceptance criteria")
        for line in SUMMARY:
            terminalreporter.write_line(line)
