import numpy as np
import pytest

from subdyn_ske.model import ModelConfig, Mode, build_hamiltonians, unperturbed_basis
from subdyn_ske.subdyn import run_pipeline

REFERENCE_MODES = (Mode(1.0, 0.5), Mode(1.3, 0.3 + 0.2j))


def reference_config(lam=0.05, n_max=2, J=1.0):
    return ModelConfig(J, lam, REFERENCE_MODES, n_max)


def small_config(lam=0.05, n_max=2, J=1.0, g=0.5):
    return ModelConfig(J, lam, (Mode(1.0, g),), n_max)


@pytest.fixture(scope="session")
def reference():
    return run_pipeline(reference_config(0.05))


@pytest.fixture(scope="session")
def small():
    return run_pipeline(small_config(0.05))


@pytest.fixture(scope="session")
def small_order1():
    return run_pipeline(small_config(0.05), "order1")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def hams_and_basis(config):
    return build_hamiltonians(config), unperturbed_basis(config)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
