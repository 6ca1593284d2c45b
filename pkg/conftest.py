"""
Shared pytest configuration for faultsynth
"""

import os

import numpy as np
import pytest

from src.signal_data import Condition, FaultClass, surrogate_dataset
from src.tensor import backward, no_grad, precision

RUN_SLOW = os.getenv("N2F_RUN_SLOW", "False").lower() in ("true", "t", "1")
REAL_DATA_DIR = os.getenv("N2F_REAL_DATA_DIR")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale training runs (enable with N2F_RUN_SLOW=true)")
    config.addinivalue_line("markers", "real_data: needs N2F_REAL_DATA_DIR with converted recordings")


def pytest_collection_modifyitems(config, items):
    skip_slow = pytest.mark.skip(reason="set N2F_RUN_SLOW=true to run desk-scale training tests")
    skip_real = pytest.mark.skip(reason="N2F_REAL_DATA_DIR is not set")
    for item in items:
        if "slow" in item.keywords and not RUN_SLOW:
            item.add_marker(skip_slow)
        if "real_data" in item.keywords and not (REAL_DATA_DIR and os.path.isdir(REAL_DATA_DIR)):
            item.add_marker(skip_real)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_bursts():
    """All six classes at two speeds, 24 bursts each, 64 samples per burst."""
    return surrogate_dataset(list(FaultClass), [Condition.for_rpm(1797), Condition.for_rpm(1772)],
                             n_bursts=24, burst_len=64, seed=7)


def _compare_with_central_differences(loss_fn, params, analytic, samples, step, rng):
    """
    Analytic gradients against central differences on sampled entries.

    The tolerance is relative (1e-5) plus a floor proportional to the loss,
    which bounds the rounding error of the difference quotient itself.
    """
    with no_grad():
        floor = 1e-9 * max(1.0, abs(loss_fn().item()))
    for name, param in params.items():
        flat = param.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        for index in picks:
            original = flat[index]
            flat[index] = original + step
            with no_grad():
                upper = loss_fn().item()
            flat[index] = original - step
            with no_grad():
                lower = loss_fn().item()
            flat[index] = original
            numeric = (upper - lower) / (2.0 * step)
            got = analytic[name].reshape(-1)[index]
            bound = 1e-5 * max(abs(numeric), abs(got)) + floor
            assert abs(got - numeric) <= bound, f"{name}[{index}]: analytic {got} vs numeric {numeric}"


@pytest.fixture
def central_differences():
    """central_differences(loss_fn, params, analytic, samples=6) with explicit analytic gradients."""

    def check(loss_fn, params, analytic, samples=6, step=1e-6, seed=0):
        _compare_with_central_differences(loss_fn, params, analytic, samples, step, np.random.default_rng(seed))

    return check


@pytest.fixture
def gradcheck():
    """
    gradcheck(build, samples=6) builds (loss_fn, params) in 64-bit mode and
    compares analytic and central-difference gradients entry by entry.
    """

    def check(build, samples=6, step=1e-6, seed=0):
        with precision(np.float64):
            loss_fn, params = build()
            analytic = backward(loss_fn(), params)
            _compare_with_central_differences(loss_fn, params, analytic, samples, step,
                                              np.random.default_rng(seed))

    return check
