"""
Pytest configuration and fixtures for the ferrofluid laboratory tests.
"""
import pytest

from ferrolab.experiments import load_digits
from ferrolab.ffmodel import DeviceParams
from ferrolab.instruments import Testbench
from ferrolab.readout import TrainConfig, train
from ferrolab.reservoir import collect_dataset


@pytest.fixture
def quiet_params():
    """
    Fixture providing device parameters with the chaotic perturbation off.

    Returns:
        DeviceParams whose dynamics are fully deterministic
    """
    return DeviceParams(chaos_eps=0.0)


@pytest.fixture
def make_bench():
    """
    Fixture providing a bench factory.

    Returns:
        Callable building a fresh Testbench; chaos is off unless requested
    """
    def factory(seed: int = 0, chaos: bool = False, **params) -> Testbench:
        device = DeviceParams(seed=seed, **params)
        return Testbench(params=device if chaos else device.without_chaos())
    return factory


@pytest.fixture
def bench(make_bench):
    """Fixture providing a fresh deterministic bench."""
    return make_bench()


@pytest.fixture(scope="session")
def digits():
    """Fixture providing the packaged digit dataset."""
    return load_digits()


@pytest.fixture
def temp_output_dir(tmp_path):
    """
    Fixture providing a temporary directory for test outputs.

    Args:
        tmp_path: Pytest's built-in temporary directory fixture

    Returns:
        Path object representing the temporary output directory
    """
    output_dir = tmp_path / "ferrolab-out"
    output_dir.mkdir()
    return output_dir


@pytest.fixture(scope="session")
def prc_samples(digits):
    """
    Fixture providing a reservoir dataset collected on a seeded chaotic bench.

    Returns:
        List of Samples, 10 repetitions of digits 0-3
    """
    bench = Testbench(params=DeviceParams(seed=11))
    return collect_dataset(bench, digits, reps=10)


@pytest.fixture(scope="session")
def prc_model(prc_samples):
    """Fixture providing the full readout trained on prc_samples."""
    return train(prc_samples, TrainConfig(epochs=2000, seed=0))
