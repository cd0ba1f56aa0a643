"""Shared fixtures: one noiseless and one noisy scenario, generated once."""

import pytest

from gnssfgo import ScenarioConfig, generate


def noiseless_config(**overrides) -> ScenarioConfig:
    """A scenario whose measurements satisfy the models exactly."""
    base = dict(seed=3, sigma_pseudorange_m=0.0, sigma_phase_m=0.0,
                sigma_doppler_mps=0.0, outlier_probability=0.0,
                slip_probability=0.0)
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture(scope="session")
def noiseless_data():
    """(dataset, truth, injections) for the clean 60-epoch scenario."""
    return generate(noiseless_config())


@pytest.fixture(scope="session")
def urban_data():
    """(dataset, truth, injections) for the default noisy urban scenario."""
    return generate(ScenarioConfig(seed=11))
