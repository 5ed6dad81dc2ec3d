import pytest

from hyperdelay import PlantConfig, design


@pytest.fixture(scope="session")
def ref_plant():
    """Reference plant: unit speeds and couplings, q = 1, rho = 0.85."""
    return PlantConfig(1.0, 1.0, 1.0, 0.85, 1.0, 1.0)


@pytest.fixture(scope="session")
def transport_plant():
    return PlantConfig(1.0, 1.0, 1.0, 0.85)


@pytest.fixture(scope="session")
def ref_design_200(ref_plant):
    return design(ref_plant, 200)
