import numpy as np
import pytest

import models
import operators as ops

def random_operator(rng, d):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))

def random_density_matrix(rng, d):
    a = random_operator(rng, d)
    rho = a @ ops.dagger(a)
    return rho / ops.trace(rho)

@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

@pytest.fixture
def thermal_params():
    return models.QubitThermalParams(gamma_down=3.0, gamma_up=1.0)

@pytest.fixture
def thermal(thermal_params):
    return models.thermal_qubit(thermal_params)

@pytest.fixture
def thermal_steady(thermal_params):
    return models.thermal_qubit_steady_state(thermal_params)
