import numpy as np
import pytest
from hypothesis import settings

from wavemode.coupling import CouplingCoefficients, compute_coefficients
from wavemode.medium import CovarianceSpec
from wavemode.pekeris import WaveguideParams, solve_modes

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_guide():
    """Four trapped modes, moderate contrast."""
    return WaveguideParams.from_mode_parameter(1.2, 1.0, 4.3)


@pytest.fixture(scope="session")
def gaussian_spec():
    return CovarianceSpec.gaussian_bump(2.0, 1.0, center=0.4, width=0.25)


@pytest.fixture(scope="session")
def gaussian_coeffs(small_guide, gaussian_spec):
    return compute_coefficients(solve_modes(small_guide), gaussian_spec, kappa=False)


@pytest.fixture(scope="session")
def band_coeffs():
    ms = solve_modes(WaveguideParams.from_mode_parameter(1.2, 1.0, 12.5))
    return compute_coefficients(ms, CovarianceSpec.cosine_band(2.0, 1.0), kappa=False)


def random_coefficients(seed, n, loss=(0.1, 1.0), density=1.0):
    rng = np.random.default_rng(seed)
    R = rng.uniform(0.1, 2.0, (n, n)) * (rng.random((n, n)) < density)
    lam = rng.uniform(*loss, n)
    return CouplingCoefficients.from_rates(R + np.diag(np.ones(n - 1), 1), lam)
