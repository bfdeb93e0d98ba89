import numpy as np
import pytest

from etchmap.beams import BeamSpec
from etchmap.core import make_interval_grids, make_stadium_mask, make_dwell_for_domain
from etchmap.kernels import assemble_normal_matrix
from etchmap.spectral import decompose, left_vectors


@pytest.fixture(scope="session")
def gauss_interval():
    """Gaussian sigma=2 on [-80, 80] at spacing 0.5, full singular system."""
    beam = BeamSpec.gaussian(2.0)
    dwell, domain = make_interval_grids(80.0, 2.0, 0.5)
    kern = assemble_normal_matrix(beam, dwell, domain)
    system = decompose(kern)
    system = left_vectors(system, beam, domain, system.n_above_clamp)
    return beam, dwell, domain, kern, system


@pytest.fixture(scope="session")
def cauchy_interval():
    """Cauchy sigma=2 on [-40, 40] at spacing 0.25."""
    beam = BeamSpec.cauchy(2.0)
    dwell, domain = make_interval_grids(40.0, 2.0, 0.25)
    kern = assemble_normal_matrix(beam, dwell, domain)
    system = decompose(kern)
    return beam, dwell, domain, kern, system


@pytest.fixture(scope="session")
def stadium_system():
    """Gaussian sigma=2 on a width-10 stadium at spacing 1."""
    beam = BeamSpec.gaussian(2.0, dim=2)
    domain = make_stadium_mask(10.0, 1.0)
    dwell = make_dwell_for_domain(domain, beam.scale, 1.0)
    kern = assemble_normal_matrix(beam, dwell, domain)
    system = decompose(kern)
    return beam, dwell, domain, kern, system


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
