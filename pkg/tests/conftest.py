import numpy as np
import pytest

from pcmdl.model import Architecture, GaussianPrior, generate_dataset, init_params
from pcmdl.numerics import RngStream


def make_problem(seed, dims=(2, 2, 1), activation="identity", N=100, alpha=100.0,
                 noise_var=1.0, init_std=0.1, noise_std=0.1):
    rng = RngStream(seed)
    arch = Architecture(dims, activation)
    data = generate_dataset(rng.substream(0), arch, N, noise_std)
    params = init_params(rng.substream(1), arch, init_std)
    prior = GaussianPrior.uniform(alpha, arch.n_layers, noise_var)
    return params, data, prior


@pytest.fixture
def problem():
    return make_problem(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
