import numpy as np
import pytest

from dynamics.experiments import generate_experiments
from dynamics.models import fput, kuramoto
from problem.regression import RegressionProblem


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_problem():
    """Factory for small random regression problems with a sparse ground truth.

    Features are scaled by 1/sqrt(M) so the Gram matrix stays well conditioned.
    """

    def factory(n=6, d=2, M=60, noise=0.0, seed=0, density=0.5):
        gen = np.random.default_rng(seed)
        A = gen.standard_normal((n, M)) / np.sqrt(M)
        omega = gen.standard_normal((n, d)) * (gen.random((n, d)) < density)
        B = omega.T @ A + noise * gen.standard_normal((d, M)) / np.sqrt(M)
        return RegressionProblem(A, B), omega

    return factory


@pytest.fixture(scope="session")
def kuramoto_model():
    return kuramoto(2, seed=0)


@pytest.fixture(scope="session")
def kuramoto_clean(kuramoto_model):
    """Four clean Kuramoto experiments of 200 points on [0, 10]."""
    return generate_experiments(kuramoto_model, 4, 800, 10.0, "uniform_angle", seed=7)


@pytest.fixture(scope="session")
def fput_clean():
    """Six clean FPUT (d=2) experiments of 31 points on [0, 1]."""
    return generate_experiments(fput(2), 6, 186, 1.0, "uniform_symmetric", seed=3)
