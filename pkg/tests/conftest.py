import numpy as np
import pytest
from hypothesis import settings

from lpvdiss.certify import CertificationProblem
from lpvdiss.datadict import generate_dictionary
from lpvdiss.model import LpvIoModel
from lpvdiss.reproduce import example_model
from lpvdiss.scheduling import BoxPolytope

# fixed example sequence so that every run sees the same cases
settings.register_profile("deterministic", derandomize=True, deadline=None, print_blob=True)
settings.load_profile("deterministic")


def random_siso(rng, n_r=None, scale=0.3, p_range=(-1.0, 1.0), feedthrough=True):
    """Random stable-ish SISO shifted-affine model with scheduling-free b_0."""
    n_r = int(rng.integers(1, 4)) if n_r is None else n_r
    a = scale * rng.standard_normal((n_r, 2, 1, 1)) / n_r
    b = rng.standard_normal((n_r + 1, 2, 1, 1))
    b[0, 1] = 0.0
    if not feedthrough:
        b[0] = 0.0
    box = BoxPolytope([p_range[0]], [p_range[1]])
    return LpvIoModel(a, b, scheduling=box, name="random")


@pytest.fixture(scope="session")
def ex1_model():
    return example_model("ex1")


@pytest.fixture(scope="session")
def ex2_model():
    return example_model("ex2")


@pytest.fixture(scope="session")
def ex1_data(ex1_model):
    return generate_dictionary(ex1_model, 42, seed=0)


@pytest.fixture(scope="session")
def ex2_data(ex2_model):
    return generate_dictionary(ex2_model, 33, seed=0)


@pytest.fixture(scope="session")
def ex1_problem(ex1_model, ex1_data):
    return CertificationProblem(ex1_data, 10, 3, None, ex1_model.scheduling, n_r=ex1_model.n_r)


@pytest.fixture(scope="session")
def ex2_problem(ex2_model, ex2_data):
    return CertificationProblem(ex2_data, 5, 2, None, ex2_model.scheduling, n_r=ex2_model.n_r)
