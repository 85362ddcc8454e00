import numpy as np
import pytest

from tamedsde import make_model


@pytest.fixture(scope="session")
def ou_bundle():
    return make_model("ou")


@pytest.fixture(scope="session")
def dvdp_bundle():
    return make_model("dvdp")


@pytest.fixture(scope="session")
def dvdp_half_bundle():
    # the acceptance parameter set
    return make_model("dvdp", alpha=(1.0, 1.0, 1.0), beta=(0.5, 0.5))


@pytest.fixture(scope="session")
def gbm_bundle():
    return make_model("gbm")


@pytest.fixture(scope="session")
def cubic_bundle():
    return make_model("cubic")


@pytest.fixture(scope="session")
def langevin_const_bundle():
    return make_model("langevin_vf", n=1, friction="constant")


@pytest.fixture(scope="session")
def langevin_var_bundle():
    return make_model("langevin_vf", n=2, friction="variable")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
