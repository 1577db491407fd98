import numpy as np
import pytest

from invpomdp import kernels
from invpomdp.config import ProblemConfig


@pytest.fixture
def cfg():
    return ProblemConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


BACKENDS = [pytest.param(kernels.py, id="numpy")]
if kernels.compiled is not None:
    BACKENDS.append(pytest.param(kernels.compiled, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param
