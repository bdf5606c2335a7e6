import numpy as np
import pytest

from stereocamo import _kernels


@pytest.fixture(params=sorted(_kernels.available_backends()))
def kernel_backend(request):
    """Run a test once per available kernel backend, restoring the default."""
    previous = _kernels.backend_name()
    _kernels.use_backend(request.param)
    yield request.param
    _kernels.use_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
