import numpy as np
import pytest

from twisted_nls.basis import ModelParams, build_basis


@pytest.fixture(scope="session")
def basis1():
    return build_basis(ModelParams(1, 6))


@pytest.fixture(scope="session")
def basis2():
    return build_basis(ModelParams(2, 3))


@pytest.fixture(scope="session")
def basis2_small():
    return build_basis(ModelParams(2, 2))
