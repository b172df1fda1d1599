import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twisted_nls import kernels

py = kernels.backend("python")
try:
    cy = kernels.backend("cython")
except ImportError:  # compiled extension not built
    cy = None

needs_ext = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


@needs_ext
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), alpha=st.sampled_from([2.0, 1.0, 0.5, 3.0]),
       m=st.sampled_from([0.0, 1.0, 2.0, 7.0]), lam=st.floats(-3, 3))
def test_backends_agree(seed, alpha, m, lam):
    rng = np.random.default_rng(seed)
    u = (rng.standard_normal((3, 64)) + 1j * rng.standard_normal((3, 64))) * 4
    w = rng.random(64)
    s = np.abs(u)
    for name, args in (("psi_m", (s, lam, alpha, m)), ("dpsi_m", (s, lam, alpha, m)),
                       ("gtilde_m", (s, lam, alpha, m)), ("g_m", (u, lam, alpha, m)),
                       ("gtilde_sum", (u, w, lam, alpha, m))):
        a, b = getattr(py, name)(*args), getattr(cy, name)(*args)
        np.testing.assert_allclose(b, a, rtol=1e-11, atol=1e-300, err_msg=name)
    for p in (1.0, 2.0, 8 / 3, 4.0, np.inf):
        np.testing.assert_allclose(cy.lp_sums(u, w, p), py.lp_sums(u, w, p), rtol=1e-12)


@needs_ext
def test_scalar_row_returns_float():
    u = np.ones(5, complex)
    w = np.ones(5)
    assert isinstance(cy.lp_sums(u, w, 2.0), float)
    assert isinstance(cy.gtilde_sum(u, w, 1.0, 2.0, 0.0), float)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.backend("fortran")


def test_pure_python_env_switch():
    env = dict(os.environ, TNLS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import twisted_nls.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
