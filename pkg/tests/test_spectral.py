import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twisted_nls.basis import ModelParams, build_basis
from twisted_nls.errors import TruncationOverflowWarning, UsageError
from twisted_nls.spectral import (
    GridField,
    SpectralField,
    analyze,
    apply_L,
    apply_ladder,
    ladder_operator_ids,
    propagate_free,
    synthesize,
    top_shell_mass,
)

from helpers import random_interior


def test_half_period_n1(basis1):
    c = random_interior(basis1, np.random.default_rng(0))
    out = propagate_free(c, math.pi)
    assert np.abs(out.coeffs + c.coeffs).max() <= 1e-12


def test_period_n2(basis2):
    c = random_interior(basis2, np.random.default_rng(1))
    out = propagate_free(c, math.pi)
    assert np.abs(out.coeffs - c.coeffs).max() <= 1e-12


@settings(max_examples=30, deadline=None)
@given(t=st.floats(-50, 50), seed=st.integers(0, 10**6))
def test_propagator_unitary_and_group(basis2, t, seed):
    c = random_interior(basis2, np.random.default_rng(seed))
    a = propagate_free(c, t)
    assert abs(a.norm() - c.norm()) <= 1e-14 * max(1.0, c.norm()) * 10
    b = propagate_free(propagate_free(c, 0.3 * t), 0.7 * t)
    assert np.allclose(a.coeffs, b.coeffs, atol=1e-10)


def test_propagate_rejects_nonfinite(basis1):
    with pytest.raises(UsageError):
        propagate_free(SpectralField.zeros(basis1), float("nan"))


def test_round_trip_fields(basis2):
    c = random_interior(basis2, np.random.default_rng(2))
    back = analyze(synthesize(c))
    assert np.allclose(back.coeffs, c.coeffs, atol=1e-13)


def test_basis_mismatch(basis2, basis2_small):
    c = SpectralField.zeros(basis2)
    with pytest.raises(UsageError):
        synthesize(c, basis2_small)
    with pytest.raises(UsageError):
        c + SpectralField.zeros(basis2_small)


def test_shape_and_finiteness_checks(basis1):
    with pytest.raises(UsageError):
        SpectralField(np.zeros(3), basis1)
    bad = np.zeros(basis1.size, complex)
    bad[0] = np.nan
    with pytest.raises(UsageError):
        SpectralField(bad, basis1)
    with pytest.raises(UsageError):
        GridField(np.zeros(5), basis1)


def test_apply_L_is_eigenvalue_scaling(basis2):
    u = SpectralField.unit(basis2, [1, 0], [2, 1])
    out = apply_L(u)
    k = basis2.index_of([1, 0], [2, 1])
    assert out.coeffs[k] == pytest.approx(2 * 3 + 2)


def test_ladder_ids():
    assert ladder_operator_ids(2) == ["Z1", "Z2", "Zbar1", "Zbar2"]


def test_ladder_raises_and_lowers(basis2):
    u = SpectralField.unit(basis2, [0, 1], [1, 0])
    up = apply_ladder(u, "Zbar2")
    assert up.coeffs[basis2.index_of([0, 1], [1, 1])] == pytest.approx(math.sqrt(2))
    down = apply_ladder(u, ("Z", 0))
    assert down.coeffs[basis2.index_of([0, 1], [0, 0])] == pytest.approx(math.sqrt(2))
    with pytest.raises(UsageError):
        apply_ladder(u, "Z3")


def test_top_shell_warning(basis2):
    K = basis2.K
    u = SpectralField.unit(basis2, [0, 0], [K, 0])
    assert top_shell_mass(u) == pytest.approx(1.0)
    with pytest.warns(TruncationOverflowWarning):
        out = apply_ladder(u, "Zbar1")
    assert out.warnings
    inner = SpectralField.unit(basis2, [0, 0], [K - 1, 0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not apply_ladder(inner, "Zbar1").warnings


def test_from_function_gaussian_is_ground_state():
    b = build_basis(ModelParams(1, 4))
    g = GridField.from_function(lambda x, y: np.exp(-(x**2 + y**2).sum(1) / 4), b)
    c = analyze(g).coeffs
    k = b.index_of(0, 0)
    assert abs(c[k]) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-12)
    c[k] = 0
    assert np.abs(c).max() < 1e-12
