import json
import math
from fractions import Fraction

import numpy as np
import pytest

from twisted_nls import fd
from twisted_nls.errors import PreconditionError
from twisted_nls.nonlinearity import NonlinearitySpec, g_m_values
from twisted_nls.solver import SolverConfig, free_trace
from twisted_nls.spectral import SpectralField
from twisted_nls.verification import (
    EstimateReport,
    RandomFieldSpec,
    _derivative_images,
    blowup_monitor,
    conservation_report,
    embedding_range_check,
    loglog_slope,
    random_fields,
    random_traces,
    stability_experiment,
    verify_derivative_bound,
    verify_difference_estimate,
    verify_embedding,
    verify_truncation_gap,
)

from helpers import random_interior

SMALL = RandomFieldSpec(seed=5, count=6)


def test_embedding_range():
    # at n = 2, p1 = 2 the upper endpoint is 2*2*2/(4-2) = 4
    embedding_range_check(2, 4, 2)
    embedding_range_check(2, Fraction(8, 3), 2)
    with pytest.raises(PreconditionError, match="2n p1"):
        embedding_range_check(2, Fraction(401, 100), 2)
    embedding_range_check(2, 2, 2)
    with pytest.raises(PreconditionError, match="p1 <= p2"):
        embedding_range_check(3, 2, 2)
    embedding_range_check(5, 100, 2)
    with pytest.raises(PreconditionError):
        embedding_range_check(4, math.inf, 2)


def test_embedding_report(basis2):
    rep = verify_embedding(SMALL, 2, Fraction(8, 3), basis2)
    assert rep.violation_count == 0 and rep.fitted_constant == max(rep.ratios)
    same = verify_embedding(SMALL, 2, 2, basis2)
    assert same.fitted_constant <= 1.0
    with pytest.raises(PreconditionError):
        verify_embedding(SMALL, 2, 5, basis2)
    d = json.loads(rep.to_json())
    assert d["lemma_id"] == "embedding" and len(d["ratios"]) == SMALL.count
    assert rep.to_csv().startswith("sample,lhs,rhs_structure,ratio\r\n")


def test_random_fields_reproducible(basis2):
    a = random_fields(SMALL, basis2)
    b = random_fields(SMALL, basis2)
    assert all(np.array_equal(x.coeffs, y.coeffs) for x, y in zip(a, b))
    assert all(x.coeffs[basis2.top_shell].max() == 0 for x in a)
    c = random_fields(RandomFieldSpec(seed=6, count=6), basis2)
    assert not np.array_equal(a[0].coeffs, c[0].coeffs)


def test_difference_estimate_m_uniform(basis2_small):
    rep = verify_difference_estimate(SMALL, [1, 4, 16, 64], basis2_small)
    assert rep.violation_count == 0
    assert rep.extras["m_spread"] <= 2.0
    zero = verify_difference_estimate(SMALL, [1, 4], basis2_small, lam=0.0)
    assert zero.fitted_constant == 0.0


def test_difference_estimate_skips_equal_pairs(basis2_small):
    rs = RandomFieldSpec(seed=1, count=2)
    # identical streams make u = v for every sample
    import twisted_nls.verification as v

    orig = v.random_traces
    try:
        v.random_traces = lambda specs, b, T, n, stream=0: orig(specs, b, T, n, stream=0)
        rep = verify_difference_estimate(rs, [1], basis2_small)
    finally:
        v.random_traces = orig
    assert rep.sample_count == 0 and len(rep.notes) == 2


def test_derivative_images_match_finite_differences(basis2):
    b = basis2
    u = random_interior(b, np.random.default_rng(8), scale=30.0).coeffs
    spec = NonlinearitySpec(lam=1.0, alpha=2.0, m=3)
    imgs = _derivative_images(b, u, spec)

    def G(points):
        vals = b.evaluate(points) @ u
        return g_m_values(vals, spec)

    pick = np.argsort(-b.weights)[:15]
    pts = b.nodes[pick]
    assert np.allclose(imgs["Id"][pick], G(pts), atol=1e-12)
    for j in range(2):
        for which in ("Z", "Zbar"):
            approx = fd.ladder(G, which, j, 2, h=1e-3)(pts)
            exact = imgs[f"{which}{j + 1}"][pick]
            assert np.allclose(approx, exact, rtol=1e-5, atol=1e-6 * np.abs(exact).max())


def test_derivative_bound_report(basis2_small):
    rep = verify_derivative_bound(SMALL, [1, 16], basis2_small)
    assert set(rep.extras["per_operator_constant"]) == {"Id", "Z1", "Z2", "Zbar1", "Zbar2"}
    assert rep.extras["exponent"] == 3
    assert rep.violation_count == 0


def test_derivative_bound_homogeneity(basis2_small):
    # untruncated G is cubic, so ratios are invariant under u -> 2u
    a = verify_derivative_bound(RandomFieldSpec(seed=2, amplitude_law="fixed", amp_min=1.0, count=3),
                                [10**6], basis2_small)
    b = verify_derivative_bound(RandomFieldSpec(seed=2, amplitude_law="fixed", amp_min=2.0, count=3),
                                [10**6], basis2_small)
    assert np.allclose(a.ratios, b.ratios, rtol=1e-9)
    assert np.allclose(np.array(b.lhs) / np.array(a.lhs), 8.0, rtol=1e-9)


def test_truncation_gap(basis2_small):
    b = basis2_small
    big = RandomFieldSpec(seed=4, amplitude_law="fixed", amp_min=40.0, count=2)
    rep = verify_truncation_gap(random_traces(big, b), [1, 2, 4, 8], b)
    assert rep.fitted_constant > 0
    assert rep.extras["worst_decay_slope"] <= -0.5 + 0.2
    assert rep.extras["max_halving_factor"] <= 2 ** -0.25 * 1.3


def test_truncation_gap_inactive(basis2_small):
    tiny = RandomFieldSpec(seed=4, amplitude_law="fixed", amp_min=0.1, count=1)
    rep = verify_truncation_gap(random_traces(tiny, basis2_small), [1, 2], basis2_small)
    assert rep.fitted_constant == 0.0
    assert any("inactive" in n for n in rep.notes)


def test_report_rejects_bad_ratios():
    with pytest.raises(Exception):
        EstimateReport.from_samples("x", [1.0], [0.0])


def test_loglog_slope():
    m = np.array([1, 2, 4, 8])
    assert loglog_slope(m, 3 * m**-0.5) == pytest.approx(-0.5)
    assert math.isnan(loglog_slope(m, np.zeros(4)))


def test_conservation_linear(basis2):
    f = random_interior(basis2, np.random.default_rng(1))
    tr = free_trace(f, SolverConfig(T=1.0, n_steps=8), NonlinearitySpec(lam=0.0, alpha=2.0))
    rep = conservation_report(tr)
    assert rep["max_energy_drift"] <= 1e-12 and rep["max_charge_drift"] <= 1e-14
    zero = free_trace(SpectralField.zeros(basis2), SolverConfig(T=1.0, n_steps=8),
                      NonlinearitySpec(lam=1.0, alpha=2.0))
    assert conservation_report(zero)["max_energy_drift"] == 0


def test_stability_linear_ratio_is_exact(basis2):
    f = random_interior(basis2, np.random.default_rng(2))
    g = random_interior(basis2, np.random.default_rng(3))
    cfg = SolverConfig(T=0.5, n_steps=16)
    res = stability_experiment(f, [0.1, 0.01, 0.0], NonlinearitySpec(lam=0.0, alpha=2.0), cfg,
                               direction=g)
    ref = free_trace(g, cfg)
    expected = max(ref.sobolev(2))
    rows = res["rows"]
    assert rows[-1]["diff_energy"] == 0.0
    for row in rows[:2]:
        assert row["ratio_energy"] == pytest.approx(expected, rel=1e-10)


def test_stability_nonlinear(basis2):
    f = random_interior(basis2, np.random.default_rng(4), scale=1.5)
    res = stability_experiment(f, [0.1, 0.01, 0.001], NonlinearitySpec(lam=1.0, alpha=2.0, m=4),
                               SolverConfig(T=0.5, n_steps=32))
    for s in res["summary"].values():
        assert s["monotone"] and s["ratio_spread"] <= 3


def test_blowup_monitor(basis2):
    f = random_interior(basis2, np.random.default_rng(5), scale=1.0)
    cfg = SolverConfig(T=0.5, n_steps=32)
    with pytest.raises(PreconditionError):
        blowup_monitor(f, NonlinearitySpec(lam=-1.0), cfg, (math.inf, 2))
    with pytest.raises(PreconditionError):
        blowup_monitor(f, NonlinearitySpec(lam=-1.0), cfg, (4, 3))
    pair = (4, Fraction(8, 3))
    res = blowup_monitor(f, NonlinearitySpec(lam=1.0), cfg, pair)
    free = blowup_monitor(f, NonlinearitySpec(lam=0.0), cfg, pair)
    assert np.all(np.diff(res["running"]) >= 0)
    assert not res["growth"]
    # defocusing small data stays comparable to the free flow
    assert res["running"][-1] <= 1.5 * free["running"][-1]
    flagged = blowup_monitor(f, NonlinearitySpec(lam=-1.0), cfg, pair, threshold=1e-3)
    assert flagged["growth"] and flagged["flags"][0]["kind"] == "growth"
