import math

import numpy as np
import pytest

from twisted_nls.errors import (
    ConfigurationError,
    DivergenceError,
    NonConvergenceError,
    SmallnessError,
    UsageError,
)
from twisted_nls.nonlinearity import NonlinearitySpec
from twisted_nls.norms import sobolev_norm
from twisted_nls.solver import (
    SolverConfig,
    duhamel_apply,
    free_flow_norm,
    free_trace,
    limit_solution,
    picard_solve,
    select_T,
    split_step_solve,
    strichartz_pair,
    trace_distance,
)
from twisted_nls.spectral import SpectralField

from helpers import random_interior

CUBIC = NonlinearitySpec(lam=1.0, alpha=2.0, m=4)


@pytest.fixture(scope="module")
def datum(basis2):
    return random_interior(basis2, np.random.default_rng(11), scale=2.0)


def test_config_validation():
    for bad in (dict(T=0), dict(n_steps=5), dict(n_steps=2), dict(tol_fixed_point=0),
                dict(delta=-1), dict(scheme="rk4"), dict(direction=0), dict(max_iter=0)):
        with pytest.raises(ConfigurationError):
            SolverConfig(**bad)
    cfg = SolverConfig(T=1.0, n_steps=8, direction=-1, t0=2.0)
    assert cfg.times[-1] == pytest.approx(1.0) and cfg.dt == pytest.approx(-0.125)


def test_linear_picard_is_free_flow(datum):
    cfg = SolverConfig(T=0.5, n_steps=16)
    tr = picard_solve(datum, NonlinearitySpec(lam=0.0, alpha=2.0), cfg)
    assert tr.meta["iterations"] == 1
    assert np.allclose(tr.coeffs, free_trace(datum, cfg).coeffs, atol=0)


def test_duhamel_at_t0_is_data(datum):
    cfg = SolverConfig(T=0.5, n_steps=16)
    out = duhamel_apply(datum, free_trace(datum, cfg), CUBIC, cfg)
    assert np.array_equal(out.coeffs[0], datum.coeffs)


def test_duhamel_grid_mismatch(datum):
    cfg = SolverConfig(T=0.5, n_steps=16)
    other = free_trace(datum, SolverConfig(T=0.5, n_steps=8))
    with pytest.raises(UsageError):
        duhamel_apply(datum, other, CUBIC, cfg)


def test_first_picard_step_is_first_order_in_lambda(datum):
    cfg = SolverConfig(T=0.5, n_steps=16)
    u0 = free_trace(datum, cfg)
    q, p = strichartz_pair(2)
    lams = [1e-3, 1e-2, 1e-1]
    d = [trace_distance(duhamel_apply(datum, u0, CUBIC.with_lam(l), cfg), u0, q, p) for l in lams]
    slope = np.polyfit(np.log(lams), np.log(d), 1)[0]
    assert slope == pytest.approx(1.0, abs=1e-6)


def test_fixed_point_residual(datum):
    cfg = SolverConfig(T=0.5, n_steps=32, tol_fixed_point=1e-10)
    tr = picard_solve(datum, CUBIC, cfg)
    again = duhamel_apply(datum, tr, CUBIC, cfg)
    q, p = strichartz_pair(2)
    assert trace_distance(again, tr, q, p) <= 2 * cfg.tol_fixed_point
    assert all(f < 1 for f in tr.meta["contraction_factors"])


def test_picard_charge(datum):
    cfg = SolverConfig(T=0.5, n_steps=128, tol_fixed_point=1e-10)
    ch = picard_solve(datum, CUBIC, cfg).charge()
    assert np.max(np.abs(ch - ch[0])) <= 10 * cfg.tol_fixed_point * ch[0]


def test_split_step_linear_exact(datum):
    cfg = SolverConfig(T=0.7, n_steps=10, scheme="splitstep")
    tr = split_step_solve(datum, NonlinearitySpec(lam=0.0, alpha=2.0), cfg)
    assert np.allclose(tr.coeffs, free_trace(datum, cfg).coeffs, atol=1e-14)


def test_split_step_charge(datum):
    tr = split_step_solve(datum, CUBIC, SolverConfig(T=1.0, n_steps=200))
    ch = tr.charge()
    assert np.max(np.abs(ch - ch[0])) <= 1e-12 * ch[0]


def test_split_step_energy_second_order(datum):
    drifts = []
    for n_steps in (50, 100, 200):
        tr = split_step_solve(datum, CUBIC, SolverConfig(T=1.0, n_steps=n_steps))
        e = tr.energy()
        drifts.append(np.max(np.abs(e - e[0])))
    slope = np.polyfit(np.log([1 / 50, 1 / 100, 1 / 200]), np.log(drifts), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.3)


def test_time_reversal(datum):
    errs = []
    for n_steps in (20, 40):
        fwd = split_step_solve(datum, CUBIC, SolverConfig(T=0.5, n_steps=n_steps))
        end = SpectralField(fwd.coeffs[-1], datum.basis)
        back = split_step_solve(end, CUBIC, SolverConfig(t0=0.5, T=0.5, n_steps=n_steps, direction=-1))
        errs.append(np.linalg.norm(back.coeffs[-1] - datum.coeffs))
    # symmetric scheme: the round trip is exact up to the nonlinear solve tolerance
    assert max(errs) <= 1e-10


def test_backward_solve_matches_negated_time(datum):
    cfg = SolverConfig(T=0.3, n_steps=16, direction=-1)
    tr = picard_solve(datum, CUBIC, cfg)
    assert tr.times[-1] == pytest.approx(-0.3)
    sp = split_step_solve(datum, CUBIC, cfg)
    assert np.max(np.abs(tr.coeffs - sp.coeffs)) < 1e-3


def test_cross_scheme_agreement(datum):
    q, p = math.inf, 2.0
    diffs = {}
    for n_steps in (16, 32, 64):
        cfg = SolverConfig(T=0.5, n_steps=n_steps, tol_fixed_point=1e-12)
        diffs[n_steps] = trace_distance(picard_solve(datum, CUBIC, cfg),
                                        split_step_solve(datum, CUBIC, cfg), q, p)
    assert diffs[64] < diffs[32] < diffs[16]
    assert diffs[16] / diffs[32] == pytest.approx(4.0, rel=0.2)


def test_divergence_reported(basis2):
    big = random_interior(basis2, np.random.default_rng(0), scale=200.0)
    cfg = SolverConfig(T=math.pi, n_steps=16, max_iter=30)
    with pytest.raises(NonConvergenceError) as info:
        picard_solve(big, NonlinearitySpec(lam=1.0, alpha=2.0, m=0), cfg)
    assert isinstance(info.value, DivergenceError)
    assert info.value.residuals


def test_select_T_zero_and_monotone(basis2, datum):
    assert select_T(SpectralField.zeros(basis2), 0.1) == pytest.approx(math.pi)
    small = datum * 0.3
    delta = 0.5 * free_flow_norm(small, math.pi)
    t1 = select_T(small, delta)
    assert t1 < math.pi
    assert select_T(small * 1.2, delta) <= t1
    assert select_T(small, 1.5 * delta) >= t1
    with pytest.raises(SmallnessError):
        select_T(datum * 100, 1e-3)


def test_select_T_closed_form(basis2):
    # free flow of eps Phi_0 has a time-constant norm N, so T* = (delta/N)^gamma
    eps, delta = 0.4, 0.5
    f = SpectralField.unit(basis2, [0, 0], [0, 0]) * eps
    gamma, rho = strichartz_pair(2)
    N = sobolev_norm(f, rho)
    t_star = (delta / N) ** gamma
    grid = np.linspace(0.01, math.pi, 300)
    T = select_T(f, delta, search_grid=grid)
    assert T <= t_star * (1 + 1e-9)
    assert t_star < T + (grid[1] - grid[0])


def test_limit_solution_inactive_truncation(basis2):
    f = random_interior(basis2, np.random.default_rng(3), scale=0.5)
    tr, table = limit_solution(f, NonlinearitySpec(lam=1.0, alpha=2.0),
                               SolverConfig(T=0.3, n_steps=16), [1, 2, 4])
    assert np.abs(basis2.synthesize_array(tr.coeffs)).max() < 1
    assert all(row["gap"] == 0.0 for row in table)


def test_limit_solution_schedule_validation(datum):
    with pytest.raises(UsageError):
        limit_solution(datum, CUBIC, SolverConfig(), [2, 1])
