import numpy as np
import pytest

from bestnet import blasius_residual, estimate_A, solve_cv_system
from bestnet.heavy_traffic import IntegrationError, heavy_traffic_mean

from oracles import ode_A_direct


@pytest.fixture(scope="module")
def sol():
    return solve_cv_system(tol=1e-10)


def test_A_matches_independent_integration(sol):
    integral, limit = ode_A_direct()
    assert sol.A_integral == pytest.approx(integral, abs=1e-8)
    assert sol.A_limit == pytest.approx(limit, abs=1e-8)


def test_estimators_agree_and_band(sol):
    assert abs(sol.A_integral - sol.A_limit) < 1e-8
    assert 1.25 <= estimate_A(sol) <= 1.40


def test_initial_conditions(sol):
    assert sol.c[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.v[0] == pytest.approx(0.0, abs=1e-7)
    assert sol.v_prime[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.c[-1] <= 1e-12


def test_profiles_monotone(sol):
    assert np.all(np.diff(sol.c) <= 1e-15)
    assert np.all(np.diff(sol.v) >= 0)
    # z v' increases towards A
    zvp = sol.grid * sol.v_prime
    assert np.all(np.diff(zvp) >= -1e-12)


def test_finite_difference_derivative(sol):
    z = np.linspace(0.5, 5.0, 4001)
    h = z[1] - z[0]
    v = sol.v_at(z)
    fd = (v[2:] - v[:-2]) / (2 * h)
    exact = sol.dense(np.log(z[1:-1]))[2] / z[1:-1]
    assert np.max(np.abs(fd - exact)) < 10 * h**2


def test_blasius_form(sol):
    assert blasius_residual(sol) < 1e-3


def test_blasius_detects_perturbed_system(sol):
    bad = solve_cv_system(tol=1e-10, c_decay_scale=1.01)
    assert blasius_residual(bad) > 10 * blasius_residual(sol)


def test_blasius_grid_guard(sol):
    with pytest.raises(ValueError):
        blasius_residual(sol, n=500)


def test_disagreement_guard(sol):
    import dataclasses

    skewed = dataclasses.replace(sol, A_limit=sol.A_integral * 1.2)
    with pytest.raises(IntegrationError):
        estimate_A(skewed)


def test_csv_header(sol):
    assert sol.to_csv().splitlines()[0] == "z,c,v,v_prime"


def test_heavy_traffic_mean_formula():
    assert heavy_traffic_mean(0.9, 1.3) == pytest.approx(1 / (0.01 * 1.3))
