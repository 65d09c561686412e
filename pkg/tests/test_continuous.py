import math

import numpy as np
import pytest

from defaultable import (ParametricFamily, Payoff, PdeGrid,
                         UnsupportedMethodError, default_grid, pde_residual,
                         price_closed_form, price_mc_continuous,
                         simulate_continuous_path, solve_pde)

CALL = Payoff("call", strike=100.0)
PUT = Payoff("put", strike=100.0)

# frozen via the erf-based oracle in _oracles.lognormal_price,
# computed before the library was written
CALL_VALUE = 11.541470170672397
CALL_VALUE_NO_HAZARD = 10.450583572185565


def test_closed_form_matches_independent_oracle(const_coeffs):
    from _oracles import lognormal_price
    res = price_closed_form(const_coeffs, CALL, 100.0, 1.0)
    assert res.value == pytest.approx(CALL_VALUE, abs=1e-9)
    assert res.value == pytest.approx(
        lognormal_price("call", 100.0, 100.0, 1.0, 0.07, 0.2), abs=1e-12)
    assert res.std_error == 0.0


def test_closed_form_reduces_to_riskless_when_no_hazard():
    fam = ParametricFamily("constant", {"b": 0.0, "sigma": 0.2,
                                        "lambda": 0.0, "r": 0.05})
    res = price_closed_form(fam.build(), CALL, 100.0, 1.0)
    assert res.value == pytest.approx(CALL_VALUE_NO_HAZARD, abs=1e-9)


def test_closed_form_identity_and_constant(const_coeffs):
    assert price_closed_form(const_coeffs, Payoff("identity"), 100.0, 1.0).value == 100.0
    got = price_closed_form(const_coeffs, Payoff("constant", level=3.0), 100.0, 1.0).value
    assert got == pytest.approx(3.0 * math.exp(-0.07), rel=1e-14)


def test_closed_form_digital(const_coeffs):
    from _oracles import lognormal_price
    got = price_closed_form(const_coeffs, Payoff("digital", strike=100.0), 100.0, 1.0).value
    assert got == pytest.approx(lognormal_price("digital", 100, 100, 1.0, 0.07, 0.2), abs=1e-12)


def test_put_call_parity_closed_form(const_coeffs):
    call = price_closed_form(const_coeffs, CALL, 100.0, 1.0).value
    put = price_closed_form(const_coeffs, PUT, 100.0, 1.0).value
    assert call - put == pytest.approx(100.0 - 100.0 * math.exp(-0.07), abs=1e-10)


def test_closed_form_rejects_state_dependent_families(cev_coeffs):
    with pytest.raises(UnsupportedMethodError):
        price_closed_form(cev_coeffs, CALL, 100.0, 1.0)


def test_closed_form_rejects_table_payoff(const_coeffs):
    table = Payoff("table", breakpoints=(50.0, 150.0), values=(0.0, 100.0))
    with pytest.raises(UnsupportedMethodError):
        price_closed_form(const_coeffs, table, 100.0, 1.0)


# -- PDE -----------------------------------------------------------

def test_pde_matches_closed_form(const_coeffs):
    grid = default_grid(const_coeffs, 100.0, 1.0, 400, 400)
    value = solve_pde(const_coeffs, CALL, grid, 1.0).value_at(100.0)
    assert abs(value - CALL_VALUE) / CALL_VALUE <= 1e-3


def test_pde_constant_payoff_is_flat_discounting(const_coeffs):
    grid = default_grid(const_coeffs, 100.0, 1.0, 120, 120)
    value = solve_pde(const_coeffs, Payoff("constant", level=5.0), grid, 1.0).value_at(100.0)
    assert value == pytest.approx(5.0 * math.exp(-0.07), rel=1e-6)


def test_pde_put_call_parity(const_coeffs):
    grid = default_grid(const_coeffs, 100.0, 1.0, 400, 400)
    call = solve_pde(const_coeffs, CALL, grid, 1.0).value_at(100.0)
    put = solve_pde(const_coeffs, PUT, grid, 1.0).value_at(100.0)
    assert call - put == pytest.approx(100.0 - 100.0 * math.exp(-0.07), abs=1e-3)


def test_pde_log_spacing_also_converges(const_coeffs):
    grid = default_grid(const_coeffs, 100.0, 1.0, 400, 400, spacing="uniform-logs")
    value = solve_pde(const_coeffs, CALL, grid, 1.0).value_at(100.0)
    assert abs(value - CALL_VALUE) / CALL_VALUE <= 1e-3


def test_pde_residual_shrinks_at_second_order(const_coeffs):
    sizes, residuals = [50, 100, 200], []
    for m in sizes:
        grid = default_grid(const_coeffs, 100.0, 1.0, m, m)
        surf = solve_pde(const_coeffs, CALL, grid, 1.0)
        residuals.append(pde_residual(surf, const_coeffs))
    slope = np.polyfit(np.log(sizes), np.log(residuals), 1)[0]
    assert slope <= -1.8


def test_pde_bracketed_by_mc_for_state_dependent_intensity(cev_coeffs):
    grid = default_grid(cev_coeffs, 100.0, 1.0, 300, 300)
    pde_value = solve_pde(cev_coeffs, CALL, grid, 1.0).value_at(100.0)
    mc = price_mc_continuous(cev_coeffs, CALL, 100.0, 1.0, 200, 200_000, seed=3)
    assert abs(pde_value - mc.value) <= 3 * mc.std_error + 0.02


def test_pde_grid_validation():
    with pytest.raises(ValueError):
        PdeGrid(0.0, 100.0)
    with pytest.raises(ValueError):
        PdeGrid(10.0, 100.0, m_space=2)
    with pytest.raises(ValueError):
        PdeGrid(10.0, 100.0, spacing="chebyshev")


def test_default_grid_spans_six_sigmas(const_coeffs):
    grid = default_grid(const_coeffs, 100.0, 1.0)
    assert grid.s_max >= 100.0 * math.exp(6 * 0.2)
    assert grid.s_min <= 100.0 * math.exp(-6 * 0.2)


def test_surface_value_outside_grid_rejected(const_coeffs):
    grid = default_grid(const_coeffs, 100.0, 1.0, 50, 50)
    surf = solve_pde(const_coeffs, CALL, grid, 1.0)
    with pytest.raises(ValueError):
        surf.value_at(grid.s_max * 2)


# -- Euler Monte Carlo ----------------------------------------------

def test_euler_mc_within_band_of_closed_form(const_coeffs):
    res = price_mc_continuous(const_coeffs, CALL, 100.0, 1.0, 200, 200_000, seed=5)
    assert abs(res.value - CALL_VALUE) <= 3 * res.std_error + 0.01


def test_euler_mc_zero_payoff(const_coeffs):
    res = price_mc_continuous(const_coeffs, Payoff("constant", level=0.0),
                              100.0, 1.0, 64, 2_000, seed=1)
    assert res.value == 0.0 and res.std_error == 0.0


def test_euler_mc_near_deterministic_when_vol_tiny():
    fam = ParametricFamily("constant", {"b": 0.0, "sigma": 1e-8,
                                        "lambda": 0.02, "r": 0.05})
    res = price_mc_continuous(fam.build(), CALL, 100.0, 1.0, 100, 2_000, seed=2)
    # zero-noise limit: discounted payoff of the ODE terminal value,
    # S_T -> 100*exp(0.07) up to the O(dt) Euler drift error
    s_T = 100.0 * (1 + 0.07 / 100) ** 100
    want = math.exp(-0.07) * (s_T - 100.0)
    assert res.value == pytest.approx(want, abs=1e-4)
    assert abs(res.value - math.exp(-0.07) * (100 * math.exp(0.07) - 100)) < 0.01


def test_euler_mc_preconditions(const_coeffs):
    with pytest.raises(ValueError):
        price_mc_continuous(const_coeffs, CALL, 100.0, 1.0, 10, 10_000, seed=0)
    with pytest.raises(ValueError):
        price_mc_continuous(const_coeffs, CALL, 100.0, 1.0, 100, 100, seed=0)


def test_single_continuous_path_structure(const_coeffs):
    path = simulate_continuous_path(const_coeffs, 100.0, 1.0, 128, seed=4)
    assert path.stock[0] == 100.0 and path.hazard[0] == 0.0
    assert np.all(np.diff(path.hazard) >= 0)
    # constant lambda: hazard is exactly lambda * t on the grid
    assert path.hazard[-1] == pytest.approx(0.02, rel=1e-12)
    assert path.rate_integral[-1] == pytest.approx(0.07, rel=1e-12)


def test_three_way_agreement(const_coeffs):
    cf = price_closed_form(const_coeffs, CALL, 100.0, 1.0).value
    grid = default_grid(const_coeffs, 100.0, 1.0, 400, 400)
    pde = solve_pde(const_coeffs, CALL, grid, 1.0).value_at(100.0)
    mc = price_mc_continuous(const_coeffs, CALL, 100.0, 1.0, 400, 200_000, seed=9)
    assert abs(pde - cf) / cf <= 1e-3
    assert abs(mc.value - cf) <= 3 * mc.std_error + 0.01
    assert abs(mc.value - pde) <= 3 * mc.std_error + 0.02
