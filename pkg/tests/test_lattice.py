import math

import numpy as np
import pytest

from defaultable import (LatticeSpec, NonpositiveStockError, ParametricFamily,
                         PositivityWindowError, simulate_path, state_prices,
                         step_bond, step_density, step_hazard, step_stock)
from defaultable.coefficients import CoefficientSet
from defaultable.lattice import required_steps, simulate_batch
from defaultable.rng import generator


def spec_of(coeffs, n, s0=100.0, horizon=1.0, policy="reject"):
    return LatticeSpec(coeffs, n, s0, horizon, stock_policy=policy)


# -- single steps --------------------------------------------------

def test_stock_step_one_period_up_down(riskless_coeffs):
    spec = spec_of(riskless_coeffs, 1)
    assert step_stock(100.0, 0.0, +1, spec) == pytest.approx(120.0, abs=1e-12)
    assert step_stock(100.0, 0.0, -1, spec) == pytest.approx(80.0, abs=1e-12)


def test_stock_step_with_drift_and_intensity(geometric_coeffs):
    # S + S*(mu+lambda)*dt + sigma*S*sqrt(dt), dt=1/100
    spec = spec_of(geometric_coeffs, 100)
    out = step_stock(100.0, 0.0, +1, spec)
    assert out == pytest.approx(100 + 100 * 0.12 / 100 + 100 * 0.2 / 10, abs=1e-12)
    assert out == pytest.approx(102.12)


def test_stock_step_degenerate_is_identity():
    frozen = CoefficientSet(
        drift_b=lambda s: 0.0, vol_sigma=lambda s, t: 0.0,
        intensity_lambda=lambda s, t: 0.0, rate_r=lambda s: 0.0,
        sigma_floor=1e-9, lambda_cap=0.0)
    spec = spec_of(frozen, 4)
    for eps in (+1, -1):
        assert step_stock(100.0, 0.0, eps, spec) == 100.0


def test_stock_step_nonpositive_policies():
    big = ParametricFamily("constant", {"b": 0.0, "sigma": 1.5,
                                        "lambda": 0.0, "r": 0.0}).build()
    spec = spec_of(big, 1)        # down factor 1 - 1.5 < 0
    with pytest.raises(NonpositiveStockError) as err:
        step_stock(100.0, 0.0, -1, spec)
    assert err.value.eps == -1 and err.value.spot == 100.0
    spec_absorb = spec_of(big, 1, policy="absorb")
    assert step_stock(100.0, 0.0, -1, spec_absorb) == spec_absorb.absorb_floor


def test_bond_step_and_product(const_coeffs, riskless_coeffs):
    assert step_bond(1.0, 100.0, spec_of(riskless_coeffs, 10)) == 1.0
    spec = spec_of(const_coeffs, 100)
    assert step_bond(1.0, 100.0, spec) == pytest.approx(1.0005, abs=1e-15)
    path = simulate_path(spec, "physical", seed=1)
    # closed-form product of constant growth factors
    assert path.bond[-1] == pytest.approx(1.0005 ** 100, rel=1e-12)
    assert path.bond[-1] == pytest.approx(1.0512579599480434, rel=1e-12)


def test_hazard_step_cases(const_coeffs, riskless_coeffs, cev_coeffs):
    assert step_hazard(0.0, 100.0, 0.0, spec_of(riskless_coeffs, 10)) == 0.0
    spec = spec_of(const_coeffs, 100)
    gamma = 0.0
    for k in range(50):
        gamma = step_hazard(gamma, 100.0, k / 100, spec)
    assert gamma == pytest.approx(0.01, rel=1e-12)
    inc = step_hazard(0.0, 100.0, 0.0, spec_of(cev_coeffs, 100))
    assert inc == pytest.approx(0.0002, rel=1e-12)    # min(2/100, 1)/100


def test_density_step_frozen_and_martingale(geometric_coeffs):
    spec = spec_of(geometric_coeffs, 100)   # theta = -0.25
    up = step_density(1.0, 100.0, 0.0, +1, spec)
    dn = step_density(1.0, 100.0, 0.0, -1, spec)
    assert up == pytest.approx(0.975, abs=1e-14)
    assert dn == pytest.approx(1.025, abs=1e-14)
    assert 0.5 * up + 0.5 * dn == pytest.approx(1.0, abs=1e-15)


def test_density_driftless(riskless_coeffs):
    spec = spec_of(riskless_coeffs, 100)
    path = simulate_path(spec, "physical", seed=9)
    assert np.allclose(path.density, 1.0, atol=1e-14)


# -- state prices --------------------------------------------------

def test_state_prices_trivial_half(riskless_coeffs):
    sp = state_prices(100.0, 0.0, spec_of(riskless_coeffs, 4))
    assert sp.pi_up == sp.pi_down == pytest.approx(0.5, abs=1e-15)
    assert sp.q_up == 0.5


def test_state_prices_frozen_example(geometric_coeffs):
    spec = spec_of(geometric_coeffs, 100)
    sp = state_prices(100.0, 0.0, spec)
    rt = 100 * ((1 + 0.05 / 100) * math.exp(0.02 / 100) - 1)
    assert sp.pi_up == pytest.approx(0.5 * 0.975 / (1 + rt / 100), abs=1e-14)
    assert sp.pi_down == pytest.approx(0.5 * 1.025 / (1 + rt / 100), abs=1e-14)
    assert sp.pi_up == pytest.approx(0.48715893028420787, abs=1e-12)
    assert sp.pi_down == pytest.approx(0.5121414395295518, abs=1e-12)
    assert sp.total == pytest.approx(1 / (1 + rt / 100), abs=1e-15)
    assert sp.q_up == pytest.approx(0.5 * (1 - 0.25 / 10), abs=1e-15)


def test_positivity_window_reports_required_steps():
    steep = ParametricFamily("constant", {"b": 0.0, "sigma": 0.05,
                                          "lambda": 0.0, "r": 0.9}).build()
    # theta = 18, needs n > 324
    with pytest.raises(PositivityWindowError) as err:
        LatticeSpec(steep, 100, 100.0)
    assert err.value.n_required == 325
    LatticeSpec(steep, 325, 100.0)    # boundary case constructs fine
    assert required_steps(18.0, 1.0) == 325


def test_stock_pricing_defect_is_second_order(const_coeffs):
    # |pi_up*S_up + pi_down*S_down - S| should shrink like n^-2
    defects, ns = [], [16, 32, 64, 128, 256, 512, 1024]
    for n in ns:
        spec = spec_of(const_coeffs, n)
        worst = 0.0
        for s in (60.0, 100.0, 150.0):
            sp = state_prices(s, 0.0, spec)
            up = step_stock(s, 0.0, +1, spec)
            dn = step_stock(s, 0.0, -1, spec)
            worst = max(worst, abs(sp.pi_up * up + sp.pi_down * dn - s))
        defects.append(worst)
    slope = np.polyfit(np.log(ns), np.log(defects), 1)[0]
    assert slope <= -1.8
    # fitted constant is O(1) in units of S/n^2
    assert defects[-1] * 1024 ** 2 / 100.0 < 10.0


def test_riskless_stock_priced_exactly(riskless_coeffs):
    # lambda = 0 makes the one-step stock pricing exact, not just O(dt^2)
    spec = spec_of(riskless_coeffs, 16)
    sp = state_prices(100.0, 0.0, spec)
    up = step_stock(100.0, 0.0, +1, spec)
    dn = step_stock(100.0, 0.0, -1, spec)
    assert sp.pi_up * up + sp.pi_down * dn == pytest.approx(100.0, abs=1e-12)


# -- simulated paths ----------------------------------------------

def test_simulate_path_deterministic_and_invariants(const_coeffs):
    spec = spec_of(const_coeffs, 64)
    a = simulate_path(spec, "physical", seed=7)
    b = simulate_path(spec, "physical", seed=7)
    assert np.array_equal(a.stock, b.stock)
    assert a.bond[0] == a.density[0] == a.beta[0] == 1.0 and a.hazard[0] == 0.0
    rel = np.abs(a.beta - a.bond * np.exp(a.hazard)) / a.beta
    assert np.max(rel) <= 1e-10
    assert np.all(np.diff(a.hazard) >= 0)
    assert np.all(np.diff(a.bond) >= 0)


def test_near_deterministic_path_follows_drift():
    tiny = ParametricFamily("constant", {"b": 0.0, "sigma": 1e-10,
                                         "lambda": 0.02, "r": 0.0}).build()
    spec = spec_of(tiny, 32)
    path = simulate_path(spec, "physical", seed=5)
    drift_only = 100.0 * (1 + 0.02 / 32) ** np.arange(33)
    assert np.allclose(path.stock, drift_only, rtol=1e-8)


def test_density_stateprice_factorization(geometric_coeffs):
    # xi_{k+1}/xi_k == 2 * pi(realized) * beta_{k+1}/beta_k at every step
    spec = spec_of(geometric_coeffs, 50)
    path = simulate_path(spec, "physical", seed=13)
    for k in range(spec.n):
        sp = state_prices(path.stock[k], spec.time_at(k), spec)
        pi_realized = sp.pi_up if path.epsilons[k + 1] > 0 else sp.pi_down
        lhs = path.density[k + 1] / path.density[k]
        rhs = 2.0 * pi_realized * path.beta[k + 1] / path.beta[k]
        assert lhs == pytest.approx(rhs, rel=1e-12)


def _mean_eps_from_multiplicative_batch(coeffs, n, paths, measure, seed, mu=0.0):
    """Recover the average coin from terminal spots of an affine-drift batch."""
    spec = spec_of(coeffs, n)
    gen = generator(seed)
    batch = simulate_batch(spec, measure, gen, paths)
    dt = spec.dt
    lam = coeffs.params.get("lambda", 0.0)
    up = math.log(1 + (mu + lam) * dt + 0.2 * math.sqrt(dt))
    dn = math.log(1 + (mu + lam) * dt - 0.2 * math.sqrt(dt))
    j = (np.log(batch["stock"] / 100.0) - n * dn) / (up - dn)
    return float(np.mean(2.0 * j / n - 1.0))


def test_fair_coin_mean_under_physical_measure(riskless_coeffs):
    mean = _mean_eps_from_multiplicative_batch(riskless_coeffs, 16, 62_500, "physical", 3)
    assert abs(mean) <= 3.0 / math.sqrt(16 * 62_500)


def test_biased_coin_mean_under_risk_neutral_measure(geometric_coeffs):
    # E[eps] = theta/sqrt(n) = -0.025 for theta=-0.25, n=100
    mean = _mean_eps_from_multiplicative_batch(
        geometric_coeffs, 100, 20_000, "risk-neutral", 4, mu=0.1)
    se = 1.0 / math.sqrt(100 * 20_000)
    assert mean == pytest.approx(-0.025, abs=3 * se)


def test_fair_coin_density_is_martingale(const_coeffs):
    spec = spec_of(const_coeffs, 64)
    gen = generator(17)
    batch = simulate_batch(spec, "physical", gen, 100_000, track_density=True)
    xi = batch["density"]
    se = float(np.std(xi, ddof=1)) / math.sqrt(xi.size)
    assert float(np.mean(xi)) == pytest.approx(1.0, abs=3 * se)


def test_batch_rejection_bookkeeping():
    big = ParametricFamily("constant", {"b": 0.0, "sigma": 1.2,
                                        "lambda": 0.0, "r": 0.0}).build()
    spec = spec_of(big, 1)
    gen = generator(0)
    with pytest.raises(NonpositiveStockError):
        simulate_batch(spec, "physical", gen, 1000)
    gen = generator(0)
    batch = simulate_batch(spec, "physical", gen, 1000, drop_rejected=True)
    frac = np.count_nonzero(batch["rejected"]) / 1000
    assert 0.3 < frac < 0.7          # the down branch dies, the up one survives


def test_path_csv_export(tmp_path, const_coeffs):
    spec = spec_of(const_coeffs, 8)
    path = simulate_path(spec, "physical", seed=2)
    out = tmp_path / "path.csv"
    path.to_csv(out)
    text = out.read_text()
    lines = text.strip().split("\n")
    assert lines[0] == "k,t,eps,S,B,xi,Gamma,beta"
    assert len(lines) == 10                      # header + 9 states
    assert text.endswith("\n")
    first = lines[1].split(",")
    assert first[0] == "0" and float(first[3]) == 100.0
