import math

import numpy as np
import pytest

from defaultable import (LatticeSpec, ParametricFamily, defaultable_stock_path,
                         martingale_checks, sample_default_time,
                         simulate_continuous_path, simulate_path,
                         survival_consistency, survival_curve)
from defaultable.default_times import threshold_independence


def test_crossing_time_frozen_example(const_coeffs):
    # Gamma_k = 0.0002k reaches 0.015 at k = 75
    spec = LatticeSpec(const_coeffs, 100, 100.0)
    path = simulate_path(spec, "risk-neutral", seed=8)
    sample = sample_default_time(path, 0.015)
    assert sample.tau == pytest.approx(0.75)
    assert sample.defaulted and sample.resolution == "discrete"


def test_threshold_above_terminal_hazard_never_defaults(const_coeffs):
    spec = LatticeSpec(const_coeffs, 100, 100.0)
    path = simulate_path(spec, "risk-neutral", seed=8)
    sample = sample_default_time(path, path.hazard[-1] + 1e-9)
    assert sample.tau == math.inf and not sample.defaulted


def test_zero_intensity_never_defaults(riskless_coeffs):
    spec = LatticeSpec(riskless_coeffs, 50, 100.0)
    path = simulate_path(spec, "physical", seed=1)
    assert sample_default_time(path, 0.3).tau == math.inf


def test_continuous_path_crossing(const_coeffs):
    path = simulate_continuous_path(const_coeffs, 100.0, 1.0, 1000, seed=2)
    sample = sample_default_time(path, 0.01)
    assert sample.resolution == "continuous"
    assert sample.tau == pytest.approx(0.5, abs=2e-3)


def test_defaultable_stock_jumps_to_zero(const_coeffs):
    spec = LatticeSpec(const_coeffs, 100, 100.0)
    path = simulate_path(spec, "risk-neutral", seed=8)
    sample = sample_default_time(path, 0.015)
    s_delta = defaultable_stock_path(path, sample)
    assert np.all(s_delta[:75] == path.stock[:75])
    assert np.all(s_delta[75:] == 0.0)
    alive = defaultable_stock_path(path, sample_default_time(path, 10.0))
    assert np.array_equal(alive, path.stock)


def test_survival_curve_matches_exponential(const_coeffs):
    spec = LatticeSpec(const_coeffs, 64, 100.0)
    curve = survival_curve(spec, [0.0, 0.25, 0.5, 1.0], 40_000, seed=3)
    rows = {row[0]: row for row in curve.rows}
    t0 = rows[0.0]
    assert t0[1] == 1.0 and t0[2] == 1.0          # survival is certain at t=0
    for t in (0.25, 0.5, 1.0):
        _, emp, model, se = rows[t]
        assert model == pytest.approx(math.exp(-0.02 * t), rel=1e-12)
        assert abs(emp - math.exp(-0.02 * t)) <= 3 * se


def test_survival_curve_at_cap_everywhere():
    # huge c pins lambda at the cap, so survival is exp(-cap * t)
    fam = ParametricFamily("cev_capped_intensity",
                           {"c": 1e9, "p": 1.0, "lambda_cap": 0.3,
                            "sigma": 0.2, "r": 0.05})
    spec = LatticeSpec(fam.build(), 32, 100.0)
    curve = survival_curve(spec, [0.5, 1.0], 20_000, seed=5)
    for t, emp, model, se in curve.rows:
        assert model == pytest.approx(math.exp(-0.3 * t), rel=1e-12)
        assert abs(emp - math.exp(-0.3 * t)) <= 3 * se


def test_tower_identity_for_state_dependent_intensity(cev_coeffs):
    # P(tau > t) == E[exp(-Gamma_t)] is the defining property of the
    # construction; empirically they agree within combined noise.
    spec = LatticeSpec(cev_coeffs, 64, 100.0)
    curve = survival_curve(spec, [0.5, 1.0], 50_000, seed=6)
    for t, emp, model, se in curve.rows:
        assert abs(emp - model) <= 3 * se + 1e-4


def test_martingale_checks_zero_intensity_exact(riskless_coeffs):
    spec = LatticeSpec(riskless_coeffs, 32, 100.0)
    report = martingale_checks(spec, [0.5, 1.0], 10_000, seed=7)
    for t, mean_m, se_m, mean_l, se_l, flagged in report.rows:
        assert mean_m == 0.0 and se_m == 0.0
        assert mean_l == 1.0 and se_l == 0.0
        assert not flagged


def test_martingale_checks_constant_intensity(const_coeffs):
    spec = LatticeSpec(const_coeffs, 100, 100.0)
    report = martingale_checks(spec, [0.5, 1.0], 100_000, seed=8)
    for t, mean_m, se_m, mean_l, se_l, flagged in report.rows:
        assert abs(mean_m) <= 3 * se_m + 1e-12
        assert abs(mean_l - 1.0) <= 3 * se_l + 1e-12
        assert not flagged


def test_threshold_stream_is_independent_of_paths(const_coeffs):
    spec = LatticeSpec(const_coeffs, 32, 100.0)
    corr, se = threshold_independence(spec, 40_000, seed=9)
    assert abs(corr) <= 3 * se


def test_coupled_survival_constant_intensity_gap_is_zero(const_coeffs):
    # deterministic hazard + shared thresholds: the two indicators agree
    # sample by sample
    comp = survival_consistency(const_coeffs, 100.0, 1.0, 64,
                                [0.25, 0.5, 1.0], 20_000, seed=10)
    assert comp.sup_gap == 0.0


def test_coupled_survival_state_dependent_gap_within_noise(cev_coeffs):
    comp = survival_consistency(cev_coeffs, 100.0, 1.0, 256,
                                [0.25, 0.5, 0.75, 1.0], 30_000, seed=11)
    rows = comp.table.rows
    for t, sd, sc, gap, se_pair, se_each in rows:
        assert gap <= 3 * se_each + 1e-12


def test_discrete_to_continuous_survival_trend(cev_coeffs):
    # sup-gap against a fixed fine reference should not grow with n
    sups, ses = [], []
    for n in (16, 64, 256):
        comp = survival_consistency(cev_coeffs, 100.0, 1.0, n,
                                    [0.25, 0.5, 0.75, 1.0], 30_000, seed=12,
                                    fine_steps=2048)
        sups.append(comp.sup_gap)
        ses.append(comp.sup_gap_se)
    assert sups[-1] <= sups[0] + 3 * math.hypot(ses[0], ses[-1])
    assert sups[-1] <= 2 * 3 * ses[-1] + 5e-4
