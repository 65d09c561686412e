"""Empirical weak-convergence harness.

Four studies, each checking one convergence claim at desk scale:

* price_convergence_study - per-n pricing error against a continuous
  reference, with a weighted log-log rate fit and a C/sqrt(n) envelope
  check (the discrete price error is bounded by C/sqrt(n));
* fdd_distance - two-sample Kolmogorov-Smirnov and characteristic-
  function distances between the discrete state marginals (S, xi,
  Gamma, B, survival indicator) and a fine-Euler continuous reference,
  coupled through one Brownian skeleton per sample;
* moment_bound_check - normalized even moments of the terminal stock
  under the risk-neutral measure, which must show no increasing trend
  in n;
* rate_fit - the weighted least-squares rate estimator used by the
  price study, exposed for direct use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import rng as _rng
from .coefficients import CoefficientSet
from .continuous import PdeGrid, default_grid, price_closed_form, solve_pde
from .discrete import DEFAULT_TREE_CAP, price_mc, price_tree
from .errors import NumericalError, UnsupportedMethodError
from .lattice import LatticeSpec
from .payoffs import Payoff
from .tables import Table


# ------------------------------------------------------------------
# two-sample distribution distances
# ------------------------------------------------------------------

def two_sample_ks(x, y) -> float:
    """Kolmogorov-Smirnov statistic sup |F_x - F_y| of two samples."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    if x.size == 0 or y.size == 0:
        raise ValueError("KS statistic needs nonempty samples")
    pooled = np.concatenate([x, y])
    pooled.sort(kind="mergesort")
    cdf_x = np.searchsorted(x, pooled, side="right") / x.size
    cdf_y = np.searchsorted(y, pooled, side="right") / y.size
    return float(np.max(np.abs(cdf_x - cdf_y)))


def ks_critical(alpha: float, n1: int, n2: int) -> float:
    """Asymptotic two-sample critical value c(alpha) * sqrt((n1+n2)/(n1*n2)),
    c(alpha) = sqrt(-ln(alpha/2) / 2)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n1 + n2) / (n1 * n2))


def characteristic_distance(x, y, n_points: int = 13, u_max: float = 4.0) -> float:
    """Max gap between empirical characteristic functions on a u-grid
    scaled to the reference sample's spread."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = float(np.std(y))
    if scale <= 0:
        scale = max(abs(float(np.mean(y))), 1.0)
    u = np.linspace(u_max / n_points, u_max, n_points) / scale
    cf_x = np.exp(1j * np.outer(u, x)).mean(axis=1)
    cf_y = np.exp(1j * np.outer(u, y)).mean(axis=1)
    return float(np.max(np.abs(cf_x - cf_y)))


# ------------------------------------------------------------------
# rate fitting
# ------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float = math.nan
    intercept: float = math.nan
    r_squared: float = math.nan
    n_used: int = 0
    inconclusive: bool = False


REL_SE_FLOOR = 0.05   # weighting floor so exact (se=0) points stay finite


def rate_fit(points: Sequence[tuple]) -> RateFit:
    """Weighted least squares of log error against log n.

    Only points whose error clears 3 standard errors participate;
    weights are 1/(relative error variance) floored at REL_SE_FLOOR.
    Fewer than 3 usable points yields an inconclusive result.
    """
    usable = [(n, e, se) for (n, e, se) in points if e > 3.0 * se and e > 0.0]
    if len(usable) < 3:
        return RateFit(inconclusive=True, n_used=len(usable))
    x = np.log([float(n) for n, _, _ in usable])
    y = np.log([float(e) for _, e, _ in usable])
    rel = np.array([max(se / e, REL_SE_FLOOR) for _, e, se in usable])
    w = 1.0 / rel ** 2
    xm = np.average(x, weights=w)
    ym = np.average(y, weights=w)
    sxx = np.sum(w * (x - xm) ** 2)
    if sxx <= 0:
        return RateFit(inconclusive=True, n_used=len(usable))
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(w * resid ** 2))
    ss_tot = float(np.sum(w * (y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(slope=slope, intercept=intercept, r_squared=r2, n_used=len(usable))


def weighted_slope(x, y, se):
    """WLS slope of y on x with per-point standard errors; returns
    (slope, slope_se)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    se = np.asarray(se, dtype=float)
    se = np.where(se > 0, se, max(float(np.min(se[se > 0])) if np.any(se > 0) else 1.0, 1e-12))
    w = 1.0 / se ** 2
    xm = np.average(x, weights=w)
    sxx = float(np.sum(w * (x - xm) ** 2))
    if sxx <= 0:
        raise NumericalError("degenerate abscissa in weighted slope")
    slope = float(np.sum(w * (x - xm) * (y - np.average(y, weights=w))) / sxx)
    return slope, math.sqrt(1.0 / sxx)


# ------------------------------------------------------------------
# price convergence (Theorem 4.1 at desk scale)
# ------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceReport:
    table: Table
    reference_value: float
    reference_method: str
    fit: RateFit
    envelope_c: float
    slope_ok: bool
    terminal_ok: bool
    envelope_ok: bool
    trend_fraction: float
    passed: bool
    inconclusive: bool


def price_convergence_study(coeffs: CoefficientSet, payoff: Payoff, s0: float,
                            horizon: float, n_values: Sequence[int],
                            reference: str = "closed_form",
                            mc_paths: Union[int, Mapping[int, int]] = 200_000,
                            seed: int = 0, tree_cap: int = DEFAULT_TREE_CAP,
                            pde_grid: Optional[PdeGrid] = None,
                            slope_threshold: float = -0.45,
                            terminal_tol: float = 0.05,
                            chunk_size: int = _rng.DEFAULT_CHUNK,
                            threads: int = 1) -> ConvergenceReport:
    """Per-n pricing error against a continuous reference.

    Exact trees price every n within the cap; larger n fall back to
    risk-neutral Monte Carlo with recorded standard errors (the same
    chunk streams are reused across n, giving common random numbers).
    The rate fit uses only errors resolved above 3 SE. Verdict: fitted
    slope at most slope_threshold, terminal error within terminal_tol,
    and every error under the fitted C/sqrt(n) envelope plus 3 SE.
    """
    n_values = sorted(int(n) for n in n_values)
    if len(n_values) < 2:
        raise ValueError("need at least two step counts")
    if reference == "closed_form":
        ref = price_closed_form(coeffs, payoff, s0, horizon).value
    elif reference == "pde":
        grid = pde_grid or default_grid(coeffs, s0, horizon)
        ref = solve_pde(coeffs, payoff, grid, horizon).value_at(s0)
    else:
        raise UnsupportedMethodError("reference must be 'closed_form' or 'pde'")

    table = Table(["n", "price", "error", "se"])
    points = []
    for n in n_values:
        spec = LatticeSpec(coeffs, n, s0, horizon)
        if n <= tree_cap:
            res = price_tree(spec, payoff, tree_cap=tree_cap)
        else:
            paths = mc_paths[n] if isinstance(mc_paths, Mapping) else int(mc_paths)
            res = price_mc(spec, payoff, paths, seed, chunk_size=chunk_size,
                           threads=threads)
        err = abs(res.value - ref)
        table.append(n, res.value, err, res.std_error)
        points.append((n, err, res.std_error))

    fit = rate_fit(points)
    usable = [(n, e, se) for (n, e, se) in points if e > 3.0 * se and e > 0.0]
    if usable:
        # smallest constant with e <= C/sqrt(n) on every resolved point;
        # the envelope check then guards the noise-dominated tail
        env_c = max(e * math.sqrt(n) for n, e, _ in usable)
    else:
        env_c = math.nan
    envelope_ok = bool(usable) and all(
        e < env_c / math.sqrt(n) + 3.0 * se + 1e-12 for n, e, se in points)
    errors = [e for _, e, _ in points]
    pairs = list(zip(errors[:-1], errors[1:]))
    trend = sum(1 for a, b in pairs if b <= a) / len(pairs)
    slope_ok = (not fit.inconclusive) and fit.slope <= slope_threshold
    terminal_ok = errors[-1] <= terminal_tol
    passed = slope_ok and terminal_ok and envelope_ok
    return ConvergenceReport(table=table, reference_value=ref,
                             reference_method=reference, fit=fit,
                             envelope_c=env_c, slope_ok=slope_ok,
                             terminal_ok=terminal_ok, envelope_ok=envelope_ok,
                             trend_fraction=trend, passed=passed,
                             inconclusive=fit.inconclusive)


# ------------------------------------------------------------------
# finite-dimensional distribution distances (Lemmas 4.1 / 4.2)
# ------------------------------------------------------------------

def fdd_distance(coeffs: CoefficientSet, s0: float, horizon: float,
                 t_checkpoints: Sequence[float], n_values: Sequence[int],
                 samples: int, seed: int, fine_factor: int = 8,
                 alpha: float = 0.01,
                 chunk_size: int = _rng.DEFAULT_CHUNK) -> Table:
    """Distribution distances between the discrete market state and a
    fine-Euler continuous reference, under the physical measure.

    One Brownian skeleton drives everything: the continuous reference
    uses its increments directly and each lattice level n uses the
    signs of its block sums as coins, so the per-n samples are coupled.
    Survival indicators share one exponential threshold per sample.

    Returns rows (t, n, ks_S, cf_S, ks_xi, gamma_gap, survival_gap,
    bond_gap, mean_gap_S, critical, pass).
    """
    if samples < 10_000:
        raise ValueError("fdd_distance requires at least 10^4 samples")
    n_values = sorted(int(n) for n in n_values)
    fine = fine_factor * n_values[-1]
    for n in n_values:
        if fine % n:
            raise ValueError(f"fine grid {fine} not divisible by n={n}")
    # checkpoints must land on every grid involved
    cp_fine = []
    for t in t_checkpoints:
        j = t / horizon * fine
        if abs(j - round(j)) > 1e-9:
            raise ValueError(f"checkpoint {t} off the fine grid")
        for n in n_values:
            k = t / horizon * n
            if abs(k - round(k)) > 1e-9:
                raise ValueError(f"checkpoint {t} off the n={n} grid")
        cp_fine.append(int(round(j)))

    dt_f = horizon / fine
    sq_f = math.sqrt(dt_f)
    quantities = ("stock", "density", "hazard", "bond")
    cont_snaps = {t: {q: [] for q in quantities} for t in t_checkpoints}
    disc_snaps = {(t, n): {q: [] for q in quantities} for t in t_checkpoints for n in n_values}
    thresholds_all = []

    for idx, start, stop in _rng.chunk_ranges(samples, chunk_size):
        count = stop - start
        gen = _rng.generator(seed, _rng.STREAM_REFERENCE, idx)
        theta_gen = _rng.generator(seed, _rng.STREAM_THRESHOLD, idx)
        thresholds_all.append(theta_gen.exponential(1.0, count))

        s_c = np.full(count, float(s0))
        xi_c = np.ones(count)
        b_c = np.ones(count)
        g_c = np.zeros(count)
        disc = {}
        acc = {}
        for n in n_values:
            disc[n] = {"stock": np.full(count, float(s0)), "density": np.ones(count),
                       "bond": np.ones(count), "hazard": np.zeros(count)}
            acc[n] = np.zeros(count)

        for j in range(fine):
            t = j * dt_f
            dw = gen.standard_normal(count) * sq_f
            b = coeffs.drift_b(s_c)
            sig = coeffs.vol_sigma(s_c, t)
            lam = coeffs.intensity_lambda(s_c, t)
            r = coeffs.rate_r(s_c)
            th = (r * s_c - b) / (sig * s_c)
            s_c = s_c + (b + lam * s_c) * dt_f + sig * s_c * dw
            s_c = np.maximum(s_c, 1e-12 * s0)
            xi_c = xi_c * (1.0 + th * dw)
            b_c = b_c * (1.0 + r * dt_f)
            g_c = g_c + lam * dt_f
            for n in n_values:
                acc[n] += dw
                block = fine // n
                if (j + 1) % block == 0:
                    k = (j + 1) // block - 1
                    st = disc[n]
                    t_k = k * horizon / n
                    dt_n = horizon / n
                    sq_n = math.sqrt(dt_n)
                    eps = np.where(acc[n] >= 0.0, 1.0, -1.0)
                    bd = coeffs.drift_b(st["stock"])
                    sigd = coeffs.vol_sigma(st["stock"], t_k)
                    lamd = coeffs.intensity_lambda(st["stock"], t_k)
                    rd = coeffs.rate_r(st["stock"])
                    thd = (rd * st["stock"] - bd) / (sigd * st["stock"])
                    new_s = (st["stock"] + (bd + lamd * st["stock"]) * dt_n
                             + sigd * st["stock"] * sq_n * eps)
                    st["stock"] = np.maximum(new_s, 1e-12 * s0)
                    st["density"] = st["density"] * (1.0 + thd * sq_n * eps)
                    st["bond"] = st["bond"] * (1.0 + rd * dt_n)
                    st["hazard"] = st["hazard"] + lamd * dt_n
                    acc[n][:] = 0.0
            if (j + 1) in cp_fine:
                t_cp = t_checkpoints[cp_fine.index(j + 1)]
                snap = cont_snaps[t_cp]
                snap["stock"].append(s_c.copy())
                snap["density"].append(xi_c.copy())
                snap["hazard"].append(g_c.copy())
                snap["bond"].append(b_c.copy())
                for n in n_values:
                    dsnap = disc_snaps[(t_cp, n)]
                    for q in quantities:
                        dsnap[q].append(disc[n][q].copy())

    thresholds = np.concatenate(thresholds_all)
    tab = Table(["t", "n", "ks_S", "cf_S", "ks_xi", "gamma_gap", "survival_gap",
                 "bond_gap", "mean_gap_S", "critical", "pass"])
    crit = ks_critical(alpha, samples, samples)
    for t in t_checkpoints:
        cont = {q: np.concatenate(cont_snaps[t][q]) for q in quantities}
        surv_c = float(np.mean(thresholds > cont["hazard"]))
        for n in n_values:
            d = {q: np.concatenate(disc_snaps[(t, n)][q]) for q in quantities}
            ks_s = two_sample_ks(d["stock"], cont["stock"])
            cf_s = characteristic_distance(d["stock"], cont["stock"])
            ks_xi = two_sample_ks(d["density"], cont["density"])
            gamma_gap = abs(float(np.mean(d["hazard"]) - np.mean(cont["hazard"])))
            surv_d = float(np.mean(thresholds > d["hazard"]))
            bond_gap = abs(float(np.mean(d["bond"]) - np.mean(cont["bond"])))
            mean_gap = abs(float(np.mean(d["stock"]) - np.mean(cont["stock"])))
            ok = ks_s <= crit and ks_xi <= crit
            tab.append(float(t), n, ks_s, cf_s, ks_xi, gamma_gap,
                       abs(surv_d - surv_c), bond_gap, mean_gap, crit, bool(ok))
    return tab


# ------------------------------------------------------------------
# moment bounds (Lemma 4.3 at desk scale)
# ------------------------------------------------------------------

@dataclass(frozen=True)
class MomentReport:
    table: Table                       # n, m, value, se
    slopes: Mapping[int, tuple]        # m -> (slope, slope_se)
    ceiling: float
    passed: bool


def moment_bound_check(coeffs: CoefficientSet, s0: float, horizon: float,
                       n_values: Sequence[int], m_values: Sequence[int],
                       samples: int, seed: int, ceiling: float = math.inf,
                       chunk_size: int = _rng.DEFAULT_CHUNK,
                       threads: int = 1) -> MomentReport:
    """Normalized moments E[(S_n)^{2m}] / (1 + S0^{2m}) under the
    risk-neutral measure; passes when no m shows a significantly
    positive trend in log n and all values stay under the ceiling."""
    from .lattice import simulate_batch
    m_values = sorted(int(m) for m in m_values)
    if any(m not in (1, 2) for m in m_values):
        raise ValueError("moment orders are restricted to m in {1, 2}")
    if samples < 100_000:
        raise ValueError("moment_bound_check requires at least 10^5 samples")
    table = Table(["n", "m", "value", "se"])
    by_m = {m: [] for m in m_values}
    for n in sorted(int(x) for x in n_values):
        spec = LatticeSpec(coeffs, n, s0, horizon)
        accs = {m: _rng.MeanAccumulator() for m in m_values}

        def run_chunk(idx, count, _spec=spec):
            gen = _rng.generator(seed, _rng.STREAM_PATHS, idx)
            batch = simulate_batch(_spec, "risk-neutral", gen, count)
            return batch["stock"]

        for stock in _rng.map_chunks(run_chunk, samples, chunk_size, threads):
            for m in m_values:
                accs[m].add(stock ** (2 * m) / (1.0 + s0 ** (2 * m)))
        for m in m_values:
            v, se = accs[m].mean(), accs[m].std_error()
            table.append(n, m, v, se)
            by_m[m].append((n, v, se))

    slopes = {}
    passed = True
    for m in m_values:
        ns = [row[0] for row in by_m[m]]
        vs = [row[1] for row in by_m[m]]
        ses = [row[2] for row in by_m[m]]
        slope, slope_se = weighted_slope(np.log(ns), vs, ses)
        slopes[m] = (slope, slope_se)
        if slope > 2.0 * slope_se:
            passed = False
        if any(v > ceiling for v in vs):
            passed = False
    return MomentReport(table=table, slopes=slopes, ceiling=ceiling, passed=passed)
