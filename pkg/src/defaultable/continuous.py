"""Continuous-time reference prices.

The pre-default value solves the hazard-augmented backward PDE

    Y_t + sigma^2 S^2 / 2 * Y_SS + (r + lambda) S * Y_S - (r + lambda) Y = 0,
    Y(S, T) = g(S),

equivalently Y = E_Q*[ exp(-int (r+lambda)) g(S_T) ] with risk-neutral
dynamics dS = S[(r + lambda) dt + sigma dW]. Three routes are provided:
the lognormal closed form (constant coefficients, discount rate
r + lambda), a Crank-Nicolson finite-difference solve with a Rannacher
start, and Euler Monte Carlo with trapezoidal accumulation of the
discount integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.stats import norm

from . import rng as _rng
from .coefficients import CoefficientSet
from .discrete import PriceResult
from .errors import (NumericalError, UnsupportedMethodError)
from .payoffs import Payoff
from .tables import Table


# ------------------------------------------------------------------
# closed form (constant coefficients)
# ------------------------------------------------------------------

def price_closed_form(coeffs: CoefficientSet, payoff: Payoff, s0: float,
                      maturity: float, t: float = 0.0) -> PriceResult:
    """Exact lognormal value with hazard-augmented rate r + lambda.

    Only constant-coefficient sets qualify; other families raise
    UnsupportedMethodError, as do payoffs without a closed form.
    """
    if coeffs.family != "constant":
        raise UnsupportedMethodError(
            f"closed form needs the constant family, got '{coeffs.family}'")
    if s0 <= 0:
        raise ValueError("S0 must be positive")
    if not 0.0 <= t <= maturity:
        raise ValueError("valuation time outside [0, maturity]")
    sigma = float(coeffs.params.get("sigma", 0.2))
    rate = float(coeffs.params.get("r", 0.0)) + float(coeffs.params.get("lambda", 0.0))
    tau = maturity - t
    k = payoff.strike

    if tau == 0.0:
        value = float(payoff(s0))
    elif payoff.kind == "identity":
        value = s0
    elif payoff.kind == "constant":
        value = payoff.level * math.exp(-rate * tau)
    elif payoff.kind in ("call", "put", "digital"):
        if k <= 0:
            raise ValueError("strike must be positive for the closed form")
        srt = sigma * math.sqrt(tau)
        d1 = (math.log(s0 / k) + (rate + 0.5 * sigma * sigma) * tau) / srt
        d2 = d1 - srt
        df = math.exp(-rate * tau)
        if payoff.kind == "call":
            value = s0 * norm.cdf(d1) - k * df * norm.cdf(d2)
        elif payoff.kind == "put":
            value = k * df * norm.cdf(-d2) - s0 * norm.cdf(-d1)
        else:
            value = df * norm.cdf(d2)
    else:
        raise UnsupportedMethodError(f"no closed form for payoff '{payoff.kind}'")
    return PriceResult(value=value, std_error=0.0, method="closed-form",
                       time=t, spot=s0)


# ------------------------------------------------------------------
# finite differences
# ------------------------------------------------------------------

@dataclass(frozen=True)
class PdeGrid:
    """Spatial/temporal discretization for the pricing PDE."""

    s_min: float
    s_max: float
    m_space: int = 400
    m_time: int = 400
    spacing: str = "uniform-s"

    def __post_init__(self):
        if not (0.0 < self.s_min < self.s_max):
            raise ValueError("need 0 < s_min < s_max")
        if self.m_space < 3:
            raise ValueError("m_space must be >= 3")
        if self.m_time < 1:
            raise ValueError("m_time must be >= 1")
        if self.spacing not in ("uniform-s", "uniform-logs"):
            raise ValueError("spacing must be 'uniform-s' or 'uniform-logs'")

    def spots(self) -> np.ndarray:
        if self.spacing == "uniform-s":
            return np.linspace(self.s_min, self.s_max, self.m_space + 2)
        return np.exp(np.linspace(math.log(self.s_min), math.log(self.s_max),
                                  self.m_space + 2))


def default_grid(coeffs: CoefficientSet, s0: float, maturity: float,
                 m_space: int = 400, m_time: int = 400,
                 spacing: str = "uniform-s", width: float = 6.0) -> PdeGrid:
    """Grid centered on S0 with boundaries width sigma-root-T away."""
    sig = float(np.max(coeffs.vol_sigma(s0, 0.0)))
    span = width * sig * math.sqrt(maturity)
    s_lo = max(s0 * math.exp(-span), coeffs.s_min)
    s_hi = min(s0 * math.exp(span), coeffs.s_max)
    return PdeGrid(s_lo, s_hi, m_space, m_time, spacing)


@dataclass(frozen=True)
class PdeSurface:
    """Solution Y(S, t) on the grid; values[j] is the t_grid[j] slice."""

    s_grid: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray

    def value_at(self, s0: float, t: float = 0.0) -> float:
        if not (self.s_grid[0] <= s0 <= self.s_grid[-1]):
            raise ValueError("S0 outside the PDE grid")
        j = int(np.argmin(np.abs(self.t_grid - t)))
        return float(np.interp(s0, self.s_grid, self.values[j]))

    def to_table(self) -> Table:
        tab = Table(["S", "t", "Y"])
        for j, t in enumerate(self.t_grid):
            for i, s in enumerate(self.s_grid):
                tab.append(float(s), float(t), float(self.values[j, i]))
        return tab


def _operator_rows(coeffs: CoefficientSet, s: np.ndarray, t: float):
    """Spatial-operator coefficients (sub, diag, super) on the interior
    plus the linearity (zero-gamma) row at the upper boundary."""
    sig = np.broadcast_to(np.asarray(coeffs.vol_sigma(s, t), dtype=float), s.shape)
    lam = np.broadcast_to(np.asarray(coeffs.intensity_lambda(s, t), dtype=float), s.shape)
    rr = np.broadcast_to(np.asarray(coeffs.rate_r(s), dtype=float), s.shape)
    rho = rr + lam
    h = np.diff(s)
    hm, hp = h[:-1], h[1:]
    si = s[1:-1]
    diff = 0.5 * sig[1:-1] ** 2 * si ** 2
    conv = rho[1:-1] * si
    sub = 2.0 * diff / (hm * (hm + hp)) - conv * hp / (hm * (hm + hp))
    sup = 2.0 * diff / (hp * (hm + hp)) + conv * hm / (hp * (hm + hp))
    mid = -2.0 * diff / (hm * hp) + conv * (hp - hm) / (hm * hp) - rho[1:-1]
    # upper boundary: Y_SS = 0, one-sided first derivative
    h_last = h[-1]
    up_sub = -rho[-1] * s[-1] / h_last
    up_mid = rho[-1] * s[-1] / h_last - rho[-1]
    return sub, mid, sup, up_sub, up_mid


def _lower_boundary_values(coeffs: CoefficientSet, payoff: Payoff, s_lo: float,
                           t_grid: np.ndarray) -> np.ndarray:
    """Dirichlet values at S_min: evolve the zero-diffusion characteristic
    dS/du = (r + lambda) S from each time level to maturity and discount
    the payoff along it."""
    m = t_grid.size
    out = np.empty(m)
    out[-1] = float(payoff(s_lo))
    state = np.full(m - 1, s_lo)     # state[j]: characteristic started at t_grid[j]
    disc = np.zeros(m - 1)
    for j in range(m - 1):           # advance all live characteristics over step j
        live = np.arange(j + 1)
        t0, t1 = t_grid[j], t_grid[j + 1]
        dt = t1 - t0
        s_cur = state[live]
        rho0 = np.asarray(coeffs.rate_r(s_cur), dtype=float) + \
            np.asarray(coeffs.intensity_lambda(s_cur, t0), dtype=float)
        s_mid = s_cur * (1.0 + rho0 * dt)
        rho1 = np.asarray(coeffs.rate_r(s_mid), dtype=float) + \
            np.asarray(coeffs.intensity_lambda(s_mid, t1), dtype=float)
        rho = 0.5 * (rho0 + rho1)
        state[live] = s_cur * np.exp(rho * dt)
        disc[live] = disc[live] + rho * dt
    out[:-1] = np.exp(-disc) * np.asarray(payoff(state), dtype=float)
    return out


def solve_pde(coeffs: CoefficientSet, payoff: Payoff, grid: PdeGrid,
              maturity: float, rannacher: bool = True) -> PdeSurface:
    """Crank-Nicolson solve of the pricing PDE, marching from maturity.

    The first step is replaced by two implicit half-steps (Rannacher)
    to damp the payoff kink; the lower boundary is Dirichlet along the
    zero-diffusion characteristic, the upper assumes linearity.
    """
    s = grid.spots()
    m_int = s.size - 2
    t_grid = np.linspace(0.0, maturity, grid.m_time + 1)
    values = np.empty((grid.m_time + 1, s.size))
    values[-1] = np.asarray(payoff(s), dtype=float)
    lower = _lower_boundary_values(coeffs, payoff, float(s[0]), t_grid)

    time_indep = coeffs.family != "custom"
    cached = _operator_rows(coeffs, s, 0.0) if time_indep else None

    def rows_at(t):
        return cached if time_indep else _operator_rows(coeffs, s, t)

    def march(y_next, t_new, t_old, phi, substeps=1):
        """Advance from t_old down to t_new with `substeps` equal theta-steps."""
        y = y_next
        dt_full = (t_old - t_new) / substeps
        for ss in range(substeps):
            t_hi = t_old - ss * dt_full
            t_lo = t_hi - dt_full
            sub_e, mid_e, sup_e, usub_e, umid_e = rows_at(t_hi)
            sub_i, mid_i, sup_i, usub_i, umid_i = rows_at(t_lo)
            nsys = m_int + 1
            rhs = np.empty(nsys)
            if phi < 1.0:
                w = (1.0 - phi) * dt_full
                interior = y[1:-1]
                rhs[:-1] = interior + w * (sub_e * y[:-2] + mid_e * interior + sup_e * y[2:])
                rhs[-1] = y[-1] + w * (usub_e * y[-2] + umid_e * y[-1])
            else:
                rhs[:-1] = y[1:-1]
                rhs[-1] = y[-1]
            wi = phi * dt_full
            # boundary value enters the first interior row at the new level
            y_lo = np.interp(t_lo, t_grid, lower)
            rhs[0] += wi * sub_i[0] * y_lo
            ab = np.zeros((3, nsys))
            ab[0, 1:] = -wi * sup_i                # super-diagonal, rows 0..m-1
            ab[1, :-1] = 1.0 - wi * mid_i
            ab[1, -1] = 1.0 - wi * umid_i
            ab[2, :-2] = -wi * sub_i[1:]           # sub-diagonal, rows 1..m-1
            ab[2, -2] = -wi * usub_i
            try:
                sol = solve_banded((1, 1), ab, rhs)
            except Exception as exc:  # singular system: should not happen with a sigma floor
                raise NumericalError(f"tridiagonal solve failed at t={t_lo:.6g}: {exc}")
            if not np.all(np.isfinite(sol)):
                raise NumericalError(f"non-finite PDE solution at t={t_lo:.6g}")
            y_new = np.empty_like(y)
            y_new[0] = y_lo
            y_new[1:] = sol
            y = y_new
        return y

    y = values[-1]
    for j in range(grid.m_time - 1, -1, -1):
        first = j == grid.m_time - 1
        if first and rannacher:
            y = march(y, t_grid[j], t_grid[j + 1], phi=1.0, substeps=2)
        else:
            y = march(y, t_grid[j], t_grid[j + 1], phi=0.5)
        values[j] = y
    return PdeSurface(s_grid=s, t_grid=t_grid, values=values)


def pde_residual(surface: PdeSurface, coeffs: CoefficientSet,
                 terminal_margin: float = 0.15, spot_band: float = 0.10) -> float:
    """Max |PDE residual| of the numerical solution under centered
    differences in S and t, over interior nodes.

    A fixed time band below maturity is skipped: the terminal payoff
    kink makes Y_tt unbounded there, so the centered-difference residual
    cannot converge near T for any scheme. A relative band around each
    space boundary is skipped too (one-sided boundary stencils).
    """
    s, t, y = surface.s_grid, surface.t_grid, surface.values
    nlev = t.size
    t_cut = t[-1] * (1.0 - terminal_margin)
    j_hi = min(int(np.searchsorted(t, t_cut)) - 1, nlev - 3)
    if j_hi < 1:
        raise ValueError("surface too coarse for a residual check")
    i_keep = (s >= s[0] + spot_band * (s[-1] - s[0])) & (s <= s[-1] - spot_band * (s[-1] - s[0]))
    i_keep[0] = i_keep[-1] = False
    worst = 0.0
    h = np.diff(s)
    hm, hp = h[:-1], h[1:]
    for j in range(1, j_hi + 1):
        dt_c = t[j + 1] - t[j - 1]
        y_t = (y[j + 1] - y[j - 1]) / dt_c
        yj = y[j]
        y_s = (-hp / (hm * (hm + hp)) * yj[:-2]
               + (hp - hm) / (hm * hp) * yj[1:-1]
               + hm / (hp * (hm + hp)) * yj[2:])
        y_ss = 2.0 * (yj[:-2] / (hm * (hm + hp)) - yj[1:-1] / (hm * hp)
                      + yj[2:] / (hp * (hm + hp)))
        si = s[1:-1]
        sig = np.broadcast_to(np.asarray(coeffs.vol_sigma(si, t[j]), dtype=float), si.shape)
        lam = np.broadcast_to(np.asarray(coeffs.intensity_lambda(si, t[j]), dtype=float), si.shape)
        rr = np.broadcast_to(np.asarray(coeffs.rate_r(si), dtype=float), si.shape)
        rho = rr + lam
        res = (y_t[1:-1] + 0.5 * sig ** 2 * si ** 2 * y_ss
               + rho * si * y_s - rho * yj[1:-1])
        res = res[i_keep[1:-1]]
        if res.size:
            worst = max(worst, float(np.max(np.abs(res))))
    return worst


# ------------------------------------------------------------------
# Euler Monte Carlo under the risk-neutral measure
# ------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuousPath:
    """One Euler trajectory under the risk-neutral dynamics: spot,
    accumulated discount integral int(r+lambda), and hazard Gamma."""

    times: np.ndarray
    stock: np.ndarray
    rate_integral: np.ndarray
    hazard: np.ndarray


def simulate_continuous_path(coeffs: CoefficientSet, s0: float, maturity: float,
                             steps: int, seed: int = 0,
                             normals: Optional[Sequence[float]] = None) -> ContinuousPath:
    """Single Euler path of dS = S[(r+lambda)dt + sigma dW] with
    trapezoidal discount accumulation."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    gen = seed if isinstance(seed, np.random.Generator) else _rng.generator(seed)
    dt = maturity / steps
    sq = math.sqrt(dt)
    z = np.asarray(normals, dtype=float) if normals is not None else gen.standard_normal(steps)
    times = np.arange(steps + 1) * dt
    stock = np.empty(steps + 1)
    ratei = np.empty(steps + 1)
    haz = np.empty(steps + 1)
    stock[0], ratei[0], haz[0] = s0, 0.0, 0.0
    s = s0
    rho_prev = float(coeffs.rate_r(s) + coeffs.intensity_lambda(s, 0.0))
    lam_prev = float(coeffs.intensity_lambda(s, 0.0))
    for j in range(steps):
        sig = float(coeffs.vol_sigma(s, times[j]))
        s = s * (1.0 + rho_prev * dt + sig * sq * z[j])
        s = max(s, 1e-12 * s0)
        lam = float(coeffs.intensity_lambda(s, times[j + 1]))
        rho = float(coeffs.rate_r(s)) + lam
        ratei[j + 1] = ratei[j] + 0.5 * (rho_prev + rho) * dt
        haz[j + 1] = haz[j] + 0.5 * (lam_prev + lam) * dt
        rho_prev, lam_prev = rho, lam
        stock[j + 1] = s
    return ContinuousPath(times=times, stock=stock, rate_integral=ratei, hazard=haz)


def simulate_continuous_batch(coeffs: CoefficientSet, s0: float, maturity: float,
                              steps: int, gen: np.random.Generator, n_paths: int,
                              record_steps: Sequence[int] = (),
                              normals: Optional[np.ndarray] = None,
                              track_hazard: bool = False,
                              floor: float = 0.0) -> dict:
    """Vectorized Euler batch under the risk-neutral measure. Returns
    terminal stock/discount integral (+hazard), a 'floored' mask of
    paths that hit a nonpositive stock, and snapshots at the requested
    step indices."""
    dt = maturity / steps
    sq = math.sqrt(dt)
    affine = coeffs.affine_drift_constants()
    s = np.full(n_paths, float(s0))
    ratei = np.zeros(n_paths)
    haz = np.zeros(n_paths) if track_hazard else None
    floored = np.zeros(n_paths, dtype=bool)
    clamp = floor if floor > 0 else 1e-8 * s0
    record_set = set(int(j) for j in record_steps)
    records = {}

    def snapshot(j):
        snap = {"stock": s.copy(), "rate_integral": ratei.copy()}
        if haz is not None:
            snap["hazard"] = haz.copy()
        records[j] = snap

    if 0 in record_set:
        snapshot(0)

    if affine is not None:
        _, _, sig_c, lam_c, r_c = affine
        rho_c = r_c + lam_c
        for j in range(steps):
            z = normals[:, j] if normals is not None else gen.standard_normal(n_paths)
            s = s * (1.0 + rho_c * dt + sig_c * sq * z)
            bad = s <= 0.0
            if np.any(bad):
                floored |= bad
                s = np.where(bad, clamp, s)
            ratei += rho_c * dt
            if haz is not None:
                haz += lam_c * dt
            if (j + 1) in record_set:
                snapshot(j + 1)
    else:
        lam_prev = np.broadcast_to(np.asarray(coeffs.intensity_lambda(s, 0.0), dtype=float),
                                   s.shape).copy()
        rho_prev = np.broadcast_to(np.asarray(coeffs.rate_r(s), dtype=float),
                                   s.shape) + lam_prev
        for j in range(steps):
            t = j * dt
            sig = coeffs.vol_sigma(s, t)
            z = normals[:, j] if normals is not None else gen.standard_normal(n_paths)
            s = s * (1.0 + rho_prev * dt + sig * sq * z)
            bad = s <= 0.0
            if np.any(bad):
                floored |= bad
                s = np.where(bad, clamp, s)
            lam = np.broadcast_to(np.asarray(coeffs.intensity_lambda(s, t + dt), dtype=float),
                                  s.shape)
            rho = np.broadcast_to(np.asarray(coeffs.rate_r(s), dtype=float), s.shape) + lam
            ratei = ratei + 0.5 * (rho_prev + rho) * dt
            if haz is not None:
                haz = haz + 0.5 * (lam_prev + lam) * dt
            lam_prev, rho_prev = lam, rho
            if (j + 1) in record_set:
                snapshot(j + 1)

    out = {"stock": s, "rate_integral": ratei, "floored": floored, "records": records}
    if haz is not None:
        out["hazard"] = haz
    return out


def price_mc_continuous(coeffs: CoefficientSet, payoff: Payoff, s0: float,
                        maturity: float, steps: int, paths: int, seed: int,
                        chunk_size: int = _rng.DEFAULT_CHUNK, threads: int = 1,
                        stock_policy: str = "reject") -> PriceResult:
    """Euler Monte Carlo estimate of the pre-default value with SE.

    Paths whose Euler step leaves S > 0 are dropped under 'reject'
    (error if none survive) or clamped at a small floor under 'absorb'.
    """
    if steps < 50:
        raise ValueError("price_mc_continuous requires steps >= 50")
    if paths < 1000:
        raise ValueError("price_mc_continuous requires at least 1000 paths")
    if stock_policy not in ("reject", "absorb"):
        raise ValueError("stock_policy must be 'reject' or 'absorb'")
    acc = _rng.MeanAccumulator()
    rejected = 0

    def run_chunk(idx, count):
        gen = _rng.generator(seed, _rng.STREAM_PATHS, idx)
        batch = simulate_continuous_batch(coeffs, s0, maturity, steps, gen, count)
        vals = np.exp(-batch["rate_integral"]) * np.asarray(payoff(batch["stock"]), dtype=float)
        if stock_policy == "reject":
            vals = vals[~batch["floored"]]
        if vals.size and not np.all(np.isfinite(vals)):
            raise NumericalError("non-finite discounted payoff in Euler batch")
        return vals, int(np.count_nonzero(batch["floored"]))

    for vals, nbad in _rng.map_chunks(run_chunk, paths, chunk_size, threads):
        rejected += nbad if stock_policy == "reject" else 0
        if vals.size:
            acc.add(vals)
    if acc.count == 0:
        raise NumericalError("all Euler paths were rejected (nonpositive stock)")
    return PriceResult(value=acc.mean(), std_error=acc.std_error(),
                       method="mc-euler", time=0.0, spot=s0, paths=acc.count,
                       rejected=rejected)
