"""Discrete-time defaultable market on a non-recombining binary lattice.

One step of size dt = T/n moves the state (S, B, xi, Gamma) by

    S_{k+1}     = S_k + (b(S_k) + lambda_k * S_k) * dt
                      + sigma_k * S_k * sqrt(dt) * eps_{k+1}
    B_{k+1}     = B_k * (1 + r(S_k) * dt)
    Gamma_{k+1} = Gamma_k + lambda_k * dt
    xi_{k+1}    = xi_k * (1 + theta_k * sqrt(dt) * eps_{k+1})

with eps = +/-1 coin flips: fair under the physical measure, biased to
up-probability (1 + theta*sqrt(dt))/2 under the risk-neutral one. The
auxiliary discount beta_k = B_k * exp(Gamma_k) grows by the exact factor
(1 + r_eff * dt) per step, and the node state prices are

    pi(+/-) = (1 +/- theta*sqrt(dt)) / (2 * (1 + r_eff * dt)).

Both state prices stay nonnegative only inside the positivity window
|theta| * sqrt(dt) < 1, which is enforced at construction by sampling
and re-checked at every simulated step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import rng as _rng
from .coefficients import CoefficientSet, effective_rate, theta
from .errors import NonpositiveStockError, PositivityWindowError
from .tables import Table

MEASURES = ("physical", "risk-neutral")
STOCK_POLICIES = ("reject", "absorb")
ABSORB_FLOOR_FRACTION = 1e-8


@dataclass(frozen=True)
class LatticeSpec:
    """Discrete market description: coefficients, step count, horizon."""

    coeffs: CoefficientSet
    n: int
    s0: float
    horizon: float = 1.0
    stock_policy: str = "reject"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.s0 <= 0:
            raise ValueError("S0 must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.stock_policy not in STOCK_POLICIES:
            raise ValueError(f"stock_policy must be one of {STOCK_POLICIES}")
        _check_window_sampled(self.coeffs, self.s0, self.horizon, self.n)

    @property
    def dt(self) -> float:
        return self.horizon / self.n

    @property
    def sqrt_dt(self) -> float:
        return math.sqrt(self.dt)

    @property
    def absorb_floor(self) -> float:
        return ABSORB_FLOOR_FRACTION * self.s0

    def time_at(self, k: int) -> float:
        return k * self.dt


@dataclass(frozen=True)
class StatePrices:
    """Arrow-Debreu prices of the two successor states plus the
    risk-neutral up-probability."""

    pi_up: float
    pi_down: float
    q_up: float

    @property
    def total(self) -> float:
        return self.pi_up + self.pi_down


@dataclass(frozen=True)
class DiscretePath:
    """One realized trajectory of the discrete market.

    Arrays are indexed by step k = 0..n (epsilons by k = 1..n with a zero
    placeholder at k = 0). beta is the auxiliary discount B * exp(Gamma).
    """

    spec: LatticeSpec
    epsilons: np.ndarray
    stock: np.ndarray
    bond: np.ndarray
    density: np.ndarray
    hazard: np.ndarray
    beta: np.ndarray
    measure: str = "physical"
    absorbed: bool = False

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.spec.n + 1) * self.spec.dt

    def to_table(self) -> Table:
        return Table(
            ["k", "t", "eps", "S", "B", "xi", "Gamma", "beta"],
            list(zip(
                range(self.spec.n + 1), self.times, self.epsilons, self.stock,
                self.bond, self.density, self.hazard, self.beta)),
        )

    def to_csv(self, path):
        self.to_table().write_csv(path)


def required_steps(theta_value: float, horizon: float) -> int:
    """Minimal n with |theta| * sqrt(horizon/n) < 1."""
    return int(math.floor(theta_value * theta_value * horizon)) + 1


def _check_window_sampled(coeffs: CoefficientSet, s0: float, horizon: float, n: int):
    """Sample theta over a spot/time grid around S0 and require the
    positivity window at the given step count."""
    sig0 = float(np.max(coeffs.vol_sigma(s0, 0.0)))
    z = np.linspace(-6.0, 6.0, 25)
    s_grid = np.clip(s0 * np.exp(sig0 * math.sqrt(horizon) * z),
                     coeffs.s_min, coeffs.s_max)
    t_grid = np.linspace(0.0, horizon, 9)
    sq = math.sqrt(horizon / n)
    worst = 0.0
    worst_node = (s0, 0.0)
    for t in t_grid:
        with np.errstate(invalid="ignore", divide="ignore"):
            th = np.abs(np.asarray(theta(coeffs, s_grid, t), dtype=float))
        th = np.where(np.isfinite(th), th, 0.0)  # degenerate sets are validate()'s job
        i = int(np.argmax(th))
        if th[i] > worst:
            worst = float(th[i])
            worst_node = (float(np.asarray(s_grid)[i]), float(t))
    if worst * sq >= 1.0:
        raise PositivityWindowError(worst, required_steps(worst, horizon),
                                    spot=worst_node[0], time=worst_node[1])


# ------------------------------------------------------------------
# single-node / single-step operations
# ------------------------------------------------------------------

def step_stock(spot, time, eps, spec: LatticeSpec):
    """One stock step. Raises (reject) or clamps (absorb) when the
    recursion would leave S > 0."""
    if np.any(np.asarray(spot) <= 0):
        raise NonpositiveStockError(float(np.min(spot)), time, int(eps))
    c = spec.coeffs
    out = (spot + (c.drift_b(spot) + c.intensity_lambda(spot, time) * spot) * spec.dt
           + c.vol_sigma(spot, time) * spot * spec.sqrt_dt * eps)
    if np.ndim(out) == 0:
        out = float(out)
        if out <= 0.0:
            if spec.stock_policy == "reject":
                raise NonpositiveStockError(float(spot), time, int(eps))
            return spec.absorb_floor
        return out
    bad = out <= 0.0
    if np.any(bad):
        if spec.stock_policy == "reject":
            i = int(np.argmax(bad))
            raise NonpositiveStockError(float(np.asarray(spot).ravel()[i] if np.ndim(spot) else spot),
                                        time, int(np.asarray(eps).ravel()[i] if np.ndim(eps) else eps))
        out = np.where(bad, spec.absorb_floor, out)
    return out


def step_bond(bond, spot, spec: LatticeSpec):
    return bond * (1.0 + spec.coeffs.rate_r(spot) * spec.dt)


def step_hazard(gamma, spot, time, spec: LatticeSpec):
    return gamma + spec.coeffs.intensity_lambda(spot, time) * spec.dt


def step_density(xi, spot, time, eps, spec: LatticeSpec):
    th = theta(spec.coeffs, spot, time)
    if np.max(np.abs(th)) * spec.sqrt_dt >= 1.0:
        raise PositivityWindowError(float(np.max(np.abs(th))),
                                    required_steps(float(np.max(np.abs(th))), spec.horizon),
                                    spot=spot, time=time)
    return xi * (1.0 + th * spec.sqrt_dt * eps)


def state_prices(spot, time, spec: LatticeSpec) -> StatePrices:
    """Arrow-Debreu prices at a node. Both are nonnegative inside the
    positivity window; their sum is exactly 1/(1 + r_eff*dt)."""
    th = float(theta(spec.coeffs, spot, time))
    if abs(th) * spec.sqrt_dt >= 1.0:
        raise PositivityWindowError(abs(th), required_steps(abs(th), spec.horizon),
                                    spot=spot, time=time)
    r_eff = float(effective_rate(spec.coeffs, spot, time, spec.n, spec.horizon))
    denom = 1.0 + r_eff * spec.dt
    q_up = 0.5 * (1.0 + th * spec.sqrt_dt)
    return StatePrices(pi_up=q_up / denom, pi_down=(1.0 - q_up) / denom, q_up=q_up)


def simulate_path(spec: LatticeSpec, measure: str = "physical",
                  seed: int = 0, coins: Optional[Sequence[int]] = None) -> DiscretePath:
    """Simulate one full trajectory of (eps, S, B, xi, Gamma, beta).

    Deterministic function of the seed; `coins` overrides the draws with
    an explicit +/-1 sequence (physical-measure replay).
    """
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {MEASURES}")
    n = spec.n
    gen = seed if isinstance(seed, np.random.Generator) else _rng.generator(seed)
    eps_arr = np.zeros(n + 1)
    stock = np.empty(n + 1)
    bond = np.empty(n + 1)
    dens = np.empty(n + 1)
    haz = np.empty(n + 1)
    beta = np.empty(n + 1)
    stock[0], bond[0], dens[0], haz[0], beta[0] = spec.s0, 1.0, 1.0, 0.0, 1.0
    absorbed = False
    u = gen.random(n) if coins is None else None
    for k in range(n):
        t = spec.time_at(k)
        s = stock[k]
        th = float(theta(spec.coeffs, s, t))
        if abs(th) * spec.sqrt_dt >= 1.0:
            raise PositivityWindowError(abs(th), required_steps(abs(th), spec.horizon),
                                        spot=s, time=t)
        if coins is not None:
            eps = int(coins[k])
        else:
            q = 0.5 if measure == "physical" else 0.5 * (1.0 + th * spec.sqrt_dt)
            eps = 1 if u[k] < q else -1
        try:
            s_next = step_stock(s, t, eps, spec)
        except NonpositiveStockError as exc:
            exc.step = k + 1
            raise
        if spec.stock_policy == "absorb" and s_next == spec.absorb_floor:
            absorbed = True
        eps_arr[k + 1] = eps
        stock[k + 1] = s_next
        bond[k + 1] = step_bond(bond[k], s, spec)
        haz[k + 1] = step_hazard(haz[k], s, t, spec)
        dens[k + 1] = dens[k] * (1.0 + th * spec.sqrt_dt * eps)
        beta[k + 1] = beta[k] * (1.0 + float(effective_rate(
            spec.coeffs, s, t, spec.n, spec.horizon)) * spec.dt)
    return DiscretePath(spec=spec, epsilons=eps_arr, stock=stock, bond=bond,
                        density=dens, hazard=haz, beta=beta, measure=measure,
                        absorbed=absorbed)


# ------------------------------------------------------------------
# vectorized batch kernel (shared by the Monte Carlo engines)
# ------------------------------------------------------------------

class BatchResult(dict):
    """Dict of terminal arrays plus optional per-step snapshots under
    the 'records' key."""


def simulate_batch(spec: LatticeSpec, measure: str, gen: np.random.Generator,
                   n_paths: int, record_steps: Sequence[int] = (),
                   track_density: bool = False, track_discount: bool = False,
                   track_bond: bool = False, track_hazard: bool = False,
                   coins: Optional[np.ndarray] = None,
                   threshold: Optional[np.ndarray] = None,
                   drop_rejected: bool = False,
                   s_start: Optional[float] = None, k_start: int = 0) -> BatchResult:
    """Simulate n_paths trajectories, vectorized across paths.

    Tracks terminal stock always; optionally the Radon-Nikodym density,
    the running inverse discount prod(1 + r_eff*dt)^-1, the bond, and
    the hazard. `record_steps` snapshots the tracked state after those
    (absolute) steps. `threshold` (unit-exponential draws, one per path)
    switches on default-time tracking: crossing step, hazard at crossing.
    With drop_rejected, paths hitting a nonpositive stock under the
    'reject' policy are flagged instead of raising. Simulation may start
    from an interior node (s_start, k_start).

    Everything is a deterministic function of the generator state.
    """
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {MEASURES}")
    if coins is not None and measure != "physical":
        raise ValueError("explicit coins are a physical-measure replay")
    n, dt, sqdt = spec.n, spec.dt, spec.sqrt_dt
    c = spec.coeffs
    affine = c.affine_drift_constants()

    s = np.full(n_paths, spec.s0 if s_start is None else float(s_start))
    xi = np.ones(n_paths) if track_density else None
    # constant r and lambda make the per-step discount a scalar product
    disc_scalar = affine is not None
    disc = (1.0 if disc_scalar else np.ones(n_paths)) if track_discount else None
    bond = np.ones(n_paths) if track_bond else None
    gamma = np.zeros(n_paths) if (track_hazard or threshold is not None) else None
    absorbed = np.zeros(n_paths, dtype=bool)
    rejected = np.zeros(n_paths, dtype=bool)

    def disc_array():
        return np.full(n_paths, disc) if disc_scalar else disc
    if threshold is not None:
        crossed = np.zeros(n_paths, dtype=bool)
        gamma_cross = np.zeros(n_paths)
        cross_step = np.full(n_paths, n + 1, dtype=np.int64)
    records = {}
    record_set = set(int(k) for k in record_steps)

    def snapshot(k):
        snap = {"stock": s.copy()}
        if xi is not None:
            snap["density"] = xi.copy()
        if disc is not None:
            snap["discount"] = disc_array().copy() if disc_scalar else disc.copy()
        if bond is not None:
            snap["bond"] = bond.copy()
        if gamma is not None:
            snap["hazard"] = gamma.copy()
        if threshold is not None:
            snap["crossed"] = crossed.copy()
            snap["gamma_cross"] = gamma_cross.copy()
        records[k] = snap

    if k_start in record_set:
        snapshot(k_start)

    for k in range(k_start, n):
        t = k * dt
        if affine is not None:
            mu, b0, sig, lam, r = affine
            th = (r - mu) / sig if b0 == 0.0 else (r * s - (mu * s + b0)) / (sig * s)
        else:
            b = c.drift_b(s)
            sig = c.vol_sigma(s, t)
            lam = c.intensity_lambda(s, t)
            r = c.rate_r(s)
            mu, b0 = None, None
            th = (r * s - b) / (sig * s)
        if drop_rejected and np.ndim(th) and rejected.any():
            th = np.where(rejected, 0.0, th)  # dead paths must not trip the window
        th_max = float(np.max(np.abs(th)))
        if th_max * sqdt >= 1.0:
            raise PositivityWindowError(th_max, required_steps(th_max, spec.horizon), time=t)

        if coins is not None:
            eps = coins[:, k - k_start].astype(float) if coins.dtype != np.float64 else coins[:, k - k_start]
        else:
            u = gen.random(n_paths)
            q = 0.5 if measure == "physical" else 0.5 * (1.0 + th * sqdt)
            eps = np.where(u < q, 1.0, -1.0)

        if affine is not None:
            s_new = s * (1.0 + (mu + lam) * dt + sig * sqdt * eps) + b0 * dt
        else:
            s_new = s + (b + lam * s) * dt + sig * s * sqdt * eps
        bad = s_new <= 0.0
        if np.any(bad):
            if spec.stock_policy == "reject":
                if not drop_rejected:
                    i = int(np.argmax(bad))
                    raise NonpositiveStockError(float(s[i]), t, int(eps[i]), step=k + 1)
                rejected |= bad
            else:
                absorbed |= bad
            s_new = np.where(bad, spec.absorb_floor, s_new)

        if xi is not None:
            xi = xi * (1.0 + th * sqdt * eps)
        if disc is not None:
            growth = (1.0 + r * dt) * np.exp(lam * dt)
            disc = disc / growth
        if bond is not None:
            bond = bond * (1.0 + r * dt)
        if gamma is not None:
            gamma = gamma + lam * dt
            if threshold is not None:
                newly = (~crossed) & (gamma >= threshold)
                if np.any(newly):
                    gamma_cross = np.where(newly, gamma, gamma_cross)
                    cross_step = np.where(newly, k + 1, cross_step)
                    crossed = crossed | newly
        s = s_new
        if (k + 1) in record_set:
            snapshot(k + 1)

    out = BatchResult(stock=s, absorbed=absorbed, rejected=rejected, records=records)
    if xi is not None:
        out["density"] = xi
    if disc is not None:
        out["discount"] = disc_array()
    if bond is not None:
        out["bond"] = bond
    if gamma is not None:
        out["hazard"] = gamma
    if threshold is not None:
        out["crossed"] = crossed
        out["gamma_cross"] = gamma_cross
        out["cross_step"] = cross_step
    return out
