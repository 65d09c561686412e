"""Market coefficient functions and derived quantities.

The market is driven by four functions of the pre-default stock price:
an absolute drift b(S), a relative volatility sigma(S, t) bounded away
from zero, a nonnegative bounded default intensity lambda(S, t), and a
nonnegative short rate r(S). Everything else in the library (lattice,
pricers, simulators) evaluates the model only through this module.

Two derived quantities matter everywhere:

* the market price of risk
      theta(S, t) = (r(S) * S - b(S)) / (sigma(S, t) * S),
  chosen so the risk-neutral drift identity
      b + lambda * S + sigma * S * theta = (r + lambda) * S
  holds exactly, and

* the hazard-adjusted effective rate, defined per step of size dt by
      1 + r_eff * dt = (1 + r * dt) * exp(lambda * dt),
  which is the exact growth factor of the auxiliary discount process
  beta_k = B_k * exp(Gamma_k).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import CoefficientDomainError, UnsupportedMethodError


@dataclass(frozen=True)
class CoefficientSet:
    """The model functions with their declared bounds.

    All callables must accept scalars or numpy arrays of spot values and
    broadcast elementwise; ``vol_sigma`` and ``intensity_lambda`` also
    take the time argument.
    """

    drift_b: Callable
    vol_sigma: Callable
    intensity_lambda: Callable
    rate_r: Callable
    sigma_floor: float
    lambda_cap: float
    s_min: float = 1e-8
    s_max: float = 1e8
    family: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.sigma_floor <= 0:
            raise CoefficientDomainError("sigma_floor must be positive")
        if self.lambda_cap < 0:
            raise CoefficientDomainError("lambda_cap must be nonnegative")
        if not (0 < self.s_min < self.s_max):
            raise CoefficientDomainError("need 0 < s_min < s_max")

    def affine_drift_constants(self):
        """Return (mu, b0, sigma, lam, r) when the set has affine drift
        b(S) = mu*S + b0 and constant sigma, lambda, r; else None.

        Lets the simulation kernels collapse per-step quantities to
        scalars (theta is constant exactly when b0 == 0).
        """
        p = self.params
        if self.family == "constant":
            return (0.0, float(p.get("b", 0.0)), float(p.get("sigma", 0.2)),
                    float(p.get("lambda", 0.0)), float(p.get("r", 0.0)))
        if self.family == "geometric":
            return (float(p.get("mu", 0.0)), 0.0, float(p.get("sigma", 0.2)),
                    float(p.get("lambda", 0.0)), float(p.get("r", 0.0)))
        return None


@dataclass(frozen=True)
class ParametricFamily:
    """Concrete coefficient families declared by tag + parameters.

    Tags:
        constant            b, sigma, lambda, r all constant
        geometric           b(x) = mu * x; sigma, lambda, r constant
        cev_capped_intensity  lambda(x) = min(c * x**-p, lambda_cap);
                              b(x) = mu * x; sigma, r constant
        tabulated           lambda linearly interpolated from an (S, value)
                            table; b(x) = mu * x; sigma, r constant
    """

    tag: str
    params: Mapping[str, float]
    table: tuple = ()

    def build(self) -> CoefficientSet:
        p = dict(self.params)
        sigma = float(p.get("sigma", 0.2))
        r = float(p.get("r", 0.0))
        s_min = float(p.get("s_min", 1e-8))
        s_max = float(p.get("s_max", 1e8))
        sigma_floor = float(p.get("sigma_floor", min(sigma, 1e-4) if sigma > 0 else 1e-4))

        def rate_fn(s, _r=r):
            return _r if np.ndim(s) == 0 else np.full(np.shape(s), _r)

        def sigma_fn(s, t, _sig=sigma):
            return _sig if np.ndim(s) == 0 else np.full(np.shape(s), _sig)

        if self.tag == "constant":
            b0 = float(p.get("b", 0.0))
            lam = float(p.get("lambda", 0.0))
            cap = float(p.get("lambda_cap", lam))

            def b_fn(s, _b=b0):
                return _b if np.ndim(s) == 0 else np.full(np.shape(s), _b)

            def lam_fn(s, t, _lam=lam):
                return _lam if np.ndim(s) == 0 else np.full(np.shape(s), _lam)

        elif self.tag == "geometric":
            mu = float(p.get("mu", 0.0))
            lam = float(p.get("lambda", 0.0))
            cap = float(p.get("lambda_cap", lam))

            def b_fn(s, _mu=mu):
                return _mu * np.asarray(s, dtype=float) if np.ndim(s) else _mu * s

            def lam_fn(s, t, _lam=lam):
                return _lam if np.ndim(s) == 0 else np.full(np.shape(s), _lam)

        elif self.tag == "cev_capped_intensity":
            mu = float(p.get("mu", 0.0))
            c = float(p.get("c", 1.0))
            power = float(p.get("p", 1.0))
            cap = float(p.get("lambda_cap", 1.0))

            def b_fn(s, _mu=mu):
                return _mu * np.asarray(s, dtype=float) if np.ndim(s) else _mu * s

            def lam_fn(s, t, _c=c, _p=power, _cap=cap):
                return np.minimum(_c * np.power(s, -_p), _cap)

        elif self.tag == "tabulated":
            mu = float(p.get("mu", 0.0))
            if len(self.table) < 2:
                raise UnsupportedMethodError("tabulated family needs >= 2 (S, value) rows")
            grid = np.asarray([row[0] for row in self.table], dtype=float)
            vals = np.asarray([row[1] for row in self.table], dtype=float)
            if not np.all(np.diff(grid) > 0):
                raise UnsupportedMethodError("tabulated S grid must be strictly increasing")
            cap = float(p.get("lambda_cap", float(vals.max())))

            def b_fn(s, _mu=mu):
                return _mu * np.asarray(s, dtype=float) if np.ndim(s) else _mu * s

            def lam_fn(s, t, _g=grid, _v=vals, _cap=cap):
                return np.minimum(np.interp(s, _g, _v), _cap)

        else:
            raise UnsupportedMethodError(f"unknown coefficient family '{self.tag}'")

        return CoefficientSet(
            drift_b=b_fn,
            vol_sigma=sigma_fn,
            intensity_lambda=lam_fn,
            rate_r=rate_fn,
            sigma_floor=sigma_floor,
            lambda_cap=cap,
            s_min=s_min,
            s_max=s_max,
            family=self.tag,
            params=dict(p),
        )


def load_tabulated_intensity(path, params=None) -> ParametricFamily:
    """Load a two-column (S, lambda) text file into a tabulated family."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            rows.append((float(parts[0]), float(parts[1])))
    return ParametricFamily("tabulated", dict(params or {}), table=tuple(rows))


def theta(coeffs: CoefficientSet, spot, time):
    """Market price of risk theta = (r*S - b) / (sigma*S).

    Defined so that b + lambda*S + sigma*S*theta = (r + lambda)*S holds
    exactly; raises on nonpositive spot.
    """
    s = np.asarray(spot, dtype=float)
    if np.any(s <= 0):
        raise CoefficientDomainError("theta requires S > 0", spot=spot, time=time)
    r = coeffs.rate_r(spot)
    b = coeffs.drift_b(spot)
    sig = coeffs.vol_sigma(spot, time)
    out = (r * s - b) / (sig * s)
    if np.ndim(spot) == 0:
        return float(out)
    return out


def effective_rate(coeffs: CoefficientSet, spot, time, n: int, horizon: float = 1.0):
    """Hazard-adjusted per-step rate from the exact product identity.

    With dt = horizon / n, solves (1 + r*dt) * exp(lambda*dt) = 1 + r_eff*dt
    for r_eff. Tends to r + lambda as n grows and dominates r from above.
    """
    if n < 1:
        raise CoefficientDomainError("effective_rate requires n >= 1")
    dt = horizon / n
    r = coeffs.rate_r(spot)
    lam = coeffs.intensity_lambda(spot, time)
    # expm1 form of ((1 + r*dt) * exp(lam*dt) - 1) / dt, exact for lam = 0
    out = np.expm1(lam * dt) / dt + r * np.exp(lam * dt)
    if np.ndim(spot) == 0 and np.ndim(out) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    """Grid-sampled verdicts on the model assumptions.

    The Lipschitz entries are sampled difference-quotient bounds, reported
    as heuristics: point evaluations cannot certify a Lipschitz constant.
    """

    checks: tuple
    lipschitz_bounds: Mapping[str, float]
    cap_active: bool

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self):
        out = [f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}" for c in self.checks]
        for name, bound in self.lipschitz_bounds.items():
            out.append(f"[HEURISTIC] lipschitz {name}: sampled quotient bound {bound:.6g}")
        if self.cap_active:
            out.append("[NOTE] intensity cap active somewhere on the grid")
        return out


def validate(coeffs: CoefficientSet, s_grid: Sequence[float], t_grid: Sequence[float]) -> ValidationReport:
    """Sample the coefficient functions on a grid and check the model bounds.

    Checks: sigma >= sigma_floor, 0 <= lambda <= lambda_cap, r >= 0, and
    finiteness of every evaluation. A non-finite value is a hard failure
    raised as CoefficientDomainError naming the offending (S, t).
    """
    s = np.asarray(list(s_grid), dtype=float)
    t = np.asarray(list(t_grid), dtype=float)
    if s.size == 0 or t.size == 0:
        raise CoefficientDomainError("validation grids must be nonempty")
    if np.any(~np.isfinite(s)) or np.any(~np.isfinite(t)):
        raise CoefficientDomainError("validation grids must be finite")
    if np.any(s < coeffs.s_min) or np.any(s > coeffs.s_max):
        raise CoefficientDomainError("s_grid leaves the declared domain")

    ss, tt = np.meshgrid(s, t, indexing="ij")
    b = np.broadcast_to(np.asarray(coeffs.drift_b(ss), dtype=float), ss.shape)
    r = np.broadcast_to(np.asarray(coeffs.rate_r(ss), dtype=float), ss.shape)
    sig = np.broadcast_to(np.asarray(coeffs.vol_sigma(ss, tt), dtype=float), ss.shape)
    lam = np.broadcast_to(np.asarray(coeffs.intensity_lambda(ss, tt), dtype=float), ss.shape)

    for name, arr in (("b", b), ("r", r), ("sigma", sig), ("lambda", lam)):
        bad = ~np.isfinite(arr)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise CoefficientDomainError(
                f"{name} is non-finite at S={ss[i, j]:.6g}, t={tt[i, j]:.6g}",
                spot=float(ss[i, j]), time=float(tt[i, j]))

    checks = []
    sig_min = float(sig.min())
    checks.append(AssumptionCheck(
        "sigma_floor", sig_min >= coeffs.sigma_floor,
        f"min sigma {sig_min:.6g} vs floor {coeffs.sigma_floor:.6g}"))
    lam_min, lam_max = float(lam.min()), float(lam.max())
    checks.append(AssumptionCheck(
        "lambda_bounds", lam_min >= 0.0 and lam_max <= coeffs.lambda_cap + 1e-15,
        f"lambda in [{lam_min:.6g}, {lam_max:.6g}] vs cap {coeffs.lambda_cap:.6g}"))
    r_min = float(r.min())
    checks.append(AssumptionCheck("rate_nonnegative", r_min >= 0.0, f"min r {r_min:.6g}"))
    checks.append(AssumptionCheck("finite_evaluations", True, f"{ss.size} grid points, all finite"))

    # Sampled difference quotients in S for the functions the model needs
    # Lipschitz: b(S), lambda(S,t)*S, sigma(S,t)*S. Heuristic only.
    lipschitz = {}
    if s.size >= 2:
        ds = np.diff(s)[:, None]
        for name, arr in (("b(S)", b), ("lambda*S", lam * ss), ("sigma*S", sig * ss)):
            q = np.abs(np.diff(arr, axis=0)) / ds
            lipschitz[name] = float(q.max())

    # the cap is "active" only when it visibly truncates: some values
    # pinned at the cap while others sit strictly below it
    at_cap = bool(np.any(lam >= coeffs.lambda_cap - 1e-12)) and coeffs.lambda_cap > 0
    below_cap = bool(np.any(lam < coeffs.lambda_cap - 1e-12))
    return ValidationReport(checks=tuple(checks), lipschitz_bounds=lipschitz,
                            cap_active=at_cap and below_cap)
