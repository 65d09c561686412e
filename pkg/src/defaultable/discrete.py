"""Pricing terminal claims in the discrete defaultable market.

The pre-default value of a claim paying g(S_n) at maturity is the
hazard-discounted expectation

    Y_k = E_Q[ (beta_k / beta_n) * g(S_n) | S_k ],

computed exactly by backward induction with the node state prices
(small trees) or by risk-neutral Monte Carlo (large step counts). The
traded price multiplies Y by the survival indicator; default-time
simulation itself lives in `default_times` and is not needed here
because the exp(Gamma) factor inside beta already encodes survival.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import rng as _rng
from .errors import NumericalError, PositivityWindowError, TreeCapExceededError
from .lattice import (LatticeSpec, required_steps, simulate_batch, state_prices,
                      step_stock)
from .payoffs import Payoff

DEFAULT_TREE_CAP = 26
# Deepest subtree solved as one vectorized level sweep; deeper trees
# recurse above this depth so peak memory stays ~2^(_DIRECT_DEPTH+1) floats.
_DIRECT_DEPTH = 21


@dataclass(frozen=True)
class PriceResult:
    """A price with provenance: method tag, Monte Carlo standard error
    (0 for exact methods), and the node it was computed at."""

    value: float
    std_error: float
    method: str
    step: int = 0
    time: float = 0.0
    spot: float = 0.0
    survival_adjusted: bool = False
    paths: int = 0
    rejected: int = 0


def _replay_prefix(spec: LatticeSpec, prefix: Sequence[int]) -> float:
    s = spec.s0
    for k, eps in enumerate(prefix):
        if eps not in (-1, 1):
            raise ValueError("path prefix must consist of +/-1 entries")
        s = step_stock(s, spec.time_at(k), eps, spec)
    return s


def _node_coefficients(spec: LatticeSpec, s: np.ndarray, t: float):
    c = spec.coeffs
    b = np.broadcast_to(np.asarray(c.drift_b(s), dtype=float), s.shape)
    sig = np.broadcast_to(np.asarray(c.vol_sigma(s, t), dtype=float), s.shape)
    lam = np.broadcast_to(np.asarray(c.intensity_lambda(s, t), dtype=float), s.shape)
    r = np.broadcast_to(np.asarray(c.rate_r(s), dtype=float), s.shape)
    return b, sig, lam, r


def _tree_sweep(spec: LatticeSpec, payoff: Payoff, s_root: float, k0: int) -> float:
    """Exact value at (s_root, k0) by a full forward/backward level sweep."""
    n, dt, sqdt = spec.n, spec.dt, spec.sqrt_dt
    depth = n - k0
    levels = [np.array([s_root])]
    for j in range(depth):
        s = levels[j]
        t = spec.time_at(k0 + j)
        b, sig, lam, r = _node_coefficients(spec, s, t)
        drift = s + (b + lam * s) * dt
        vol = sig * s * sqdt
        nxt = np.empty(2 * s.size)
        nxt[0::2] = drift + vol
        nxt[1::2] = drift - vol
        bad = nxt <= 0.0
        if np.any(bad):
            if spec.stock_policy == "reject":
                from .errors import NonpositiveStockError
                raise NonpositiveStockError(float(s[int(np.argmax(bad)) // 2]), t,
                                            -1, step=k0 + j + 1)
            nxt = np.where(bad, spec.absorb_floor, nxt)
        levels.append(nxt)
    values = np.asarray(payoff(levels[depth]), dtype=float)
    for j in range(depth - 1, -1, -1):
        s = levels[j]
        t = spec.time_at(k0 + j)
        b, sig, lam, r = _node_coefficients(spec, s, t)
        th = (r * s - b) / (sig * s)
        th_max = float(np.max(np.abs(th)))
        if th_max * sqdt >= 1.0:
            raise PositivityWindowError(th_max, required_steps(th_max, spec.horizon), time=t)
        r_eff = ((1.0 + r * dt) * np.exp(lam * dt) - 1.0) / dt
        denom = 1.0 + r_eff * dt
        pi_up = 0.5 * (1.0 + th * sqdt) / denom
        pi_dn = 0.5 * (1.0 - th * sqdt) / denom
        values = pi_up * values[0::2] + pi_dn * values[1::2]
    return float(values[0])


def _tree_value(spec: LatticeSpec, payoff: Payoff, s_root: float, k0: int) -> float:
    if spec.n - k0 <= _DIRECT_DEPTH:
        return _tree_sweep(spec, payoff, s_root, k0)
    t = spec.time_at(k0)
    sp = state_prices(s_root, t, spec)
    s_up = step_stock(s_root, t, +1, spec)
    s_dn = step_stock(s_root, t, -1, spec)
    return (sp.pi_up * _tree_value(spec, payoff, s_up, k0 + 1)
            + sp.pi_down * _tree_value(spec, payoff, s_dn, k0 + 1))


def price_tree(spec: LatticeSpec, payoff: Payoff, k: int = 0,
               prefix: Sequence[int] = (), tree_cap: int = DEFAULT_TREE_CAP) -> PriceResult:
    """Exact pre-default value by backward induction over the full
    non-recombining binary tree below step k.

    The node is identified by the +/-1 path prefix of length k. Depth
    n-k beyond tree_cap is refused (use price_mc).
    """
    if len(prefix) != k:
        raise ValueError(f"prefix length {len(prefix)} must equal evaluation step k={k}")
    if not 0 <= k <= spec.n:
        raise ValueError("evaluation step outside [0, n]")
    depth = spec.n - k
    if depth > tree_cap:
        raise TreeCapExceededError(depth, tree_cap)
    s_node = _replay_prefix(spec, prefix)
    value = (float(payoff(s_node)) if depth == 0
             else _tree_value(spec, payoff, s_node, k))
    return PriceResult(value=value, std_error=0.0, method="tree", step=k,
                       time=spec.time_at(k), spot=s_node)


def price_mc(spec: LatticeSpec, payoff: Payoff, paths: int, seed: int,
             estimator: str = "biased-coin", k: int = 0, prefix: Sequence[int] = (),
             chunk_size: int = _rng.DEFAULT_CHUNK, threads: int = 1) -> PriceResult:
    """Monte Carlo estimate of the pre-default value.

    estimator 'biased-coin' samples the risk-neutral coin directly;
    'likelihood-ratio' samples fair coins and weights by the density
    increment xi_n/xi_k. Deterministic per (seed, chunk size): chunk i
    always draws from the stream keyed by i, and partial sums are
    reduced in chunk order.
    """
    if paths < 1000:
        raise ValueError("price_mc requires at least 1000 paths")
    if estimator not in ("biased-coin", "likelihood-ratio"):
        raise ValueError("estimator must be 'biased-coin' or 'likelihood-ratio'")
    if len(prefix) != k:
        raise ValueError(f"prefix length {len(prefix)} must equal evaluation step k={k}")
    s_node = _replay_prefix(spec, prefix)

    acc = _rng.MeanAccumulator()
    rejected_total = [0]

    def run_chunk(idx, count):
        gen = _rng.generator(seed, _rng.STREAM_PATHS, idx)
        if estimator == "biased-coin":
            batch = simulate_batch(spec, "risk-neutral", gen, count,
                                   track_discount=True, drop_rejected=True,
                                   s_start=s_node, k_start=k)
            weights = batch["discount"]
        else:
            batch = simulate_batch(spec, "physical", gen, count,
                                   track_discount=True, track_density=True,
                                   drop_rejected=True, s_start=s_node, k_start=k)
            weights = batch["discount"] * batch["density"]
        vals = weights * np.asarray(payoff(batch["stock"]), dtype=float)
        alive = ~batch["rejected"]
        return vals[alive], int(np.count_nonzero(~alive))

    results = _rng.map_chunks(run_chunk, paths, chunk_size, threads)
    for vals, nrej in results:
        rejected_total[0] += nrej
        if vals.size:
            if not np.all(np.isfinite(vals)):
                raise NumericalError("non-finite discounted payoff in Monte Carlo batch")
            acc.add(vals)
    if acc.count == 0:
        raise NumericalError("all Monte Carlo paths were rejected (nonpositive stock)")
    return PriceResult(value=acc.mean(), std_error=acc.std_error(),
                       method=f"mc-{estimator}", step=k, time=spec.time_at(k),
                       spot=s_node, paths=acc.count, rejected=rejected_total[0])


def defaultable_price(spec: LatticeSpec, payoff: Payoff, t: float, survived: bool,
                      method: str = "auto", prefix: Sequence[int] = (),
                      tree_cap: int = DEFAULT_TREE_CAP, mc_paths: int = 100_000,
                      seed: int = 0, chunk_size: int = _rng.DEFAULT_CHUNK,
                      threads: int = 1) -> PriceResult:
    """Traded price at time t: the survival indicator times the
    pre-default value at the node reached by the path prefix.

    On default (survived=False) the claim is worthless. At t=0 the
    claim has always survived. t is mapped to the grid step floor(n*t/T).
    """
    if not 0.0 <= t <= spec.horizon:
        raise ValueError("evaluation time outside [0, horizon]")
    k = min(spec.n, int(math.floor(t / spec.dt + 1e-12)))
    if not survived:
        s_node = _replay_prefix(spec, prefix) if len(prefix) == k else 0.0
        return PriceResult(value=0.0, std_error=0.0, method="defaulted", step=k,
                           time=spec.time_at(k), spot=s_node, survival_adjusted=True)
    if k == spec.n:
        s_node = _replay_prefix(spec, prefix)
        return PriceResult(value=float(payoff(s_node)), std_error=0.0,
                           method="terminal", step=k, time=spec.time_at(k),
                           spot=s_node, survival_adjusted=True)
    if method == "auto":
        method = "tree" if spec.n - k <= tree_cap else "mc"
    if method == "tree":
        res = price_tree(spec, payoff, k, prefix, tree_cap)
    elif method == "mc":
        res = price_mc(spec, payoff, mc_paths, seed, k=k, prefix=prefix,
                       chunk_size=chunk_size, threads=threads)
    else:
        raise ValueError("method must be 'auto', 'tree' or 'mc'")
    return PriceResult(value=res.value, std_error=res.std_error, method=res.method,
                       step=res.step, time=res.time, spot=res.spot,
                       survival_adjusted=True, paths=res.paths, rejected=res.rejected)
