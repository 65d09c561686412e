"""Cox-construction default times and their diagnostics.

Default happens the first time the accumulated hazard Gamma reaches an
independent unit-exponential threshold. On a discrete path the time is
reported at the grid point where the crossing first holds; survival to
a grid time t is then exactly the event {threshold > Gamma_t}, so the
empirical survival curve and the model curve mean(exp(-Gamma_t)) must
agree up to sampling error. The compensated default indicator M and
the survival-weighted exponential L are the two martingale diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import ndtri

from . import rng as _rng
from .continuous import ContinuousPath, simulate_continuous_batch
from .coefficients import CoefficientSet
from .lattice import DiscretePath, LatticeSpec, simulate_batch
from .tables import Table

PathLike = Union[DiscretePath, ContinuousPath]


@dataclass(frozen=True)
class DefaultSample:
    """A default time paired with the threshold that produced it.

    tau is the first grid time where the path's hazard reaches the
    threshold, or inf when the horizon ends first.
    """

    theta_exp: float
    tau: float
    resolution: str
    path: PathLike

    @property
    def defaulted(self) -> bool:
        return math.isfinite(self.tau)


def sample_default_time(path: PathLike, theta_exp: float) -> DefaultSample:
    """Locate the first hazard crossing of the threshold on the path grid."""
    if theta_exp <= 0:
        raise ValueError("the exponential threshold must be positive")
    hazard = np.asarray(path.hazard)
    times = np.asarray(path.times)
    hit = np.nonzero(hazard >= theta_exp)[0]
    tau = float(times[hit[0]]) if hit.size else math.inf
    resolution = "discrete" if isinstance(path, DiscretePath) else "continuous"
    return DefaultSample(theta_exp=float(theta_exp), tau=tau,
                         resolution=resolution, path=path)


def defaultable_stock_path(path: PathLike, sample: DefaultSample) -> np.ndarray:
    """Stock subject to bankruptcy: equals the pre-default stock before
    tau and jumps to zero from tau onward."""
    times = np.asarray(path.times)
    return np.where(times < sample.tau, np.asarray(path.stock), 0.0)


def _checkpoint_steps(t_grid: Sequence[float], n: int, horizon: float):
    steps = []
    for t in t_grid:
        if not 0.0 <= t <= horizon + 1e-12:
            raise ValueError(f"checkpoint {t} outside [0, horizon]")
        k = t / horizon * n
        k_round = int(round(k))
        if abs(k - k_round) > 1e-9:
            raise ValueError(f"checkpoint {t} does not sit on the n={n} grid")
        steps.append(k_round)
    return steps


def survival_curve(spec: LatticeSpec, t_grid: Sequence[float], samples: int,
                   seed: int, measure: str = "risk-neutral",
                   chunk_size: int = _rng.DEFAULT_CHUNK, threads: int = 1) -> Table:
    """Empirical and model survival probabilities at the checkpoints.

    empirical: fraction of (path, threshold) pairs with tau > t;
    model: mean of exp(-Gamma_t) over the same paths.
    """
    if samples < 1000:
        raise ValueError("survival_curve requires at least 1000 samples")
    steps = _checkpoint_steps(t_grid, spec.n, spec.horizon)
    sums = {k: np.zeros(3) for k in steps}    # survived, exp(-Gamma), exp(-2 Gamma)
    total = 0

    def run_chunk(idx, count):
        gen = _rng.generator(seed, _rng.STREAM_PATHS, idx)
        theta_gen = _rng.generator(seed, _rng.STREAM_THRESHOLD, idx)
        thresholds = theta_gen.exponential(1.0, count)
        batch = simulate_batch(spec, measure, gen, count, record_steps=steps,
                               track_hazard=True)
        out = {}
        for k in steps:
            gam = batch["records"][k]["hazard"]
            surv = thresholds > gam
            model = np.exp(-gam)
            out[k] = (float(np.count_nonzero(surv)), float(model.sum()),
                      float((model * model).sum()))
        return count, out

    for count, chunk_sums in _rng.map_chunks(run_chunk, samples, chunk_size, threads):
        total += count
        for k in steps:
            sums[k] += np.asarray(chunk_sums[k])

    tab = Table(["t", "empirical", "model", "se"])
    for t, k in zip(t_grid, steps):
        p = sums[k][0] / total
        se = math.sqrt(max(p * (1.0 - p), 0.0) / total)
        tab.append(float(t), p, sums[k][1] / total, se)
    return tab


def martingale_checks(spec: LatticeSpec, t_checkpoints: Sequence[float], samples: int,
                      seed: int, measure: str = "risk-neutral",
                      chunk_size: int = _rng.DEFAULT_CHUNK, threads: int = 1) -> Table:
    """Empirical means of the compensated default indicator M_t and of
    L_t - 1 = 1{tau>t} exp(Gamma_t) - 1, with standard errors; a row is
    flagged when either mean sits more than 3 SE from its target."""
    if samples < 10_000:
        raise ValueError("martingale_checks requires at least 10^4 samples")
    steps = _checkpoint_steps(t_checkpoints, spec.n, spec.horizon)
    acc_m = {k: _rng.MeanAccumulator() for k in steps}
    acc_l = {k: _rng.MeanAccumulator() for k in steps}

    def run_chunk(idx, count):
        gen = _rng.generator(seed, _rng.STREAM_PATHS, idx)
        theta_gen = _rng.generator(seed, _rng.STREAM_THRESHOLD, idx)
        thresholds = theta_gen.exponential(1.0, count)
        batch = simulate_batch(spec, measure, gen, count, record_steps=steps,
                               track_hazard=True, threshold=thresholds)
        out = {}
        for k in steps:
            rec = batch["records"][k]
            gam, crossed, gam_cross = rec["hazard"], rec["crossed"], rec["gamma_cross"]
            m_vals = crossed.astype(float) - np.where(crossed, gam_cross, gam)
            l_vals = (~crossed).astype(float) * np.exp(gam)
            out[k] = (m_vals, l_vals)
        return out

    for chunk_out in _rng.map_chunks(run_chunk, samples, chunk_size, threads):
        for k in steps:
            acc_m[k].add(chunk_out[k][0])
            acc_l[k].add(chunk_out[k][1])

    tab = Table(["t", "mean_M", "se_M", "mean_L", "se_L", "flagged"])
    for t, k in zip(t_checkpoints, steps):
        mm, sm = acc_m[k].mean(), acc_m[k].std_error()
        ml, sl = acc_l[k].mean(), acc_l[k].std_error()
        flagged = abs(mm) > 3 * sm + 1e-15 or abs(ml - 1.0) > 3 * sl + 1e-15
        tab.append(float(t), mm, sm, ml, sl, bool(flagged))
    return tab


@dataclass(frozen=True)
class SurvivalComparison:
    """Coupled discrete-vs-continuous survival gaps at checkpoints."""

    table: Table                 # t, surv_discrete, surv_continuous, gap, se_pair, se_each
    sup_gap: float
    sup_gap_se: float            # paired SE at the argmax checkpoint

    @property
    def within(self) -> float:
        return self.sup_gap / self.sup_gap_se if self.sup_gap_se > 0 else 0.0


def survival_consistency(coeffs: CoefficientSet, s0: float, horizon: float,
                         n_discrete: int, t_grid: Sequence[float], samples: int,
                         seed: int, fine_steps: Optional[int] = None,
                         chunk_size: int = _rng.DEFAULT_CHUNK, threads: int = 1,
                         measure: str = "risk-neutral") -> SurvivalComparison:
    """Compare survival curves of the n-step lattice and the Euler
    continuous model, coupled sample by sample.

    Every sample shares its exponential threshold between the two
    resolutions; when fine_steps == n_discrete the two paths also share
    their per-step uniforms (the coin is the indicator U < q, the Euler
    normal is ndtri(U)), which makes the paired gap estimator tight.
    """
    fine = int(fine_steps) if fine_steps else n_discrete
    if fine % n_discrete and n_discrete % fine:
        raise ValueError("fine_steps must be commensurate with n_discrete")
    spec = LatticeSpec(coeffs, n_discrete, s0, horizon)
    d_steps = _checkpoint_steps(t_grid, n_discrete, horizon)
    c_steps = _checkpoint_steps(t_grid, fine, horizon)
    share_noise = fine == n_discrete
    acc_pair = {t: _rng.MeanAccumulator() for t in t_grid}
    acc_d = {t: _rng.MeanAccumulator() for t in t_grid}
    acc_c = {t: _rng.MeanAccumulator() for t in t_grid}

    def run_chunk(idx, count):
        theta_gen = _rng.generator(seed, _rng.STREAM_THRESHOLD, idx)
        thresholds = theta_gen.exponential(1.0, count)
        gen_d = _rng.generator(seed, _rng.STREAM_PATHS, idx)
        if share_noise:
            u = gen_d.random((count, n_discrete))
            normals = ndtri(u)
            batch_d = _shared_uniform_discrete(spec, measure, u, count, d_steps)
        else:
            normals = None
            batch_d = simulate_batch(spec, measure, gen_d, count,
                                     record_steps=d_steps, track_hazard=True)
        gen_c = _rng.generator(seed, _rng.STREAM_REFERENCE, idx)
        batch_c = simulate_continuous_batch(coeffs, s0, horizon, fine,
                                            gen_c, count, record_steps=c_steps,
                                            normals=normals, track_hazard=True)
        out = {}
        for t, kd, kc in zip(t_grid, d_steps, c_steps):
            gd = batch_d["records"][kd]["hazard"]
            gc = batch_c["records"][kc]["hazard"]
            ind_d = (thresholds > gd).astype(float)
            ind_c = (thresholds > gc).astype(float)
            out[t] = (ind_d, ind_c)
        return out

    for chunk_out in _rng.map_chunks(run_chunk, samples, chunk_size, threads):
        for t in t_grid:
            ind_d, ind_c = chunk_out[t]
            acc_d[t].add(ind_d)
            acc_c[t].add(ind_c)
            acc_pair[t].add(ind_d - ind_c)

    tab = Table(["t", "surv_discrete", "surv_continuous", "gap", "se_pair", "se_each"])
    sup_gap, sup_se = 0.0, 0.0
    for t in t_grid:
        gap = abs(acc_pair[t].mean())
        se_pair = acc_pair[t].std_error()
        se_each = math.hypot(acc_d[t].std_error(), acc_c[t].std_error())
        tab.append(float(t), acc_d[t].mean(), acc_c[t].mean(), gap, se_pair, se_each)
        if gap >= sup_gap:
            sup_gap, sup_se = gap, max(se_pair, 1e-300)
    return SurvivalComparison(table=tab, sup_gap=sup_gap, sup_gap_se=sup_se)


def _shared_uniform_discrete(spec: LatticeSpec, measure: str, u: np.ndarray,
                             count: int, record_steps):
    """Discrete batch driven by externally supplied per-step uniforms,
    for coupling with a continuous batch on the same grid."""
    from .coefficients import theta as theta_fn
    n, dt, sqdt = spec.n, spec.dt, spec.sqrt_dt
    c = spec.coeffs
    s = np.full(count, spec.s0)
    gamma = np.zeros(count)
    records = {}
    record_set = set(record_steps)
    if 0 in record_set:
        records[0] = {"hazard": gamma.copy()}
    for k in range(n):
        t = k * dt
        lam = c.intensity_lambda(s, t)
        th = theta_fn(c, s, t)
        q = 0.5 if measure == "physical" else 0.5 * (1.0 + th * sqdt)
        eps = np.where(u[:, k] < q, 1.0, -1.0)
        s_new = s + (c.drift_b(s) + lam * s) * dt + c.vol_sigma(s, t) * s * sqdt * eps
        s = np.where(s_new <= 0, spec.absorb_floor, s_new)
        gamma = gamma + lam * dt
        if (k + 1) in record_set:
            records[k + 1] = {"hazard": gamma.copy()}
    return {"records": records, "stock": s}


def threshold_independence(spec: LatticeSpec, samples: int, seed: int,
                           chunk_size: int = _rng.DEFAULT_CHUNK) -> tuple:
    """Correlation between the exponential threshold and the terminal
    stock; should vanish because the streams are keyed apart."""
    xs, ys = [], []
    for idx, start, stop in _rng.chunk_ranges(samples, chunk_size):
        count = stop - start
        gen = _rng.generator(seed, _rng.STREAM_PATHS, idx)
        theta_gen = _rng.generator(seed, _rng.STREAM_THRESHOLD, idx)
        thresholds = theta_gen.exponential(1.0, count)
        batch = simulate_batch(spec, "physical", gen, count)
        xs.append(thresholds)
        ys.append(batch["stock"])
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    corr = float(np.corrcoef(x, y)[0, 1])
    se = 1.0 / math.sqrt(len(x))
    return corr, se
