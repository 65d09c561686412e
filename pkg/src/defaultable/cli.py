"""Experiment runner.

Subcommands map onto the library studies:

    price-discrete    exact-tree or Monte Carlo lattice price
    price-continuous  closed form, PDE, or Euler Monte Carlo reference
    simulate          survival curves and martingale diagnostics
    converge          price-rate study (+ optional moments, fdd)
    fdd-test          distribution-distance study alone

Each run writes its CSV artifacts plus summary.txt into the output
directory and exits 0 on pass/complete, 2 on a verdict failure, 1 on
error. Given the same config and seed, artifacts are byte-identical at
any thread count.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import STUDIES, ExperimentConfig
from .continuous import (PdeGrid, default_grid, price_closed_form,
                         price_mc_continuous, solve_pde)
from .convergence import fdd_distance, moment_bound_check, price_convergence_study
from .default_times import martingale_checks, survival_curve
from .discrete import price_mc, price_tree
from .errors import ConfigError, DefaultableError
from .lattice import LatticeSpec
from .tables import Table, emit_csv


def _spec_from(cfg: ExperimentConfig) -> LatticeSpec:
    coeffs = cfg.build_coefficients()
    return LatticeSpec(
        coeffs=coeffs,
        n=cfg.get_int("run.n", 100),
        s0=cfg.get_float("model.s0"),
        horizon=cfg.get_float("run.horizon", 1.0),
        stock_policy=cfg.get_str("run.stock_policy", "reject"),
    )


def _pde_grid_from(cfg: ExperimentConfig, coeffs, s0, horizon) -> PdeGrid:
    if cfg.has("pde.s_min") or cfg.has("pde.s_max"):
        return PdeGrid(
            s_min=cfg.get_float("pde.s_min"),
            s_max=cfg.get_float("pde.s_max"),
            m_space=cfg.get_int("pde.m_space", 400),
            m_time=cfg.get_int("pde.m_time", 400),
            spacing=cfg.get_str("pde.spacing", "uniform-s"),
        )
    return default_grid(coeffs, s0, horizon,
                        m_space=cfg.get_int("pde.m_space", 400),
                        m_time=cfg.get_int("pde.m_time", 400),
                        spacing=cfg.get_str("pde.spacing", "uniform-s"))


def _run_price_discrete(cfg: ExperimentConfig, out: Path, threads: int):
    spec = _spec_from(cfg)
    payoff = cfg.build_payoff()
    seed = cfg.seed()
    method = cfg.get_str("run.method", "tree")
    t0 = time.perf_counter()
    if method == "tree":
        res = price_tree(spec, payoff, tree_cap=cfg.get_int("run.tree_cap", 26))
    elif method in ("mc", "mc-lr"):
        estimator = "biased-coin" if method == "mc" else "likelihood-ratio"
        res = price_mc(spec, payoff, cfg.get_int("run.mc_paths", 100_000), seed,
                       estimator=estimator,
                       chunk_size=cfg.get_int("run.chunk_size", 1 << 17),
                       threads=threads)
    else:
        raise ConfigError(f"price-discrete method must be tree|mc|mc-lr, got '{method}'",
                          key="run.method")
    ms = (time.perf_counter() - t0) * 1e3
    tab = Table(["method", "n", "value", "std_error", "runtime_ms"])
    tab.append(res.method, spec.n, res.value, res.std_error, ms)
    emit_csv(tab, out / "price.csv")
    return True, [f"price = {res.value:.12g} (se {res.std_error:.3g}) via {res.method}"]


def _run_price_continuous(cfg: ExperimentConfig, out: Path, threads: int):
    coeffs = cfg.build_coefficients()
    payoff = cfg.build_payoff()
    s0 = cfg.get_float("model.s0")
    horizon = cfg.get_float("run.horizon", 1.0)
    method = cfg.get_str("run.method", "closed_form")
    t0 = time.perf_counter()
    if method == "closed_form":
        res = price_closed_form(coeffs, payoff, s0, horizon)
        value, se, tag = res.value, 0.0, res.method
    elif method == "pde":
        grid = _pde_grid_from(cfg, coeffs, s0, horizon)
        surface = solve_pde(coeffs, payoff, grid, horizon)
        value, se, tag = surface.value_at(s0), 0.0, "pde-cn"
        if cfg.get_bool("run.surface", False):
            emit_csv(surface.to_table(), out / "surface.csv")
    elif method == "mc":
        res = price_mc_continuous(coeffs, payoff, s0, horizon,
                                  cfg.get_int("run.steps", 400),
                                  cfg.get_int("run.mc_paths", 100_000),
                                  cfg.seed(),
                                  chunk_size=cfg.get_int("run.chunk_size", 1 << 17),
                                  threads=threads,
                                  stock_policy=cfg.get_str("run.stock_policy", "reject"))
        value, se, tag = res.value, res.std_error, res.method
    else:
        raise ConfigError(f"price-continuous method must be closed_form|pde|mc, got '{method}'",
                          key="run.method")
    ms = (time.perf_counter() - t0) * 1e3
    tab = Table(["method", "value", "std_error", "runtime_ms"])
    tab.append(tag, value, se, ms)
    emit_csv(tab, out / "price.csv")
    return True, [f"price = {value:.12g} (se {se:.3g}) via {tag}"]


def _run_simulate(cfg: ExperimentConfig, out: Path, threads: int):
    spec = _spec_from(cfg)
    seed = cfg.seed()
    t_grid = cfg.get_float_list("run.t_checkpoints", [0.25, 0.5, 0.75, 1.0])
    samples = cfg.get_int("run.samples", 100_000)
    chunk = cfg.get_int("run.chunk_size", 1 << 17)
    curve = survival_curve(spec, t_grid, samples, seed, chunk_size=chunk, threads=threads)
    emit_csv(curve, out / "survival.csv")
    report = martingale_checks(spec, t_grid, samples, seed, chunk_size=chunk,
                               threads=threads)
    emit_csv(report, out / "martingales.csv")
    flags = report.column("flagged")
    ok = not any(flags)
    notes = [f"survival/martingale checkpoints: {len(t_grid)}, flagged: {sum(map(bool, flags))}"]
    return ok, notes


def _run_converge(cfg: ExperimentConfig, out: Path, threads: int):
    coeffs = cfg.build_coefficients()
    payoff = cfg.build_payoff()
    s0 = cfg.get_float("model.s0")
    horizon = cfg.get_float("run.horizon", 1.0)
    seed = cfg.seed()
    chunk = cfg.get_int("run.chunk_size", 1 << 17)
    n_values = cfg.get_int_list("run.n_values", [8, 16, 32, 64, 128, 256])
    reference = cfg.get_str("converge.reference", "closed_form")
    grid = None
    if reference == "pde":
        grid = _pde_grid_from(cfg, coeffs, s0, horizon)
    report = price_convergence_study(
        coeffs, payoff, s0, horizon, n_values,
        reference=reference,
        mc_paths=cfg.get_int("run.mc_paths", 200_000),
        seed=seed,
        tree_cap=cfg.get_int("run.tree_cap", 26),
        pde_grid=grid,
        slope_threshold=cfg.get_float("converge.slope_threshold", -0.45),
        terminal_tol=cfg.get_float("converge.terminal_tol", 0.05),
        chunk_size=chunk, threads=threads)
    emit_csv(report.table, out / "report.csv")
    rates = Table(["slope", "intercept", "r_squared", "verdict"])
    verdict = "inconclusive" if report.inconclusive else ("pass" if report.passed else "fail")
    rates.append(report.fit.slope if not report.inconclusive else 0.0,
                 report.fit.intercept if not report.inconclusive else 0.0,
                 report.fit.r_squared if not report.inconclusive else 0.0,
                 verdict)
    emit_csv(rates, out / "rates.csv")
    ok = report.passed or report.inconclusive
    notes = [
        f"reference {report.reference_method} = {report.reference_value:.12g}",
        f"fit slope = {report.fit.slope:.4g} (r2 {report.fit.r_squared:.4g}, "
        f"{report.fit.n_used} usable points)" if not report.inconclusive
        else "fit inconclusive (<3 points above noise)",
        f"verdict: {verdict}",
    ]

    if cfg.get_bool("converge.moments", False):
        mom = moment_bound_check(
            coeffs, s0, horizon,
            cfg.get_int_list("converge.moment_n_values", [16, 64, 256, 1024]),
            cfg.get_int_list("converge.moment_orders", [1, 2]),
            cfg.get_int("converge.moment_samples", 100_000), seed,
            ceiling=cfg.get_float("converge.moment_ceiling", 100.0),
            chunk_size=chunk, threads=threads)
        emit_csv(mom.table, out / "moments.csv")
        ok = ok and mom.passed
        notes.append(f"moments: {'pass' if mom.passed else 'fail'}")
    if cfg.get_bool("converge.fdd", False):
        fdd = fdd_distance(
            coeffs, s0, horizon,
            cfg.get_float_list("run.t_checkpoints", [0.25, 0.5, 0.75, 1.0]),
            cfg.get_int_list("converge.fdd_n_values", [16, 64, 256]),
            cfg.get_int("converge.fdd_samples", 10_000), seed,
            fine_factor=cfg.get_int("converge.fine_factor", 8),
            alpha=cfg.get_float("converge.alpha", 0.01),
            chunk_size=chunk)
        emit_csv(fdd, out / "fdd.csv")
        n_max = max(cfg.get_int_list("converge.fdd_n_values", [16, 64, 256]))
        final_ok = all(bool(p) for nn, p in zip(fdd.column("n"), fdd.column("pass"))
                       if nn == n_max)
        ok = ok and final_ok
        notes.append(f"fdd at n={n_max}: {'pass' if final_ok else 'fail'}")
    return ok, notes


def _run_fdd(cfg: ExperimentConfig, out: Path, threads: int):
    coeffs = cfg.build_coefficients()
    s0 = cfg.get_float("model.s0")
    horizon = cfg.get_float("run.horizon", 1.0)
    tab = fdd_distance(
        coeffs, s0, horizon,
        cfg.get_float_list("run.t_checkpoints", [0.25, 0.5, 0.75, 1.0]),
        cfg.get_int_list("run.n_values", [16, 64, 256, 1024]),
        cfg.get_int("run.samples", 10_000), cfg.seed(),
        fine_factor=cfg.get_int("converge.fine_factor", 8),
        alpha=cfg.get_float("converge.alpha", 0.01),
        chunk_size=cfg.get_int("run.chunk_size", 1 << 17))
    emit_csv(tab, out / "fdd.csv")
    n_max = max(int(v) for v in tab.column("n"))
    ok = all(bool(p) for nn, p in zip(tab.column("n"), tab.column("pass")) if nn == n_max)
    return ok, [f"fdd at n={n_max}: {'pass' if ok else 'fail'}"]


_RUNNERS = {
    "price-discrete": _run_price_discrete,
    "price-continuous": _run_price_continuous,
    "simulate": _run_simulate,
    "converge": _run_converge,
    "fdd-test": _run_fdd,
}


def run(config_path, overrides=(), out_dir=None, study=None, seed=None, threads=None) -> int:
    """Execute one configured study; returns the process exit status."""
    started = time.perf_counter()
    try:
        cfg = ExperimentConfig.from_file(config_path, overrides)
        if seed is not None:
            cfg.values["seed"] = str(seed)
        if threads is not None:
            cfg.values["threads"] = str(threads)
        tag = cfg.study(study)
        cfg.seed()                       # seed is mandatory for every study
        nthreads = cfg.get_int("threads", 1)
        out = Path(out_dir) if out_dir else Path(cfg.get_str("out", "."))
        out.mkdir(parents=True, exist_ok=True)
        ok, notes = _RUNNERS[tag](cfg, out, nthreads)
    except (ConfigError, DefaultableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    elapsed = time.perf_counter() - started
    lines = [f"study: {tag}", f"status: {'pass' if ok else 'FAIL'}", ""]
    lines.append("[effective config]")
    lines.extend(cfg.echo_lines())
    lines.append("")
    lines.append("[versions]")
    lines.append(f"defaultable = {__version__}")
    lines.append(f"python = {sys.version.split()[0]}")
    lines.append(f"numpy = {np.__version__}")
    lines.append(f"scipy = {scipy.__version__}")
    lines.append("")
    lines.append("[run]")
    lines.append(f"runtime_s = {elapsed:.3f}")
    lines.extend(notes)
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return 0 if ok else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="defaultable",
        description="defaultable equity derivative pricing experiments")
    sub = parser.add_subparsers(dest="study", required=True)
    for name in STUDIES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--threads", type=int, default=None, help="worker thread count")
    args = parser.parse_args(argv)
    return run(args.config, overrides=args.set, out_dir=args.out,
               study=args.study, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
