"""Defaultable equity derivative pricing on hazard-adjusted binomial
lattices, with its continuous-time limit and an empirical
weak-convergence harness."""

__version__ = "0.1.0"

from .coefficients import (CoefficientSet, ParametricFamily, ValidationReport,
                           effective_rate, theta, validate)
from .continuous import (ContinuousPath, PdeGrid, PdeSurface, default_grid,
                         pde_residual, price_closed_form, price_mc_continuous,
                         simulate_continuous_path, solve_pde)
from .convergence import (ConvergenceReport, MomentReport, RateFit,
                          fdd_distance, ks_critical, moment_bound_check,
                          price_convergence_study, rate_fit, two_sample_ks)
from .default_times import (DefaultSample, SurvivalComparison, defaultable_stock_path,
                            martingale_checks, sample_default_time,
                            survival_consistency, survival_curve)
from .discrete import (PriceResult, defaultable_price, price_mc, price_tree)
from .errors import (ConfigError, CoefficientDomainError, CsvValueError,
                     DefaultableError, NonpositiveStockError, NumericalError,
                     PositivityWindowError, TreeCapExceededError,
                     UnsupportedMethodError)
from .lattice import (DiscretePath, LatticeSpec, StatePrices, simulate_path,
                      state_prices, step_bond, step_density, step_hazard,
                      step_stock)
from .payoffs import Payoff
from .tables import Table, emit_csv

__all__ = [name for name in dir() if not name.startswith("_")]
