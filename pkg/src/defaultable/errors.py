"""Exception types shared across the library."""


class DefaultableError(Exception):
    """Base class for all library errors."""


class CoefficientDomainError(DefaultableError):
    """A coefficient function was evaluated outside its valid domain,
    or returned a non-finite value."""

    def __init__(self, message, spot=None, time=None):
        super().__init__(message)
        self.spot = spot
        self.time = time


class PositivityWindowError(DefaultableError):
    """|theta| * sqrt(dt) >= 1 somewhere, so a state price would go negative.

    Carries the minimal step count that restores positivity.
    """

    def __init__(self, theta_max, n_required, spot=None, time=None):
        super().__init__(
            f"state-price positivity violated: |theta|={theta_max:.6g} needs "
            f"n >= {n_required} (at S={spot!r}, t={time!r})"
        )
        self.theta_max = theta_max
        self.n_required = n_required
        self.spot = spot
        self.time = time


class NonpositiveStockError(DefaultableError):
    """The stock recursion stepped to a nonpositive value under the
    'reject' policy."""

    def __init__(self, spot, time, eps, step=None):
        super().__init__(
            f"stock step produced a nonpositive price from S={spot:.6g} "
            f"at t={time:.6g} (eps={eps:+d}, step={step})"
        )
        self.spot = spot
        self.time = time
        self.eps = eps
        self.step = step


class TreeCapExceededError(DefaultableError):
    """Exact tree depth exceeds the configured cap; use the Monte Carlo
    pricer instead."""

    def __init__(self, depth, cap):
        super().__init__(
            f"exact tree needs depth {depth} > cap {cap}; price with the "
            f"Monte Carlo method for this step count"
        )
        self.depth = depth
        self.cap = cap


class UnsupportedMethodError(DefaultableError):
    """Requested pricing method does not apply to this model/payoff."""


class NumericalError(DefaultableError):
    """A numerical routine failed (singular solve, non-finite result, ...)."""


class CsvValueError(DefaultableError):
    """A table cell cannot be serialized (NaN or non-finite value)."""

    def __init__(self, column, row_index):
        super().__init__(f"non-finite value in column '{column}' (row {row_index})")
        self.column = column
        self.row_index = row_index


class ConfigError(DefaultableError):
    """Experiment configuration is missing, malformed, or inconsistent."""

    def __init__(self, message, line=None, key=None):
        loc = ""
        if line is not None:
            loc += f" (line {line})"
        if key is not None:
            loc += f" (key '{key}')"
        super().__init__(message + loc)
        self.line = line
        self.key = key
