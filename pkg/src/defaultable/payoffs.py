"""Terminal payoff functions g(S_T).

All payoffs act elementwise on scalars or numpy arrays. The claim pays
g(S_T) at maturity and nothing on default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedMethodError

PAYOFF_KINDS = ("call", "put", "digital", "identity", "constant", "table")


@dataclass(frozen=True)
class Payoff:
    """Tagged terminal payoff.

    kind:
        call(strike), put(strike), digital(strike) paying 1{S >= K},
        identity g(S)=S, constant(level), or table (piecewise-linear in S,
        flat beyond the end breakpoints).
    """

    kind: str
    strike: float = 0.0
    level: float = 0.0
    breakpoints: tuple = field(default=())
    values: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in PAYOFF_KINDS:
            raise UnsupportedMethodError(f"unknown payoff kind '{self.kind}'")
        if self.kind == "table":
            bp = np.asarray(self.breakpoints, dtype=float)
            if bp.size < 2 or len(self.values) != bp.size:
                raise UnsupportedMethodError("table payoff needs matching breakpoints/values, >= 2 points")
            if not np.all(np.diff(bp) > 0):
                raise UnsupportedMethodError("table payoff breakpoints must be strictly increasing")

    def __call__(self, spot):
        s = np.asarray(spot, dtype=float)
        if self.kind == "call":
            out = np.maximum(s - self.strike, 0.0)
        elif self.kind == "put":
            out = np.maximum(self.strike - s, 0.0)
        elif self.kind == "digital":
            out = (s >= self.strike).astype(float)
        elif self.kind == "identity":
            out = s.copy()
        elif self.kind == "constant":
            out = np.full_like(s, self.level)
        else:  # table
            out = np.interp(s, self.breakpoints, self.values)
        if np.ndim(spot) == 0:
            return float(out)
        return out

    def describe(self) -> str:
        if self.kind in ("call", "put", "digital"):
            return f"{self.kind}(K={self.strike:g})"
        if self.kind == "constant":
            return f"constant({self.level:g})"
        if self.kind == "table":
            return f"table({len(self.breakpoints)} points)"
        return self.kind


def call(strike: float) -> Payoff:
    return Payoff("call", strike=float(strike))


def put(strike: float) -> Payoff:
    return Payoff("put", strike=float(strike))


def digital(strike: float) -> Payoff:
    return Payoff("digital", strike=float(strike))


def identity() -> Payoff:
    return Payoff("identity")


def constant(level: float) -> Payoff:
    return Payoff("constant", level=float(level))


def table(breakpoints, values) -> Payoff:
    return Payoff("table", breakpoints=tuple(float(x) for x in breakpoints),
                  values=tuple(float(v) for v in values))
