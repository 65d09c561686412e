import numpy as np
import pytest

from defaultable import ParametricFamily


@pytest.fixture
def const_coeffs():
    """b=0, sigma=0.2, lambda=0.02, r=0.05 on S0=100 scale."""
    return ParametricFamily(
        "constant", {"b": 0.0, "sigma": 0.2, "lambda": 0.02, "r": 0.05}).build()


@pytest.fixture
def riskless_coeffs():
    """b=0, sigma=0.2, lambda=0, r=0: driftless martingale market."""
    return ParametricFamily(
        "constant", {"b": 0.0, "sigma": 0.2, "lambda": 0.0, "r": 0.0}).build()


@pytest.fixture
def geometric_coeffs():
    """b(x)=0.1x, sigma=0.2, lambda=0.02, r=0.05 (theta = -0.25)."""
    return ParametricFamily(
        "geometric", {"mu": 0.1, "sigma": 0.2, "lambda": 0.02, "r": 0.05}).build()


@pytest.fixture
def cev_coeffs():
    """lambda(x) = min(2/x, 1), sigma=0.2, r=0.05."""
    return ParametricFamily(
        "cev_capped_intensity",
        {"mu": 0.0, "c": 2.0, "p": 1.0, "lambda_cap": 1.0, "sigma": 0.2, "r": 0.05}).build()
