from fractions import Fraction

import numpy as np
import pytest
import sympy

from bubble_correction.config.settings import settings
from bubble_correction.polynomial import Polynomial, alternating_powers


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def restore_tolerances():
    saved = (settings.TOL_EXACT, settings.TOL_FLOAT, settings.TOL_QUAD)
    yield
    settings.TOL_EXACT, settings.TOL_FLOAT, settings.TOL_QUAD = saved


@pytest.fixture
def worked_example():
    """The alternating even-power example in n = 8 with ℓ = 4."""
    return alternating_powers(8, 4)


def _to_sympy(P: Polynomial):
    symbols = sympy.symbols(f"y1:{P.dimension + 1}")
    expr = sympy.Integer(0)
    for alpha, c in P.terms.items():
        term = sympy.Rational(c.numerator, c.denominator)
        for s, a in zip(symbols, alpha):
            term *= s**a
        expr += term
    return sympy.expand(expr), symbols


def _from_sympy(expr, symbols) -> Polynomial:
    poly = sympy.Poly(sympy.expand(expr), *symbols)
    return Polynomial(
        len(symbols),
        {alpha: Fraction(int(c.p), int(c.q)) for alpha, c in poly.terms()},
    )


@pytest.fixture
def to_sympy():
    return _to_sympy


@pytest.fixture
def from_sympy():
    return _from_sympy
