from fractions import Fraction

import numpy as np
import pytest
import sympy
from pydantic import ValidationError

from bubble_correction.polynomial import (
    DimensionMismatchError,
    Polynomial,
    PolynomialFormatError,
    alternating_powers,
    directional_pairing,
    embed,
    euler_operator,
    gradient,
    iterated_laplacian,
    laplacian,
    r2_multiply,
    random_homogeneous,
    substitute_leading,
    to_fraction,
    translate,
)
from bubble_correction.profile import finite_difference_laplacian
from bubble_correction.reduction import a_multiplier, h_of


def var(n, i):
    return Polynomial.variable(n, i)


def test_laplacian_examples():
    y1, y2 = var(2, 0), var(2, 1)
    assert laplacian(y1**2) == 2
    assert laplacian(y1**2 * y2**2) == 2 * y2**2 + 2 * y1**2
    assert laplacian(y1 * y2).is_zero


def test_iterated_laplacian_examples():
    y1, y2 = var(2, 0), var(2, 1)
    P = y1**2 * y2**2
    assert iterated_laplacian(P, 2) == 8
    assert iterated_laplacian(P, 0) == P
    assert iterated_laplacian(P, 3).is_zero


@pytest.mark.parametrize("n,ell", [(4, 2), (4, 4), (6, 4), (8, 4), (8, 6)])
def test_alternating_powers_have_vanishing_top_laplacian(n, ell):
    P = alternating_powers(n, ell)
    assert iterated_laplacian(P, h_of(ell)).is_zero


def test_alternating_powers_requires_even_dimension():
    with pytest.raises(ValueError):
        alternating_powers(5, 2)


def test_euler_operator_examples():
    y1, y2 = var(2, 0), var(2, 1)
    assert euler_operator(y1**2 * y2) == 3 * y1**2 * y2
    assert euler_operator(Polynomial.constant(2, 7)).is_zero
    assert euler_operator(y1**2 + y1 * y2) == 2 * (y1**2 + y1 * y2)


def test_euler_identity_on_random_homogeneous(rng):
    for _ in range(20):
        n = int(rng.integers(2, 7))
        ell = int(rng.integers(0, 6))
        P = random_homogeneous(n, ell, rng)
        assert (euler_operator(P) - P.scale(ell)).is_zero


def test_gradient_components():
    y1, y2 = var(3, 0), var(3, 1)
    assert gradient(y1**2) == [2 * y1, Polynomial.zero(3), Polynomial.zero(3)]
    assert gradient(y1 * y2) == [y2, y1, Polynomial.zero(3)]


def test_gradient_recombines_to_directional_pairing(rng):
    P = random_homogeneous(4, 3, rng)
    X = [Fraction(1, 2), -2, 0, Fraction(3, 7)]
    recombined = Polynomial.zero(4)
    for x, g in zip(X, gradient(P)):
        recombined = recombined + g.scale(x)
    assert recombined == directional_pairing(X, P)


def test_r2_multiply_examples():
    assert r2_multiply(Polynomial.constant(2, 1), 1) == Polynomial.radius_squared(2)
    assert r2_multiply(var(3, 0), 2).degree == 5
    with pytest.raises(ValueError):
        r2_multiply(var(3, 0), -1)


def test_directional_pairing_examples():
    y1 = var(3, 0)
    assert directional_pairing([1, 0, 0], y1**2) == 2 * y1
    assert directional_pairing([0, 0, 0], y1**2).is_zero
    P = alternating_powers(6, 4)
    assert directional_pairing([1, 2, 3, 4, 5, 6], P).degree == 3
    with pytest.raises(DimensionMismatchError):
        directional_pairing([1, 0], y1)


def test_evaluate_examples():
    y1, y2 = var(2, 0), var(2, 1)
    assert (y1**2 - y2**2).evaluate([1, 1]) == 0
    assert Polynomial.radius_squared(3).evaluate([1, 2, 2]) == 9
    assert isinstance(Polynomial.radius_squared(3).evaluate([1, 2, 2]), Fraction)


def test_rational_and_float_evaluation_agree(rng):
    for _ in range(20):
        P = random_homogeneous(4, 4, rng)
        point = [Fraction(int(rng.integers(-20, 21)), int(rng.integers(1, 9))) for _ in range(4)]
        exact = P.evaluate(point)
        approx = P.evaluate([float(x) for x in point])
        assert approx == pytest.approx(float(exact), rel=1e-12, abs=1e-12)


def test_evaluate_many_matches_scalar_evaluation(rng):
    P = random_homogeneous(3, 3, rng)
    points = rng.standard_normal((10, 3))
    values = P.evaluate_many(points)
    for row, value in zip(points, values):
        assert value == pytest.approx(P.evaluate(list(row)), rel=1e-12, abs=1e-12)


def test_zero_polynomial_has_undefined_degree():
    zero = Polynomial.zero(3)
    assert zero.degree is None
    assert zero.is_zero
    assert zero.is_homogeneous()
    assert str(zero) == "0"


def test_no_stored_zero_coefficients():
    P = Polynomial(2, {(1, 0): 1, (0, 1): 2})
    Q = P - Polynomial(2, {(1, 0): 1})
    assert list(Q.terms) == [(0, 1)]


def test_mixing_dimensions_fails():
    with pytest.raises(DimensionMismatchError):
        var(2, 0) + var(3, 0)
    with pytest.raises(DimensionMismatchError):
        Polynomial(2, {(1, 0, 0): 1})


def test_float_coefficients_are_rejected():
    with pytest.raises(PolynomialFormatError):
        Polynomial(2, {(1, 0): 0.5})
    assert Polynomial(2, {(1, 0): to_fraction(0.5)}) == var(2, 0).scale(Fraction(1, 2))


def test_to_fraction_uses_shortest_decimal():
    assert to_fraction(0.1) == Fraction(1, 10)
    assert to_fraction("3/4") == Fraction(3, 4)
    with pytest.raises(TypeError):
        to_fraction(True)
    with pytest.raises(ValueError):
        to_fraction(float("nan"))


def test_json_schema_round_trip_keeps_large_integers():
    big = Fraction(10**40 + 1, 3)
    P = Polynomial(3, {(2, 0, 1): big, (0, 0, 0): -1})
    data = P.to_json()
    assert data["terms"][0] == {"alpha": [2, 0, 1], "num": str(big.numerator), "den": "3"}
    assert Polynomial.from_json(data) == P


@pytest.mark.parametrize(
    "payload",
    [
        {"dimension": 2, "terms": [{"alpha": [1], "num": "1", "den": "1"}]},
        {"dimension": 2, "terms": [{"alpha": [1, 0], "num": "1", "den": "0"}]},
        {"dimension": 2, "terms": [{"alpha": [1, 0], "num": "1.5", "den": "1"}]},
        {"dimension": 2, "terms": [{"alpha": [-1, 0], "num": "1", "den": "1"}]},
        {"dimension": 0, "terms": []},
    ],
)
def test_malformed_json_is_rejected(payload):
    with pytest.raises(ValidationError):
        Polynomial.from_json(payload)


def test_terms_are_in_graded_lex_order():
    P = Polynomial(2, {(0, 0): 1, (0, 2): 1, (2, 0): 1, (1, 1): 1})
    assert list(P.terms) == [(2, 0), (1, 1), (0, 2), (0, 0)]
    assert str(P) == "y1^2 + y1*y2 + y2^2 + 1"


def test_homogeneous_components_split_by_degree():
    y1, y2 = var(2, 0), var(2, 1)
    P = y1**3 + y1 * y2 + 4
    parts = P.homogeneous_components()
    assert list(parts) == [3, 2, 0]
    assert parts[2] == y1 * y2
    assert not P.is_homogeneous()


def test_partial_derivative_multi_index():
    y1, y2 = var(2, 0), var(2, 1)
    P = y1**3 * y2**2
    assert P.partial([2, 1]) == 12 * y1 * y2
    assert P.partial([4, 0]).is_zero


def test_translate_is_exact_shift(rng):
    P = random_homogeneous(3, 4, rng)
    X = [Fraction(1, 3), -2, Fraction(5, 2)]
    shifted = translate(P, X)
    for point in ([0, 0, 0], [1, -1, 2], [Fraction(2, 7), 3, -1]):
        moved = [p + x for p, x in zip(point, X)]
        assert shifted.evaluate(point) == P.evaluate(moved)


def test_embed_and_substitute_leading_are_inverse():
    y1, y2 = var(2, 0), var(2, 1)
    P = y1**2 * y2 + 3 * y2
    lifted = embed(P, 4, 2)
    assert lifted.dimension == 4
    assert substitute_leading(lifted, [5, 7]) == P


def test_laplacian_matches_symbolic_oracle(rng, to_sympy, from_sympy):
    for _ in range(10):
        n = int(rng.integers(2, 6))
        P = random_homogeneous(n, int(rng.integers(2, 7)), rng, terms=5)
        expr, symbols = to_sympy(P)
        expected = sum(sympy.diff(expr, s, 2) for s in symbols)
        assert laplacian(P) == from_sympy(expected, symbols)


@pytest.mark.parametrize("n", [3, 4, 6])
def test_operators_are_linear(rng, n):
    P = random_homogeneous(n, 4, rng)
    Q = random_homogeneous(n, 4, rng)
    a, b = Fraction(3, 7), Fraction(-5, 2)
    combo = P.scale(a) + Q.scale(b)
    for op in (laplacian, euler_operator, lambda p: r2_multiply(p, 2)):
        assert op(combo) == op(P).scale(a) + op(Q).scale(b)


def test_product_rule_for_radial_blocks(rng):
    for _ in range(6):
        n = int(rng.integers(3, 8))
        ell = int(rng.integers(2, 7))
        P = random_homogeneous(n, ell, rng)
        h = h_of(ell)
        for k in range(h + 1):
            lap_k = iterated_laplacian(P, k)
            for j in range(k + 1):
                lhs = laplacian(r2_multiply(lap_k, j))
                rhs = r2_multiply(iterated_laplacian(P, k + 1), j)
                if j:
                    rhs = rhs + r2_multiply(lap_k, j - 1).scale(a_multiplier(n, ell, j, k))
                assert lhs == rhs


def test_degree_drops_by_two_per_laplacian(rng):
    P = random_homogeneous(5, 6, rng)
    for k in range(4):
        lap = iterated_laplacian(P, k)
        if lap.is_zero:
            break
        assert lap.degree == 6 - 2 * k
        assert lap.is_homogeneous()


def test_laplacian_matches_finite_differences(rng):
    P = random_homogeneous(3, 4, rng)
    points = rng.uniform(-1.0, 1.0, (100, 3))
    exact = laplacian(P).evaluate_many(points)
    approx = finite_difference_laplacian(P.evaluate_many, points)
    assert np.max(np.abs(exact - approx)) < 1e-6
