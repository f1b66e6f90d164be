import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from bubble_correction.integrals import (
    DivergentIntegralError,
    IntegralPreconditionError,
    b_constant,
    change_of_center,
    double_factorial_minus2,
    gradient_moment,
    gradient_moment_field,
    j_value,
    laplacian_identity_check,
    laplacian_j_multiple,
    moment_integral,
    moment_integral_mixed,
    monomial_j_multiple,
    monte_carlo_sphere_moment,
    radial_moment,
    reduction_identity_check,
    shift_expansion,
    sphere_area,
    sphere_moment,
    sphere_rule,
)
from bubble_correction.polynomial import (
    Polynomial,
    alternating_powers,
    iterated_laplacian,
    random_homogeneous,
    translate,
)


def var(n, i):
    return Polynomial.variable(n, i)


@pytest.mark.parametrize("m,expected", [(0, 1), (1, 0), (2, 1), (4, 3), (5, 0), (6, 15), (8, 105)])
def test_double_factorial_minus2(m, expected):
    assert double_factorial_minus2(m) == expected


@pytest.mark.parametrize("ell,expected", [(2, 2), (4, 8), (6, 48)])
def test_b_constant(ell, expected):
    assert b_constant(ell) == expected


def test_b_constant_is_top_laplacian_of_square_product():
    for h in (1, 2, 3):
        Q = Polynomial.monomial([2] * h + [0] * 2)
        assert iterated_laplacian(Q, h) == b_constant(2 * h)


def test_b_constant_rejects_odd_degree():
    with pytest.raises(ValueError):
        b_constant(3)


def test_j_value_closed_form_in_three_dimensions():
    assert j_value(3, 2) == pytest.approx(math.pi**2 / 4, rel=1e-12)


@pytest.mark.parametrize("n,ell", [(3, 0), (3, 2), (5, 2), (5, 4), (7, 4), (8, 6)])
def test_j_value_is_positive_and_checked(n, ell):
    assert j_value(n, ell) > 0


def test_j_value_preconditions():
    with pytest.raises(DivergentIntegralError):
        j_value(4, 4)
    with pytest.raises(IntegralPreconditionError):
        j_value(5, 3)


def test_total_mass_matches_sphere_area():
    n = 4
    expected = sphere_area(n) * radial_moment(n, 0)
    assert j_value(n, 0) == pytest.approx(expected, rel=1e-10)


def test_moment_examples():
    assert moment_integral(var(3, 0)).numeric == 0
    antisymmetric = moment_integral(var(3, 0) ** 2 - var(3, 1) ** 2)
    assert antisymmetric.j_multiple == 0
    assert antisymmetric.numeric == 0

    result = moment_integral(var(5, 0) ** 2 * var(5, 1) ** 2)
    assert result.j_multiple == 1
    assert result.numeric == pytest.approx(j_value(5, 4), rel=1e-14)


def test_moment_of_constant_is_total_mass():
    result = moment_integral(Polynomial.constant(3, 2))
    assert result.j_multiple == 2
    assert result.numeric == pytest.approx(2 * j_value(3, 0))


def test_moment_monomial_route_matches_laplacian_route(rng):
    for _ in range(20):
        n = int(rng.integers(3, 9))
        ell = 2 * int(rng.integers(1, (n - 1) // 2 + 1))
        Q = random_homogeneous(n, ell, rng, terms=6)
        assert moment_integral(Q).j_multiple == laplacian_j_multiple(Q)


def test_top_laplacian_of_even_monomials(rng):
    for _ in range(20):
        alpha = [2 * int(a) for a in rng.integers(0, 3, size=4)]
        if sum(alpha) == 0:
            continue
        h = sum(alpha) // 2
        Q = Polynomial.monomial(alpha)
        assert iterated_laplacian(Q, h) == b_constant(2 * h) * monomial_j_multiple(alpha)


def test_quadrature_agrees_with_closed_form(rng):
    for _ in range(10):
        n = int(rng.integers(3, 8))
        ell = 2 * int(rng.integers(0, (n - 1) // 2 + 1))
        Q = random_homogeneous(n, ell, rng)
        closed = moment_integral(Q).numeric
        quadrature = moment_integral(Q, method="quadrature")
        assert quadrature.method == "quadrature"
        assert quadrature.numeric == pytest.approx(closed, rel=1e-6, abs=1e-12)


def test_odd_degree_moments_vanish():
    result = moment_integral(var(5, 0) ** 2 * var(5, 1))
    assert result.j_multiple == 0
    assert result.J is None


def test_moment_preconditions():
    with pytest.raises(DivergentIntegralError):
        moment_integral(var(3, 0) ** 4)
    with pytest.raises(IntegralPreconditionError):
        moment_integral(var(3, 0) ** 2 + 1)


def test_mixed_moment_splits_by_degree():
    Q = var(3, 0) ** 2 + var(3, 1) + 1
    mixed = moment_integral_mixed(Q)
    assert sorted(mixed.components) == [0, 1, 2]
    expected = moment_integral(var(3, 0) ** 2).numeric + j_value(3, 0)
    assert mixed.numeric == pytest.approx(expected)


def test_integral_result_json():
    data = moment_integral(var(5, 0) ** 2 * var(5, 1) ** 2).to_json()
    assert data["j_multiple"] == {"num": "1", "den": "1"}
    assert data["method"] == "closed_form"
    assert data["degree"] == 4


def test_sphere_rule_weights_sum_to_area():
    for n in (2, 3, 4, 5):
        _, weights = sphere_rule(n)
        assert weights.sum() == pytest.approx(sphere_area(n), rel=1e-12)


@pytest.mark.parametrize("n", [3, 5])
def test_sphere_rule_integrates_low_moments(n):
    points, weights = sphere_rule(n)
    assert np.allclose(np.linalg.norm(points, axis=1), 1.0)
    for alpha in ([2] + [0] * (n - 1), [0] * (n - 1) + [2], [2, 2] + [0] * (n - 2)):
        exponents = np.asarray(alpha)
        value = np.dot(weights, np.prod(points**exponents, axis=1))
        assert value == pytest.approx(sphere_moment(alpha), rel=1e-10)


def test_sphere_moment_odd_exponent_vanishes():
    assert sphere_moment([1, 2, 0]) == 0.0


def test_monte_carlo_sphere_moment_is_consistent(rng):
    alpha = [2, 2, 0, 0]
    estimate, stderr = monte_carlo_sphere_moment(alpha, 20000, rng)
    assert abs(estimate - sphere_moment(alpha)) < 5 * stderr


def test_gradient_moment_vanishes_for_even_polynomial_at_origin():
    P = alternating_powers(6, 4)
    assert np.allclose(gradient_moment(P, [0] * 6), 0.0)


def test_gradient_moment_detects_shift(worked_example):
    X = [Fraction(1, 2)] + [0] * 7
    moment = gradient_moment(worked_example, X)
    assert moment[0] > 0
    assert np.allclose(moment[1:], 0.0)


def test_gradient_moment_matches_finite_difference(rng):
    P = random_homogeneous(6, 4, rng)
    X = np.array([0.3, -0.2, 0.1, 0.5, -0.4, 0.25])
    step = 1e-2

    def total(point):
        return moment_integral_mixed(translate(P, [float(x) for x in point])).numeric

    expected = np.empty(6)
    for i in range(6):
        e = np.zeros(6)
        e[i] = step
        expected[i] = (
            -total(X + 2 * e) + 8 * total(X + e) - 8 * total(X - e) + total(X - 2 * e)
        ) / (12 * step)
    assert np.allclose(gradient_moment(P, X), expected, rtol=1e-7, atol=1e-9)


def test_gradient_moment_field_matches_direct_route(rng):
    P = random_homogeneous(7, 5, rng)
    field = gradient_moment_field(P)
    points = rng.uniform(-1.0, 1.0, (5, 7))
    many = field.evaluate_many(points)
    for row, batch in zip(points, many):
        direct = gradient_moment(P, row)
        assert np.allclose(field.evaluate(row), direct, rtol=1e-10, atol=1e-12)
        assert np.allclose(batch, direct, rtol=1e-10, atol=1e-12)


def test_gradient_moment_field_exact_coefficients():
    y1 = var(5, 0)
    field = gradient_moment_field(y1**3)
    exact = field.exact([2, 0, 0, 0, 0])
    # 3(y1 + 2)^2 integrates to 3 J(5, 2) + 12 J(5, 0)
    assert exact[0] == {0: 12, 2: 3}
    assert all(value == 0 for comp in exact[1:] for value in comp.values())


def test_shift_expansion_binomial_example():
    z = var(1, 0)
    expansion = shift_expansion(z**2)
    assert len(expansion.xi_terms) == 1
    assert expansion.at([3])[0] == 6 * z
    assert expansion.reconstruct([3]) == z**2 + 6 * z + 9


def test_shift_expansion_reconstructs_translation(rng):
    for _ in range(20):
        n = int(rng.integers(1, 5))
        ell = int(rng.integers(1, 6))
        Q = random_homogeneous(n, ell, rng)
        xi = [Fraction(int(rng.integers(-5, 6)), int(rng.integers(1, 4))) for _ in range(n)]
        expansion = shift_expansion(Q)
        assert len(expansion.xi_terms) == max(ell - 1, 0)
        assert expansion.reconstruct(xi) == translate(Q, xi)


def test_shift_terms_are_bihomogeneous():
    Q = alternating_powers(4, 4)
    expansion = shift_expansion(Q)
    for h, term in enumerate(expansion.xi_terms, start=1):
        for alpha in term.terms:
            assert sum(alpha[:4]) == h
            assert sum(alpha[4:]) == 4 - h


def test_change_of_center_at_origin_keeps_only_first_group():
    Q = var(5, 0) ** 2 - 2 * var(5, 1) * var(5, 2)
    change = change_of_center(Q, [0.0] * 5, 0.1, 1.0)
    assert change.bubble_group.value != 0
    assert all(g.value == 0 for g in change.shift_groups)
    assert change.constant_group.value == 0


def test_change_of_center_odd_degree_at_origin():
    Q = var(5, 0) ** 3 + var(5, 1) * var(5, 2) ** 2
    change = change_of_center(Q, [0.0] * 5, 0.05, 1.0)
    assert change.bubble_group.value == 0
    assert change.breakdown == 0


def test_change_of_center_sum_is_the_full_integral():
    Q = var(4, 0) ** 2 - 2 * var(4, 1) ** 2 + var(4, 0) * var(4, 2)
    X = [0.3, -0.2, 0.1, 0.5]
    lam = 0.05
    change = change_of_center(Q, [lam * x for x in X], lam, 1.0)
    full = lam**2 * moment_integral_mixed(translate(Q, X)).numeric
    assert change.breakdown == pytest.approx(full, rel=1e-10)
    orders = [g.lambda_order for g in change.shift_groups]
    assert orders == [1]


def test_change_of_center_tail_decays_fast():
    Q = var(4, 0) ** 2 - 2 * var(4, 1) ** 2 + var(4, 0) * var(4, 2)
    ell = 2
    X = [0.3, -0.2, 0.1, 0.5]
    lambdas = np.array([0.1, 0.05, 0.025])
    gaps = []
    for lam in lambdas:
        change = change_of_center(Q, [lam * x for x in X], float(lam), 1.0)
        gaps.append(abs(change.discrepancy))
    slope = np.polyfit(np.log(lambdas), np.log(gaps), 1)[0]
    assert slope >= ell + 1 - 0.2


def test_change_of_center_preconditions():
    Q = var(4, 0) ** 2
    with pytest.raises(IntegralPreconditionError):
        change_of_center(Q, [0.0] * 4, 0.0, 1.0)
    with pytest.raises(DivergentIntegralError):
        change_of_center(var(4, 0) ** 3, [0.0] * 4, 0.1, 1.0)
    with pytest.raises(IntegralPreconditionError):
        change_of_center(Q, [0.6, 0.8, 0.0, 0.0], 0.1, 1.0)


def test_change_of_center_quadrature_covers_the_origin_ball():
    lam, a, rho = 0.3, 0.4, 1.0
    Q = var(4, 0) ** 2

    def integrand(phi, s):
        shifted = s * s - 2 * a * s * np.cos(phi) + a * a
        weight = lam**-4 * (1 + shifted / lam**2) ** -4
        return (s * np.cos(phi)) ** 2 * weight * s**3 * np.sin(phi) ** 2

    inner, _ = integrate.dblquad(integrand, 0.0, rho, 0.0, np.pi, epsabs=1e-13, epsrel=1e-11)
    expected = sphere_area(3) * inner

    change = change_of_center(Q, [a, 0.0, 0.0, 0.0], lam, rho, sphere_order=24)
    assert change.quadrature == pytest.approx(expected, rel=1e-6)


def test_reduction_identity_examples():
    assert reduction_identity_check(6, 2, [0] * 6)
    assert reduction_identity_check(8, 2, [0, 2, 0, 0, 0, 0, 0, 0])
    assert reduction_identity_check(8, 2, [0, 1, 0, 0, 0, 0, 0, 0])
    assert moment_integral(Polynomial.monomial([4, 0, 0, 0, 0, 0])).j_multiple == 3


def test_reduction_identity_preconditions():
    with pytest.raises(IntegralPreconditionError):
        reduction_identity_check(6, 3, [0] * 6)
    with pytest.raises(IntegralPreconditionError):
        reduction_identity_check(6, 2, [2, 0, 0, 0, 0, 0])
    with pytest.raises(DivergentIntegralError):
        reduction_identity_check(4, 2, [0, 2, 0, 0])


def test_laplacian_identity_examples():
    assert laplacian_identity_check(4, 2, [0, 0, 0, 0])
    assert laplacian_identity_check(8, 4, [0] * 8)
    assert laplacian_identity_check(6, 2, [0, 2, 4, 0, 2, 0])
    with pytest.raises(IntegralPreconditionError):
        laplacian_identity_check(6, 2, [0, 1, 0, 0, 0, 0])


def _even_inner_exponents(n, limit=4):
    for inner in itertools.product(range(0, limit + 1, 2), repeat=n - 2):
        if sum(inner) <= limit:
            yield [0, *inner, 0]


@pytest.mark.parametrize(
    "n,k", [(n, k) for n in range(5, 10) for k in (2, 4, 6) if k + 2 <= n - 1]
)
def test_reduction_identity_holds_over_small_exponents(n, k):
    checked = 0
    for alpha in _even_inner_exponents(n):
        if k + 2 + sum(alpha) > n - 1:
            continue
        assert reduction_identity_check(n, k, alpha), alpha
        checked += 1
    assert checked > 0


@pytest.mark.parametrize("n,k", [(n, k) for n in range(3, 10) for k in (2, 4, 6)])
def test_laplacian_identity_holds_over_small_exponents(n, k):
    for alpha in _even_inner_exponents(n):
        assert laplacian_identity_check(n, k, alpha), alpha
