import math
from fractions import Fraction

import pytest

from bubble_correction import reduction
from bubble_correction.polynomial import (
    Polynomial,
    alternating_powers,
    iterated_laplacian,
    laplacian,
    r2_multiply,
    random_homogeneous,
)
from bubble_correction.reduction import (
    CharacteristicGuardError,
    DependencyCycleError,
    RadialCompletionError,
    ReductionPreconditionError,
    ResidueObstructionError,
    UnsolvableError,
    a_multiplier,
    apply_L,
    characteristic_denominator,
    characteristic_guard,
    coefficient_table,
    h_of,
    kernel_basis,
    kernel_coordinates,
    linear_source_fixture,
    project_to_admissible,
    radial_completion,
    reduction_sum,
    residue_terms,
    solve_gamma,
    solve_general,
    vanishing_order,
)


def var(n, i):
    return Polynomial.variable(n, i)


def rho_power(n, k):
    return r2_multiply(Polynomial.constant(n, 1), k)


def harmonic_source(n, ell, rng, pieces=2):
    """Sum of y_k^e Re((y_i + i y_j)^{ℓ−e}) over random distinct i, j, k and e in {0, 1}."""
    P = Polynomial.zero(n)
    for _ in range(pieces):
        i, j, k = (int(m) for m in rng.choice(n, size=3, replace=False))
        e = int(rng.integers(0, 2))
        d = ell - e
        real_part = Polynomial.zero(n)
        for m in range(0, d + 1, 2):
            alpha = [0] * n
            alpha[i] = d - m
            alpha[j] = m
            sign = (-1) ** (m // 2)
            real_part = real_part + Polynomial.monomial(alpha, sign * math.comb(d, m))
        num = int(rng.integers(1, 10)) * int(rng.choice([-1, 1]))
        P = P + (var(n, k) ** e * real_part).scale(Fraction(num, int(rng.integers(1, 5))))
    return P


@pytest.mark.parametrize("ell,expected", [(1, 0), (2, 1), (3, 1), (5, 2), (6, 3)])
def test_h_of(ell, expected):
    assert h_of(ell) == expected


def test_h_of_rejects_non_positive_degree():
    with pytest.raises(ReductionPreconditionError):
        h_of(0)


def test_a_multiplier_values():
    assert a_multiplier(5, 4, 0, 0) == 0
    assert a_multiplier(5, 4, 1, 1) == 18
    assert a_multiplier(5, 4, 2, 1) == 2 * 2 * (4 + 5 - 2 + 8 - 4)


def test_characteristic_denominator_factorization():
    for n in range(3, 10):
        for ell in range(2, 9):
            for k in range(h_of(ell)):
                for j in range(k + 1):
                    expected = -(2 * j - n) * (2 * j - 2 * (ell - 1 - 2 * (k - j)))
                    assert characteristic_denominator(n, ell, j, k) == expected


def test_guard_holds_on_first_row():
    for n in (3, 5, 7, 8):
        for k in range(3):
            assert characteristic_guard(n, 6, 0, k)


def test_guard_examples():
    assert characteristic_guard(5, 4, 1, 1)
    assert not characteristic_guard(4, 6, 2, 2)


def test_guard_rejects_cells_outside_the_table():
    with pytest.raises(ReductionPreconditionError):
        characteristic_guard(5, 4, 2, 1)
    with pytest.raises(ReductionPreconditionError):
        characteristic_guard(5, 4, 0, 2)


def test_coefficient_table_worked_values():
    table = coefficient_table(5, 4)
    assert table.h == 2
    assert table.coefficient(0, 0) == Fraction(-1, 30)
    assert table.coefficient(1, 1) == Fraction(-1, 360)
    assert table.coefficient(0, 1) == Fraction(-1, 120)
    assert table.residues == [Fraction(-1, 120), Fraction(-1, 90), Fraction(-1, 360)]
    assert table.build_order == [(0, 0), (1, 1), (0, 1)]


@pytest.mark.parametrize("n,ell", [(5, 2), (5, 3), (6, 2), (8, 3)])
def test_small_degree_table_has_single_cell(n, ell):
    table = coefficient_table(n, ell)
    assert list(table.coefficients) == [(0, 0)]
    assert table.coefficient(0, 0) == Fraction(1, 2 * n * (1 - ell))


def test_first_diagonal_cell_matches_closed_form():
    for n in (3, 5, 7):
        for ell in (4, 5, 6):
            table = coefficient_table(n, ell)
            c00 = table.coefficient(0, 0)
            assert table.coefficient(1, 1) == -c00 / (2 * (n - 2) * (2 - ell))


def test_table_json_lists_cells_in_build_order():
    data = coefficient_table(5, 4).to_json()
    assert [(c["j"], c["k"]) for c in data["cells"]] == [(0, 0), (1, 1), (0, 1)]
    assert data["cells"][0]["C"] == {"num": "-1", "den": "30"}
    assert all(c["guard"]["ok"] for c in data["cells"])
    assert len(data["residues"]) == 3


def test_table_precondition_errors():
    with pytest.raises(ReductionPreconditionError):
        coefficient_table(2, 4)
    with pytest.raises(ReductionPreconditionError):
        coefficient_table(5, 1)
    with pytest.raises(ReductionPreconditionError):
        coefficient_table(4, 6)
    with pytest.raises(ReductionPreconditionError):
        coefficient_table(5, 4, depth=3)


def test_partial_table_has_no_residues():
    table = coefficient_table(7, 6, depth=1)
    assert table.residues is None
    assert list(table.coefficients) == [(0, 0)]


def test_cyclic_dependencies_are_detected(monkeypatch):
    original = reduction._cell_dependencies

    def cyclic(j, k):
        if (j, k) == (0, 0):
            return [(1, 1)]
        return original(j, k)

    monkeypatch.setattr(reduction, "_cell_dependencies", cyclic)
    with pytest.raises(DependencyCycleError):
        coefficient_table(5, 4)


def test_guard_failure_names_the_cell(monkeypatch):
    monkeypatch.setattr(
        reduction,
        "characteristic_denominator",
        lambda n, ell, j, k: Fraction(0) if (j, k) == (1, 1) else Fraction(1),
    )
    monkeypatch.setattr(reduction, "_characteristic_root", lambda n, ell, j, k: "j = n/2")
    with pytest.raises(CharacteristicGuardError) as info:
        coefficient_table(5, 4)
    assert (info.value.j, info.value.k) == (1, 1)
    assert info.value.root == "j = n/2"


@pytest.mark.parametrize("n", [3, 4, 5, 8])
def test_kernel_is_annihilated(n):
    for element in kernel_basis(n):
        assert apply_L(element).is_zero
    combo = var(n, 0).scale(2) - (Polynomial.radius_squared(n) - 1).scale(3)
    assert apply_L(combo).is_zero


def test_apply_L_on_harmonic_sources():
    for n, P in [(6, var(6, 0) ** 2 - var(6, 1) ** 2), (4, var(4, 0) * var(4, 1) * var(4, 2))]:
        ell = P.degree
        assert apply_L(P) == P.scale(-2 * n * (ell - 1))


@pytest.mark.parametrize("n", [4, 6, 8])
def test_apply_L_on_radial_powers(n):
    assert apply_L(Polynomial.radius_squared(n)) == 2 * n
    assert apply_L(rho_power(n, n // 2)) == rho_power(n, n // 2 - 1).scale(2 * n * (n - 1))


def test_linear_source_fixture_solves_the_equation():
    assert apply_L(linear_source_fixture()) == var(4, 0)


def test_linear_source_is_rejected_by_the_solver():
    with pytest.raises(ReductionPreconditionError):
        solve_gamma(var(4, 0))


def test_vanishing_order():
    assert vanishing_order(var(3, 0) ** 2 - var(3, 1) ** 2) == 1
    assert vanishing_order(Polynomial.radius_squared(3)) == 2
    assert vanishing_order(Polynomial.zero(3)) == 0


def test_harmonic_source_gives_scaled_copy():
    P = var(6, 0) ** 2 - var(6, 1) ** 2
    solution = solve_gamma(P)
    assert solution.gamma == P.scale(Fraction(-1, 12))
    assert solution.verified
    assert solution.vanishing_order == 1
    assert solution.radial_completion is None
    assert solution.unique_modulo_kernel


def test_random_harmonic_sources_give_scaled_copies(rng):
    solved = 0
    for _ in range(20):
        n = int(rng.integers(4, 9))
        ell = int(rng.integers(2, n - 1))
        P = harmonic_source(n, ell, rng)
        if P.is_zero:
            continue
        assert laplacian(P).is_zero
        gamma = solve_gamma(P).gamma
        expected = P.scale(Fraction(-1, 2 * n * (ell - 1)))
        assert apply_L(gamma) == P
        assert kernel_coordinates(gamma - expected) is not None
        solved += 1
    assert solved >= 15


def test_worked_example_solves_exactly(worked_example):
    solution = solve_gamma(worked_example)
    assert (apply_L(solution.gamma) - worked_example).is_zero
    assert solution.gamma.constant_term == 0
    assert all(sum(alpha) <= 4 for alpha in solution.gamma.terms)
    assert all(sum(alpha) >= 2 for alpha in solution.gamma.terms)


@pytest.mark.parametrize("ell", [2, 4, 6])
def test_radial_source_is_obstructed(ell):
    P = rho_power(5, ell // 2)
    with pytest.raises(ResidueObstructionError) as info:
        solve_gamma(P)
    assert not info.value.residue.is_zero
    assert info.value.top_laplacian == iterated_laplacian(P, h_of(ell))


def test_random_admissible_sources_solve(rng):
    solved = 0
    for _ in range(50):
        n = int(rng.integers(4, 11))
        ell = int(rng.integers(2, 7))
        if n % 2 == 0 and ell >= n + 2:
            continue
        P = project_to_admissible(random_homogeneous(n, ell, rng))
        if P.is_zero:
            continue
        solution = solve_gamma(P)
        assert apply_L(solution.gamma) == P
        assert all(2 <= sum(alpha) <= ell for alpha in solution.gamma.terms)
        solved += 1
    assert solved >= 25


def test_solutions_are_unique_modulo_kernel(worked_example):
    gamma = solve_gamma(worked_example).gamma
    n = worked_example.dimension
    other = gamma + var(n, 2).scale(5) - (Polynomial.radius_squared(n) - 1).scale(Fraction(1, 3))
    assert apply_L(other) == worked_example
    coords = kernel_coordinates(other - gamma)
    assert coords is not None
    linear, c0 = coords
    assert linear[2] == 5
    assert c0 == Fraction(-1, 3)


def test_kernel_coordinates_rejects_other_polynomials():
    assert kernel_coordinates(var(3, 0) ** 2) is None
    assert kernel_coordinates(Polynomial.radius_squared(3)) is None
    assert kernel_coordinates(Polynomial.zero(3)) == ([0, 0, 0], 0)


def test_residue_ledger_holds_for_random_sources(rng):
    for _ in range(30):
        n = int(rng.integers(3, 9))
        ell = int(rng.integers(2, 7))
        if n % 2 == 0 and ell >= n + 2:
            continue
        P = random_homogeneous(n, ell, rng)
        G = reduction_sum(P, coefficient_table(n, ell))
        assert (apply_L(G) - P - residue_terms(P)).is_zero


def test_residue_vanishes_iff_top_laplacian_vanishes(rng, worked_example):
    assert residue_terms(worked_example).is_zero
    residue = residue_terms(rho_power(7, 2))
    assert not residue.is_zero
    assert residue.degree <= 4
    for _ in range(10):
        P = random_homogeneous(5, 4, rng)
        top_zero = iterated_laplacian(P, 2).is_zero
        assert residue_terms(P).is_zero == top_zero


def test_solver_is_obstructed_iff_top_laplacian_survives(rng):
    outcomes = {True: 0, False: 0}
    for trial in range(40):
        n = int(rng.integers(4, 9))
        ell = int(rng.integers(2, 7))
        if n % 2 == 0 and ell >= n + 2:
            ell = n
        h = h_of(ell)
        P = project_to_admissible(random_homogeneous(n, ell, rng))
        if trial % 2:
            odd_factor = Polynomial.monomial([ell % 2] + [0] * (n - 1))
            P = P + r2_multiply(odd_factor, h).scale(int(rng.integers(1, 6)))
        if P.is_zero:
            continue
        top_survives = not iterated_laplacian(P, h).is_zero
        if top_survives:
            with pytest.raises(ResidueObstructionError):
                solve_gamma(P)
        else:
            assert apply_L(solve_gamma(P).gamma) == P
        outcomes[top_survives] += 1
    assert outcomes[True] >= 10
    assert outcomes[False] >= 10


@pytest.mark.parametrize("n,ell", [(4, 2), (6, 2), (6, 4), (8, 2), (8, 4), (8, 6)])
def test_radial_completion_cancels_residues(n, ell):
    table = coefficient_table(n, ell)
    scale = Fraction(7, 3)
    F = radial_completion(n, ell, table.residues, scale=scale)
    target = Polynomial.zero(n)
    for m, a in enumerate(table.residues):
        target = target + rho_power(n, m).scale(-a * scale)
    assert apply_L(F) == target
    assert F.degree <= n


def test_radial_completion_preconditions():
    with pytest.raises(RadialCompletionError) as info:
        radial_completion(5, 3, [Fraction(1)])
    assert len(info.value.violations) >= 2
    with pytest.raises(RadialCompletionError):
        radial_completion(4, 4, [Fraction(1)] * 3)


def test_solve_general_matches_solve_gamma_when_unobstructed(worked_example):
    general = solve_general(worked_example)
    assert general.gamma == solve_gamma(worked_example).gamma
    assert general.radial_completion is None


@pytest.mark.parametrize(
    "P",
    [
        rho_power(8, 2),
        rho_power(8, 2) + var(8, 0) ** 4 - var(8, 1) ** 4,
        rho_power(6, 2) + var(6, 0) ** 2 * var(6, 1) ** 2,
        Polynomial.radius_squared(4),
    ],
)
def test_solve_general_completes_radial_residues(P):
    solution = solve_general(P)
    assert apply_L(solution.total) == P
    assert solution.radial_completion is not None
    assert solution.total.degree <= P.dimension
    assert not solution.unique_modulo_kernel


@pytest.mark.parametrize("n", [4, 6, 8])
def test_solve_general_completes_random_obstructed_sources(n, rng):
    for _ in range(10):
        ell = 2 * int(rng.integers(1, n // 2))
        h = h_of(ell)
        P = random_homogeneous(n, ell, rng) + rho_power(n, h).scale(int(rng.integers(1, 6)))
        if iterated_laplacian(P, h).is_zero:
            P = P + rho_power(n, h)
        assert not iterated_laplacian(P, h).is_zero
        solution = solve_general(P)
        assert solution.radial_completion is not None
        assert apply_L(solution.total) == P


def test_solve_general_rejects_odd_dimension():
    with pytest.raises(UnsolvableError) as info:
        solve_general(rho_power(5, 2))
    assert not info.value.residue.is_zero
    assert info.value.reasons


def test_solution_json_shape(worked_example):
    data = solve_gamma(worked_example).to_json()
    assert data["verified"] is True
    assert data["radial_completion"] is None
    assert Polynomial.from_json(data["gamma"]).dimension == 8


def test_project_to_admissible_even_degree():
    y1 = var(4, 0)
    projected = project_to_admissible(y1**4)
    assert projected == y1**4 - rho_power(4, 2).scale(Fraction(1, 8))
    assert iterated_laplacian(projected, 2).is_zero


def test_project_to_admissible_odd_degree(rng):
    for _ in range(5):
        P = random_homogeneous(5, 5, rng)
        projected = project_to_admissible(P)
        assert iterated_laplacian(projected, 2).is_zero


def test_project_keeps_admissible_sources(worked_example):
    assert project_to_admissible(worked_example) is worked_example


@pytest.mark.parametrize(
    "P",
    [Polynomial.zero(5), var(5, 0) ** 2 + var(5, 1), var(2, 0) ** 2 - var(2, 1) ** 2],
)
def test_invalid_sources_are_rejected(P):
    with pytest.raises(ReductionPreconditionError):
        solve_gamma(P)


def test_even_dimension_degree_bound():
    with pytest.raises(ReductionPreconditionError):
        solve_gamma(alternating_powers(4, 6))
