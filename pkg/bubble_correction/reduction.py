"""Polynomial solutions of the linearized bubble equation.

The operator is

    L(G) = (1 + |Y|²) ΔG − 2n ⟨Y, ∇G⟩ + 2n G

and the goal is a polynomial Γ with L(Γ) = P for a homogeneous P of degree ℓ.
With ρ = |Y|², the building blocks T(j, k) = ρ^j Δ^k P satisfy

    L(T(j, k)) = d(j, k) T(j, k) + A(j, k) T(j−1, k) + T(j, k+1) + T(j+1, k+1)

where A(j, k) = 2j(2j + n − 2 + 2ℓ − 4k) and d(j, k) = A(j, k) − 2n(ℓ + 2(j−k) − 1).
The reduction method picks coefficients C(j, k), 0 ≤ j ≤ k, column by column so
that everything except P cancels. Whatever survives in column h = ⌊ℓ/2⌋ is the
residue Δ^h P · Σ a_m ρ^m; when Δ^h P ≠ 0 and both n and ℓ are even it can be
absorbed by a radial polynomial.
"""

import logging
from fractions import Fraction
from graphlib import CycleError, TopologicalSorter
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from bubble_correction.polynomial import (
    Polynomial,
    euler_operator,
    iterated_laplacian,
    laplacian,
    r2_multiply,
)

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]

ROOT_HALF_DIMENSION = "j = n/2"
ROOT_DEGREE = "j = (ell - 1) - 2(k - j)"


class ReductionError(Exception):
    """Base exception for the reduction method."""


class ReductionPreconditionError(ReductionError, ValueError):
    """Raised when (n, ℓ) or the source polynomial is outside the method's range."""


class CharacteristicGuardError(ReductionError):
    """A table cell has a vanishing characteristic denominator."""

    def __init__(self, n: int, ell: int, j: int, k: int, root: str):
        self.n = n
        self.ell = ell
        self.j = j
        self.k = k
        self.root = root
        super().__init__(
            f"characteristic denominator vanishes at cell (j={j}, k={k}) "
            f"for n={n}, ell={ell}: root {root}"
        )


class DependencyCycleError(ReductionError):
    """The cell dependency graph of the coefficient table is not acyclic."""


class ResidueObstructionError(ReductionError):
    """Δ^h P ≠ 0, so the reduction sum alone leaves a residue."""

    def __init__(self, residue: Polynomial, top_laplacian: Polynomial):
        self.residue = residue
        self.top_laplacian = top_laplacian
        super().__init__(f"residue obstruction: Δ^h P = {top_laplacian}, residue = {residue}")


class RadialCompletionError(ReductionError, ValueError):
    """Radial completion requested outside even n ≥ 4 and even ℓ ≤ n − 2."""

    def __init__(self, violations: List[str]):
        self.violations = violations
        super().__init__("radial completion unavailable: " + "; ".join(violations))


class UnsolvableError(ReductionError):
    """Neither the reduction sum nor the radial completion applies."""

    def __init__(self, residue: Polynomial, reasons: List[str]):
        self.residue = residue
        self.reasons = reasons
        super().__init__("no polynomial solution by this method: " + "; ".join(reasons))


class VerificationError(ReductionError):
    """The constructed correction does not satisfy L(Γ) = P exactly."""

    def __init__(self, defect: Polynomial):
        self.defect = defect
        super().__init__(f"L(Γ) − P = {defect} is not zero")


def h_of(ell: int) -> int:
    """Largest integer not exceeding ℓ/2."""
    if ell < 1:
        raise ReductionPreconditionError(f"ell must be positive, got {ell}")
    return ell // 2


def a_multiplier(n: int, ell: int, j: int, k: int) -> Fraction:
    if j < 0 or k < 0:
        raise ReductionPreconditionError(f"j and k must be non-negative, got ({j}, {k})")
    return Fraction(2 * j * (2 * j + n - 2 + 2 * ell - 4 * k))


def characteristic_denominator(n: int, ell: int, j: int, k: int) -> Fraction:
    """d(j, k) = A(j, k) − 2n(ℓ + 2(j − k) − 1) = −(2j − n)(2j − 2(ℓ − 1 − 2(k − j)))."""
    return a_multiplier(n, ell, j, k) - 2 * n * (ell + 2 * (j - k) - 1)


def _characteristic_root(n: int, ell: int, j: int, k: int) -> str:
    if 2 * j == n:
        return ROOT_HALF_DIMENSION
    if j == (ell - 1) - 2 * (k - j):
        return ROOT_DEGREE
    raise ValueError(f"cell ({j}, {k}) is not a characteristic root")


def characteristic_guard(n: int, ell: int, j: int, k: int) -> bool:
    """True when cell (j, k) can be solved for, i.e. d(j, k) ≠ 0."""
    h = h_of(ell)
    if not 0 <= j <= k <= h - 1:
        raise ReductionPreconditionError(
            f"cell ({j}, {k}) outside 0 <= j <= k <= {h - 1} for ell={ell}"
        )
    return characteristic_denominator(n, ell, j, k) != 0


class CoefficientTable(BaseModel):
    """Reduction-method coefficients for one (n, ℓ)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int = Field(..., ge=3)
    ell: int = Field(..., ge=2)
    h: int
    depth: int
    coefficients: Dict[Cell, Fraction]
    multipliers: Dict[Cell, Fraction]
    denominators: Dict[Cell, Fraction]
    build_order: List[Cell]
    residues: Optional[List[Fraction]] = None

    @model_validator(mode="after")
    def validate_cells(self) -> "CoefficientTable":
        for cell, d in self.denominators.items():
            if d == 0:
                raise ValueError(f"stored cell {cell} has a zero characteristic denominator")
        for (j, k), a in self.multipliers.items():
            if a != a_multiplier(self.n, self.ell, j, k):
                raise ValueError(f"multiplier at {(j, k)} does not match A(j, k)")
        return self

    def coefficient(self, j: int, k: int) -> Fraction:
        """C(j, k), with cells outside the table read as zero."""
        return self.coefficients.get((j, k), Fraction(0))

    def to_json(self) -> Dict[str, Any]:
        def frac(value: Fraction) -> Dict[str, str]:
            return {"num": str(value.numerator), "den": str(value.denominator)}

        return {
            "n": self.n,
            "ell": self.ell,
            "h": self.h,
            "depth": self.depth,
            "cells": [
                {
                    "j": j,
                    "k": k,
                    "C": frac(self.coefficients[(j, k)]),
                    "A": frac(self.multipliers[(j, k)]),
                    "guard": {"denominator": frac(self.denominators[(j, k)]), "ok": True},
                }
                for j, k in self.build_order
            ],
            "residues": None
            if self.residues is None
            else [frac(a) for a in self.residues],
        }


def _cell_dependencies(j: int, k: int) -> List[Cell]:
    deps = []
    if j + 1 <= k:
        deps.append((j + 1, k))
    if k >= 1 and j <= k - 1:
        deps.append((j, k - 1))
    if j >= 1 and k >= 1:
        deps.append((j - 1, k - 1))
    return deps


def _build_order(depth: int) -> List[Cell]:
    """
    Topological order of the cells 0 ≤ j ≤ k < depth.

    Ready cells are taken column by column and bottom-up inside a column, which
    reproduces the diagonal-first, then upward order of the hand computation.
    """
    graph = {(j, k): _cell_dependencies(j, k) for k in range(depth) for j in range(k + 1)}
    sorter = TopologicalSorter(graph)
    try:
        sorter.prepare()
    except CycleError as e:
        raise DependencyCycleError(f"cell dependencies contain a cycle: {e.args[1]}") from e
    order: List[Cell] = []
    while sorter.is_active():
        ready = sorted(sorter.get_ready(), key=lambda cell: (cell[1], -cell[0]))
        for cell in ready:
            order.append(cell)
            sorter.done(cell)
    return order


def coefficient_table(n: int, ell: int, depth: Optional[int] = None) -> CoefficientTable:
    """
    Build the coefficient table C(j, k) for 0 ≤ j ≤ k < depth.

    Args:
        n: Dimension (≥ 3)
        ell: Degree of the source polynomial (≥ 2)
        depth: Number of columns; defaults to h = ⌊ℓ/2⌋. Residues are only
            assembled for the full table.

    Returns:
        CoefficientTable: The populated table

    Raises:
        ReductionPreconditionError: If ℓ < 2, n < 3, or n is even with ℓ ≥ n + 2
        CharacteristicGuardError: If some cell has a zero denominator
    """
    if n < 3:
        raise ReductionPreconditionError(f"dimension must be at least 3, got {n}")
    if ell < 2:
        raise ReductionPreconditionError(f"ell must be at least 2, got {ell}")
    if n % 2 == 0 and ell >= n + 2:
        raise ReductionPreconditionError(
            f"for even n the degree must satisfy ell < n + 2 (n={n}, ell={ell})"
        )
    h = h_of(ell)
    depth = h if depth is None else depth
    if not 0 <= depth <= h:
        raise ReductionPreconditionError(f"depth must lie in [0, {h}], got {depth}")

    coefficients: Dict[Cell, Fraction] = {}
    multipliers: Dict[Cell, Fraction] = {}
    denominators: Dict[Cell, Fraction] = {}

    def value(j: int, k: int) -> Fraction:
        return coefficients.get((j, k), Fraction(0))

    order = _build_order(depth)
    for j, k in order:
        d = characteristic_denominator(n, ell, j, k)
        if d == 0:
            root = _characteristic_root(n, ell, j, k)
            logger.error(f"Guard failure at cell ({j}, {k}) for n={n}, ell={ell}: {root}")
            raise CharacteristicGuardError(n, ell, j, k, root)
        source = Fraction(1) if (j, k) == (0, 0) else Fraction(0)
        feed = (
            a_multiplier(n, ell, j + 1, k) * value(j + 1, k)
            + value(j, k - 1)
            + value(j - 1, k - 1)
        )
        coefficients[(j, k)] = (source - feed) / d
        multipliers[(j, k)] = a_multiplier(n, ell, j, k)
        denominators[(j, k)] = d

    residues = None
    if depth == h:
        residues = [value(m - 1, h - 1) + value(m, h - 1) for m in range(h + 1)]

    logger.debug(f"Built coefficient table n={n}, ell={ell}, depth={depth}")
    return CoefficientTable(
        n=n,
        ell=ell,
        h=h,
        depth=depth,
        coefficients=coefficients,
        multipliers=multipliers,
        denominators=denominators,
        build_order=order,
        residues=residues,
    )


def apply_L(G: Polynomial) -> Polynomial:
    """(1 + ρ)ΔG − 2n⟨Y, ∇G⟩ + 2nG."""
    n = G.dimension
    lap = laplacian(G)
    return lap + r2_multiply(lap, 1) - euler_operator(G).scale(2 * n) + G.scale(2 * n)


def vanishing_order(P: Polynomial) -> int:
    """Smallest k with Δ^k P ≡ 0."""
    k = 0
    current = P
    while not current.is_zero:
        current = iterated_laplacian(current, 1)
        k += 1
    return k


def reduction_sum(P: Polynomial, table: CoefficientTable) -> Polynomial:
    """Σ C(j, k) ρ^j Δ^k P over the cells of ``table``."""
    if P.dimension != table.n:
        raise ReductionPreconditionError(
            f"table built for n={table.n}, polynomial has dimension {P.dimension}"
        )
    total = Polynomial.zero(P.dimension)
    lap_k = P
    for k in range(table.depth):
        if k:
            lap_k = iterated_laplacian(lap_k, 1)
        if lap_k.is_zero:
            break
        column = Polynomial.zero(P.dimension)
        for j in range(k, -1, -1):
            column = r2_multiply(column, 1) + lap_k.scale(table.coefficient(j, k))
        total = total + column
    return total


class CorrectionSolution(BaseModel):
    """A verified polynomial solution of L(Γ + F) = P."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    gamma: Polynomial
    radial_completion: Optional[Polynomial] = None
    vanishing_order: int
    verified: bool
    n: int
    ell: int
    unique_modulo_kernel: bool = True

    @model_validator(mode="after")
    def validate_dimensions(self) -> "CorrectionSolution":
        if self.gamma.dimension != self.n:
            raise ValueError("gamma dimension does not match n")
        if self.radial_completion is not None and self.radial_completion.dimension != self.n:
            raise ValueError("radial completion dimension does not match n")
        return self

    @property
    def total(self) -> Polynomial:
        if self.radial_completion is None:
            return self.gamma
        return self.gamma + self.radial_completion

    def to_json(self) -> Dict[str, Any]:
        return {
            "gamma": self.gamma.to_json(),
            "radial_completion": None
            if self.radial_completion is None
            else self.radial_completion.to_json(),
            "vanishing_order": self.vanishing_order,
            "verified": self.verified,
            "n": self.n,
            "ell": self.ell,
            "unique_modulo_kernel": self.unique_modulo_kernel,
        }


def _source_degree(P: Polynomial) -> int:
    if P.is_zero:
        raise ReductionPreconditionError("source polynomial must be nonzero")
    if not P.is_homogeneous():
        raise ReductionPreconditionError(f"source polynomial must be homogeneous: {P}")
    if P.dimension < 3:
        raise ReductionPreconditionError(f"dimension must be at least 3, got {P.dimension}")
    ell = P.degree
    if ell == 1:
        raise ReductionPreconditionError(
            "degree 1 sources need terms above the source degree; "
            "see linear_source_fixture() for the n = 4 solution"
        )
    if ell < 2:
        raise ReductionPreconditionError(f"source degree must be at least 2, got {ell}")
    return ell


def residue_terms(P: Polynomial) -> Polynomial:
    """Δ^h P · Σ_m a_m ρ^m, the part of L(reduction_sum) not equal to P."""
    ell = _source_degree(P)
    table = coefficient_table(P.dimension, ell)
    top = iterated_laplacian(P, table.h)
    result = Polynomial.zero(P.dimension)
    if top.is_zero:
        return result
    for m, a in enumerate(table.residues or []):
        if a:
            result = result + r2_multiply(top, m).scale(a)
    return result


def _verify(candidate: Polynomial, P: Polynomial) -> None:
    defect = apply_L(candidate) - P
    if not defect.is_zero:
        raise VerificationError(defect)


def solve_gamma(P: Polynomial) -> CorrectionSolution:
    """
    Solve L(Γ) = P by the reduction method.

    The table is truncated at the first k₀ with Δ^{k₀} P ≡ 0, so Γ only holds
    the nonzero blocks. Γ is verified exactly before it is returned.

    Args:
        P: Nonzero homogeneous polynomial of degree ℓ ≥ 2 with Δ^h P ≡ 0

    Returns:
        CorrectionSolution: Verified solution without radial completion

    Raises:
        ReductionPreconditionError: For invalid sources
        ResidueObstructionError: If Δ^h P ≠ 0
        CharacteristicGuardError: Propagated from the table build
    """
    ell = _source_degree(P)
    n = P.dimension
    h = h_of(ell)
    top = iterated_laplacian(P, h)
    if not top.is_zero:
        residue = residue_terms(P)
        logger.info(f"Residue obstruction for degree {ell} source in n={n}")
        raise ResidueObstructionError(residue, top)

    k0 = vanishing_order(P)
    table = coefficient_table(n, ell, depth=min(h, k0))
    gamma = reduction_sum(P, table)
    _verify(gamma, P)
    logger.debug(f"Solved n={n}, ell={ell} with {len(gamma)} terms, k0={k0}")
    return CorrectionSolution(
        gamma=gamma,
        vanishing_order=k0,
        verified=True,
        n=n,
        ell=ell,
        unique_modulo_kernel=(gamma.degree or 0) < n,
    )


def radial_completion(
    n: int, ell: int, residues: Sequence[Fraction], scale: Fraction = Fraction(1)
) -> Polynomial:
    """
    Radial polynomial F with L(F) = −scale · Σ_m a_m ρ^m.

    Uses L(ρ^k) = 2k(2k + n − 2) ρ^{k−1} + (2k − 2)(2k − n) ρ^k, whose second
    coefficient vanishes at k = 1 and k = n/2, and cancels from the bottom up.

    Args:
        n: Even dimension ≥ 4
        ell: Even degree ≤ n − 2
        residues: a_0, ..., a_h
        scale: The constant Δ^h P

    Returns:
        Polynomial: scale · Σ_{k=1}^{n/2} B_k ρ^k

    Raises:
        RadialCompletionError: If the parity or dimension hypotheses fail
    """
    violations = []
    if n < 4 or n % 2:
        violations.append(f"n must be even and at least 4 (n={n})")
    if ell % 2:
        violations.append(f"ell must be even (ell={ell})")
    if ell > n - 2:
        violations.append(f"ell must not exceed n - 2 (ell={ell}, n={n})")
    if len(residues) != ell // 2 + 1:
        violations.append(f"expected {ell // 2 + 1} residues, got {len(residues)}")
    if violations:
        raise RadialCompletionError(violations)

    top = n // 2
    a = [Fraction(x) for x in residues] + [Fraction(0)] * (top - len(residues) + 1)
    B: Dict[int, Fraction] = {}
    for k in range(1, top + 1):
        previous = Fraction(0)
        if k >= 2:
            previous = (2 * (k - 1) - 2) * (2 * (k - 1) - n) * B[k - 1]
        B[k] = -(a[k - 1] + previous) / ((2 * k) * (2 * k + n - 2))

    unit = Polynomial.constant(n, 1)
    F = Polynomial.zero(n)
    for k, b in B.items():
        if b:
            F = F + r2_multiply(unit, k).scale(b)
    return F.scale(scale)


def solve_general(P: Polynomial) -> CorrectionSolution:
    """
    Solve L(Γ) = P, adding a radial completion when Δ^h P is a nonzero constant.

    The completed solution has degree up to n, so it is no longer unique modulo
    the kernel.

    Raises:
        UnsolvableError: If Δ^h P ≠ 0 outside even n ≥ 4, even ℓ ≤ n − 2
    """
    ell = _source_degree(P)
    n = P.dimension
    h = h_of(ell)
    top = iterated_laplacian(P, h)
    if top.is_zero:
        return solve_gamma(P)

    reasons = []
    if n < 4 or n % 2:
        reasons.append(f"n must be even and at least 4 (n={n})")
    if ell % 2:
        reasons.append(f"ell must be even (ell={ell})")
    if ell > n - 2:
        reasons.append(f"ell must not exceed n - 2 (ell={ell}, n={n})")
    if reasons:
        raise UnsolvableError(residue_terms(P), reasons)

    table = coefficient_table(n, ell)
    G = reduction_sum(P, table)
    F = radial_completion(n, ell, table.residues or [], scale=top.constant_term)
    _verify(G + F, P)
    logger.info(f"Radial completion used for n={n}, ell={ell}")
    return CorrectionSolution(
        gamma=G,
        radial_completion=F,
        vanishing_order=h + 1,
        verified=True,
        n=n,
        ell=ell,
        unique_modulo_kernel=False,
    )


def project_to_admissible(P: Polynomial) -> Polynomial:
    """
    Remove the part of P seen by Δ^h, so that Δ^h of the result vanishes.

    Even ℓ subtracts c·ρ^h, odd ℓ subtracts Σ c_i y_i ρ^h.
    """
    if P.is_zero or not P.is_homogeneous():
        raise ReductionPreconditionError("expected a nonzero homogeneous polynomial")
    ell = P.degree or 0
    if ell < 2:
        raise ReductionPreconditionError(f"degree must be at least 2, got {ell}")
    n = P.dimension
    h = h_of(ell)
    top = iterated_laplacian(P, h)
    if top.is_zero:
        return P
    radial = r2_multiply(Polynomial.constant(n, 1), h)
    if ell % 2 == 0:
        c = top.constant_term / iterated_laplacian(radial, h).constant_term
        return P - radial.scale(c)
    e1 = (1,) + (0,) * (n - 1)
    kappa = iterated_laplacian(Polynomial.variable(n, 0) * radial, h).coefficient(e1)
    result = P
    for i in range(n):
        yi = Polynomial.variable(n, i)
        ei = tuple(1 if m == i else 0 for m in range(n))
        b = top.coefficient(ei)
        if b:
            result = result - (yi * radial).scale(b / kappa)
    return result


def kernel_basis(n: int) -> List[Polynomial]:
    """y_1, ..., y_n and ρ − 1."""
    return [Polynomial.variable(n, i) for i in range(n)] + [
        Polynomial.radius_squared(n) - 1
    ]


def kernel_coordinates(D: Polynomial) -> Optional[Tuple[List[Fraction], Fraction]]:
    """
    Coordinates of D in span{y_1, ..., y_n, ρ − 1}, or None if D is outside it.

    Returns:
        (c, c0) with D = Σ c_i y_i + c0 (ρ − 1)
    """
    n = D.dimension
    c0 = -D.constant_term
    linear = []
    for i in range(n):
        alpha = [0] * n
        alpha[i] = 1
        linear.append(D.coefficient(alpha))
    remainder = D - Polynomial.radius_squared(n).scale(c0) + c0
    for i, c in enumerate(linear):
        remainder = remainder - Polynomial.variable(n, i).scale(c)
    if not remainder.is_zero:
        return None
    return linear, c0


def linear_source_fixture() -> Polynomial:
    """Solution of L(Γ) = y₁ in n = 4: (1/12) ρ y₁ + (1/96) ρ² y₁."""
    y1 = Polynomial.variable(4, 0)
    return r2_multiply(y1, 1).scale(Fraction(1, 12)) + r2_multiply(y1, 2).scale(
        Fraction(1, 96)
    )
