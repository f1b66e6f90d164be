"""Moments of polynomials against the bubble weight w(y) = (1 + |y|²)^{-n}.

For a monomial y^α of even degree ℓ < n,

    ∫ y^α w dy = J(n, ℓ) · ∏_i (α_i)!₋₂

where J(n, ℓ) = ∫ y₁² ··· y_h² w dy and m!₋₂ is the shifted double factorial
(1 for m ∈ {0, 2}, 0 for odd m, (m − 1)(m − 3)···1 otherwise). Summing over
monomials, the exact coefficient of J equals Δ^h Q / B with B = ℓ!!. Odd
monomials integrate to zero by symmetry.

Closed forms are cross-checked by a radial/angular quadrature: exact surface
moments on S^{n−1} times a Gauss-Legendre radial integral after r = tan θ.
"""

import itertools
import logging
import math
from fractions import Fraction
from functools import lru_cache
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, special

from bubble_correction.config.settings import settings
from bubble_correction.polynomial import (
    MultiIndex,
    Polynomial,
    Scalar,
    iterated_laplacian,
    substitute_leading,
    to_fraction,
    translate,
)
from bubble_correction.utils.parallel import map_chunks

logger = logging.getLogger(__name__)

Method = Literal["closed_form", "quadrature"]


class IntegralError(Exception):
    """Base exception for moment integrals."""


class DivergentIntegralError(IntegralError, ValueError):
    """The moment does not converge (degree ≥ n)."""

    def __init__(self, n: int, degree: int):
        self.n = n
        self.degree = degree
        super().__init__(
            f"moment of degree {degree} diverges against (1 + |y|^2)^-{n}; need degree < {n}"
        )


class IntegralPreconditionError(IntegralError, ValueError):
    """Arguments outside the range where an identity is stated."""


class QuadratureError(IntegralError):
    """A closed form disagrees with its quadrature oracle."""


def double_factorial_minus2(m: int) -> int:
    """m!₋₂: 1 for m ∈ {0, 2}, 0 for odd m, (m − 1)!! for even m ≥ 4."""
    if m < 0:
        raise ValueError(f"m must be non-negative, got {m}")
    if m % 2:
        return 0
    if m <= 2:
        return 1
    return int(special.factorial2(m - 1, exact=True))


def b_constant(ell: int) -> int:
    """B = ℓ(ℓ − 2)···2, the value of Δ^{ℓ/2}(y₁² ··· y_{ℓ/2}²)."""
    if ell < 2 or ell % 2:
        raise ValueError(f"ell must be even and at least 2, got {ell}")
    return int(special.factorial2(ell, exact=True))


def monomial_j_multiple(alpha: Sequence[int]) -> int:
    return math.prod(double_factorial_minus2(a) for a in alpha)


def sphere_area(n: int) -> float:
    """|S^{n−1}| = 2π^{n/2}/Γ(n/2)."""
    return float(2.0 * np.pi ** (n / 2) / special.gamma(n / 2))


def sphere_moment(alpha: Sequence[int]) -> float:
    """∫_{S^{n−1}} x^α dS = 2∏Γ((α_i + 1)/2)/Γ((|α| + n)/2), zero if any α_i is odd."""
    if any(a % 2 for a in alpha):
        return 0.0
    n = len(alpha)
    log_value = (
        np.log(2.0)
        + sum(special.gammaln((a + 1) / 2) for a in alpha)
        - special.gammaln((sum(alpha) + n) / 2)
    )
    return float(np.exp(log_value))


@lru_cache(maxsize=16)
def _legendre_rule(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(nodes)


@lru_cache(maxsize=32)
def sphere_rule(n: int, order: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Product Gauss rule on S^{n−1} in hyperspherical coordinates.

    Each polar angle φ_i carries the weight sin^{n−1−i}φ_i, which becomes a
    Gauss-Jacobi rule in cos φ_i; the azimuth uses 2·order equispaced nodes.
    The weights sum to |S^{n−1}|.

    Args:
        n: Ambient dimension (≥ 2)
        order: Nodes per polar angle, defaults to ``settings.SPHERE_NODES``

    Returns:
        (points, weights): Unit vectors of shape (m, n) and weights of shape (m,)
    """
    if n < 2:
        raise IntegralPreconditionError(f"sphere rule needs n >= 2, got {n}")
    order = order or settings.SPHERE_NODES
    azimuth = 2.0 * np.pi * np.arange(2 * order) / (2 * order)
    azimuth_weights = np.full(2 * order, 2.0 * np.pi / (2 * order))

    polar_rules = []
    for i in range(1, n - 1):
        power = n - 1 - i
        t, w = special.roots_jacobi(order, (power - 1) / 2, (power - 1) / 2)
        polar_rules.append((t, w))

    grids = np.meshgrid(*([t for t, _ in polar_rules] + [azimuth]), indexing="ij")
    weight_grids = np.meshgrid(*([w for _, w in polar_rules] + [azimuth_weights]), indexing="ij")
    cosines = [g.ravel() for g in grids[:-1]]
    phi = grids[-1].ravel()
    weights = np.prod([g.ravel() for g in weight_grids], axis=0)

    points = np.empty((phi.size, n))
    running = np.ones(phi.size)
    for i, c in enumerate(cosines):
        points[:, i] = running * c
        running = running * np.sqrt(np.clip(1.0 - c * c, 0.0, None))
    points[:, n - 2] = running * np.cos(phi)
    points[:, n - 1] = running * np.sin(phi)
    return points, weights


def radial_moment(n: int, degree: int, nodes: Optional[int] = None) -> float:
    """
    ∫_0^∞ r^{degree+n−1} (1 + r²)^{−n} dr by Gauss-Legendre in θ = arctan r.

    The substitution turns the integrand into sin^{degree+n−1}θ · cos^{n−degree−1}θ
    on [0, π/2].

    Args:
        n: Dimension
        degree: Polynomial degree of the angular factor
        nodes: Number of Gauss-Legendre nodes, defaults to ``settings.QUADRATURE_NODES``

    Returns:
        float: The radial integral

    Raises:
        DivergentIntegralError: If degree ≥ n
    """
    if degree >= n:
        raise DivergentIntegralError(n, degree)
    theta_max = np.pi / 2
    x, w = _legendre_rule(nodes or settings.QUADRATURE_NODES)
    theta = 0.5 * theta_max * (x + 1.0)
    integrand = np.sin(theta) ** (degree + n - 1) * np.cos(theta) ** (n - degree - 1)
    return float(0.5 * theta_max * np.dot(w, integrand))


def _j_closed_form(n: int, ell: int) -> float:
    h = ell // 2
    log_value = (
        (n / 2) * np.log(np.pi)
        - h * np.log(2.0)
        + special.gammaln((n - ell) / 2)
        - special.gammaln(n)
    )
    return float(np.exp(log_value))


@lru_cache(maxsize=None)
def j_value(n: int, ell: int) -> float:
    """
    J(n, ℓ) = ∫ y₁² ··· y_h² (1 + |y|²)^{−n} dy = π^{n/2} 2^{−h} Γ((n − ℓ)/2) / Γ(n).

    The closed form is checked against ``scipy.integrate.quad`` of the radial
    factor times the exact sphere moment before it is cached.

    Raises:
        IntegralPreconditionError: If ℓ is odd or negative
        DivergentIntegralError: If ℓ ≥ n
        QuadratureError: If the closed form and the oracle disagree
    """
    if ell < 0 or ell % 2:
        raise IntegralPreconditionError(f"ell must be even and non-negative, got {ell}")
    if ell >= n:
        raise DivergentIntegralError(n, ell)
    closed = _j_closed_form(n, ell)
    radial, _ = integrate.quad(
        lambda r: r ** (ell + n - 1) * (1.0 + r * r) ** (-n), 0.0, np.inf, limit=200
    )
    h = ell // 2
    oracle = sphere_moment((2,) * h + (0,) * (n - h)) * radial
    if not math.isclose(closed, oracle, rel_tol=settings.J_ORACLE_RTOL):
        raise QuadratureError(
            f"J({n}, {ell}): closed form {closed!r} disagrees with quadrature {oracle!r}"
        )
    logger.debug(f"J({n}, {ell}) = {closed!r} (oracle {oracle!r})")
    return closed


def monte_carlo_sphere_moment(
    alpha: Sequence[int],
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, float]:
    """
    Statistical estimate of ∫_{S^{n−1}} x^α dS from normalized Gaussian samples.

    ``samples`` defaults to ``settings.MONTE_CARLO_SAMPLES``.

    Returns:
        (estimate, standard error)
    """
    n = len(alpha)
    samples = samples or settings.MONTE_CARLO_SAMPLES
    rng = rng if rng is not None else np.random.default_rng(settings.SEED)
    points = rng.standard_normal((samples, n))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    exponents = np.asarray(alpha)

    def monomial(chunk: np.ndarray) -> np.ndarray:
        return np.prod(chunk**exponents, axis=1)

    values = map_chunks(monomial, points) * sphere_area(n)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(samples))


class IntegralResult(BaseModel):
    """∫ Q (1 + |y|²)^{−n} dy as an exact multiple of J plus its float value."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int
    degree: int
    j_multiple: Fraction
    numeric: float
    J: Optional[float] = None
    method: Method = "closed_form"

    @model_validator(mode="after")
    def validate_closed_form(self) -> "IntegralResult":
        if self.method == "closed_form" and self.J is not None:
            expected = float(self.j_multiple) * self.J
            if not math.isclose(self.numeric, expected, rel_tol=1e-12, abs_tol=1e-300):
                raise ValueError("closed-form numeric value must equal j_multiple * J")
        return self

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "degree": self.degree,
            "j_multiple": {
                "num": str(self.j_multiple.numerator),
                "den": str(self.j_multiple.denominator),
            },
            "numeric": self.numeric,
            "J": self.J,
            "method": self.method,
        }


def laplacian_j_multiple(Q: Polynomial) -> Fraction:
    """Δ^h Q / B for homogeneous Q of even degree ℓ = 2h ≥ 2; Q itself for ℓ = 0."""
    ell = Q.degree or 0
    if ell % 2:
        return Fraction(0)
    if ell == 0:
        return Q.constant_term
    return iterated_laplacian(Q, ell // 2).constant_term / b_constant(ell)


def moment_integral(Q: Polynomial, method: Method = "closed_form") -> IntegralResult:
    """
    ∫_{R^n} Q(y) (1 + |y|²)^{−n} dy for homogeneous Q.

    The exact coefficient of J is assembled monomial by monomial. With
    ``method="quadrature"`` the float value comes from the radial/angular
    oracle instead of the closed form.

    Raises:
        IntegralPreconditionError: If Q is not homogeneous
        DivergentIntegralError: If deg Q ≥ n
    """
    if not Q.is_homogeneous():
        raise IntegralPreconditionError("moment_integral expects a homogeneous polynomial")
    n = Q.dimension
    ell = Q.degree or 0
    if ell >= n:
        raise DivergentIntegralError(n, ell)
    if ell % 2:
        return IntegralResult(n=n, degree=ell, j_multiple=Fraction(0), numeric=0.0, method=method)

    j_multiple = sum(
        (c * monomial_j_multiple(alpha) for alpha, c in Q.terms.items()), Fraction(0)
    )
    J = j_value(n, ell)
    if method == "closed_form":
        numeric = float(j_multiple) * J
    else:
        radial = radial_moment(n, ell)
        numeric = math.fsum(
            float(c) * sphere_moment(alpha) * radial for alpha, c in Q.terms.items()
        )
    return IntegralResult(
        n=n, degree=ell, j_multiple=j_multiple, numeric=numeric, J=J, method=method
    )


class MixedIntegralResult(BaseModel):
    """Moments of a non-homogeneous polynomial, one result per degree."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    components: Dict[int, IntegralResult]

    @property
    def numeric(self) -> float:
        return math.fsum(r.numeric for r in self.components.values())


def moment_integral_mixed(Q: Polynomial, method: Method = "closed_form") -> MixedIntegralResult:
    """Split Q by degree and integrate each homogeneous part."""
    return MixedIntegralResult(
        components={
            d: moment_integral(part, method)
            for d, part in Q.homogeneous_components().items()
        }
    )


class GradientMomentField(BaseModel):
    """
    X ↦ ∫ ∇P(y + X) w dy as exact polynomials in X.

    ``components[i][d]`` is the polynomial multiplying J(n, d) in the i-th
    component; only even d contribute.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int
    components: List[Dict[int, Polynomial]]

    def exact(self, X: Sequence[Scalar]) -> List[Dict[int, Fraction]]:
        point = [to_fraction(x) for x in X]
        return [
            {d: poly.evaluate(point) for d, poly in comp.items()} for comp in self.components
        ]

    def evaluate(self, X: Sequence[Scalar]) -> np.ndarray:
        point = [float(x) for x in X]
        return np.array(
            [
                math.fsum(j_value(self.n, d) * poly.evaluate(point) for d, poly in comp.items())
                for comp in self.components
            ]
        )

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`evaluate`; rows of ``X`` map to rows of the result."""
        pts = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros((pts.shape[0], self.n))
        for i, comp in enumerate(self.components):
            for d, poly in comp.items():
                out[:, i] += j_value(self.n, d) * poly.evaluate_many(pts)
        return out


def gradient_moment_field(P: Polynomial) -> GradientMomentField:
    if not P.is_homogeneous():
        raise IntegralPreconditionError("expected a homogeneous polynomial")
    n = P.dimension
    ell = P.degree or 0
    if ell - 1 >= n:
        raise DivergentIntegralError(n, ell - 1)
    components = []
    for i in range(n):
        buckets: Dict[int, Dict[MultiIndex, Fraction]] = {}
        for alpha, c in P.derivative(i).terms.items():
            for beta in itertools.product(*(range(0, a + 1, 2) for a in alpha)):
                weight = c * monomial_j_multiple(beta)
                for a, b in zip(alpha, beta):
                    weight *= math.comb(a, b)
                rest = tuple(a - b for a, b in zip(alpha, beta))
                bucket = buckets.setdefault(sum(beta), {})
                bucket[rest] = bucket.get(rest, Fraction(0)) + weight
        components.append(
            {d: Polynomial._from_clean(n, terms) for d, terms in sorted(buckets.items())}
        )
    return GradientMomentField(n=n, components=components)


def gradient_moment(P: Polynomial, X: Sequence[Scalar]) -> np.ndarray:
    """
    ∫ ∇P(y + X) (1 + |y|²)^{−n} dy.

    Each component shifts ∂_i P by X exactly and integrates it degree by degree.
    """
    if len(X) != P.dimension:
        raise IntegralPreconditionError(f"point has length {len(X)}, expected {P.dimension}")
    shift = [to_fraction(x) for x in X]
    return np.array(
        [
            moment_integral_mixed(translate(P.derivative(i), shift)).numeric
            for i in range(P.dimension)
        ]
    )


class ShiftExpansion(BaseModel):
    """
    Q(ξ + z) = Q(z) + Σ_{h=1}^{ℓ−1} Ξ_h(ξ, z) + Q(ξ).

    ``xi_terms[h − 1]`` is Ξ_h in 2n variables, ξ first and z second, homogeneous
    of degree h in ξ and ℓ − h in z.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dimension: int
    degree: int
    base: Polynomial
    xi_terms: List[Polynomial]
    constant: Polynomial

    @model_validator(mode="after")
    def validate_term_count(self) -> "ShiftExpansion":
        if len(self.xi_terms) != max(self.degree - 1, 0):
            raise ValueError(f"expected {max(self.degree - 1, 0)} shift terms")
        for term in self.xi_terms:
            if term.dimension != 2 * self.dimension:
                raise ValueError("shift terms must live in 2n variables")
        return self

    def at(self, xi: Sequence[Scalar]) -> List[Polynomial]:
        """Ξ_h(ξ, ·) for h = 1..ℓ−1 as polynomials in z."""
        point = [to_fraction(x) for x in xi]
        return [substitute_leading(term, point) for term in self.xi_terms]

    def reconstruct(self, xi: Sequence[Scalar]) -> Polynomial:
        point = [to_fraction(x) for x in xi]
        total = self.base + self.constant.evaluate(point)
        for term in self.at(point):
            total = total + term
        return total


def shift_expansion(Q: Polynomial) -> ShiftExpansion:
    """
    Expand Q(ξ + z) by the degree in ξ.

    Ξ_h(ξ, z) = Σ_{|α|=h} ξ^α/α! · D^α Q(z), obtained here from the binomial
    expansion of every monomial.
    """
    if not Q.is_homogeneous():
        raise IntegralPreconditionError("shift_expansion expects a homogeneous polynomial")
    n = Q.dimension
    ell = Q.degree or 0
    buckets: Dict[int, Dict[MultiIndex, Fraction]] = {h: {} for h in range(1, ell)}
    for alpha, c in Q.terms.items():
        for beta in itertools.product(*(range(a + 1) for a in alpha)):
            h = sum(beta)
            if h == 0 or h == ell:
                continue
            weight = c
            for a, b in zip(alpha, beta):
                weight *= math.comb(a, b)
            key = beta + tuple(a - b for a, b in zip(alpha, beta))
            buckets[h][key] = buckets[h].get(key, Fraction(0)) + weight
    return ShiftExpansion(
        dimension=n,
        degree=ell,
        base=Q,
        xi_terms=[Polynomial._from_clean(2 * n, buckets[h]) for h in range(1, ell)],
        constant=Q,
    )


class CenterGroup(BaseModel):
    value: float
    lambda_order: int
    xi_order: int


class CenterChange(BaseModel):
    """Leading groups of ∫_{B₀(ρ)} Q [A_{λ,ξ}]^{2n/(n−2)} and the quadrature value."""

    bubble_group: CenterGroup
    shift_groups: List[CenterGroup]
    constant_group: CenterGroup
    quadrature: float

    @property
    def breakdown(self) -> float:
        return math.fsum(
            [self.bubble_group.value, self.constant_group.value]
            + [g.value for g in self.shift_groups]
        )

    @property
    def discrepancy(self) -> float:
        return self.breakdown - self.quadrature


def _origin_ball_integral(
    Q: Polynomial,
    xi: Sequence[float],
    lam: float,
    rho: float,
    radial_nodes: int,
    sphere_order: Optional[int],
) -> float:
    """
    ∫_{|y| ≤ ρ} Q(y) [A_{λ,ξ}(y)]^{2n/(n−2)} dy in polar coordinates about ξ.

    With y = ξ + λrθ the ray along θ leaves the ball at r = R(θ), the positive
    root of |ξ + λrθ|² = ρ². After r = tan t the radial weight
    r^{n−1}(1 + r²)^{−n} dr becomes sin^{n−1}t cos^{n−1}t dt on [0, arctan R(θ)].
    """
    n = Q.dimension
    center = np.asarray(xi, dtype=float)
    nodes, weights = sphere_rule(n, sphere_order)
    along = nodes @ center
    reach = (-along + np.sqrt(along**2 - center @ center + rho**2)) / lam
    top = np.arctan(reach)
    x, w = _legendre_rule(radial_nodes)

    total = np.zeros(len(weights))
    for node, node_weight in zip(x, w):
        t = top * (node + 1) / 2
        r = np.tan(t)
        points = center + lam * r[:, None] * nodes
        jacobian = (np.sin(t) * np.cos(t)) ** (n - 1) * top / 2
        total += node_weight * jacobian * Q.evaluate_many(points)
    return float(weights @ total)


def change_of_center(
    Q: Polynomial,
    xi: Sequence[float],
    lam: float,
    rho: float,
    radial_nodes: int = 64,
    sphere_order: Optional[int] = None,
) -> CenterChange:
    """
    Break ∫ Q(y) [A_{λ,ξ}(y)]^{2n/(n−2)} dy into its λ-ordered groups.

    With y = ξ + λz the integral becomes λ^ℓ ∫ Q(ξ/λ + z) w(z) dz, so the
    groups are λ^ℓ ∫Q w, λ^{ℓ−h} ∫Ξ_h(ξ, ·) w for 1 ≤ h ≤ ℓ − 1 and Q(ξ) ∫w.
    The quadrature value integrates over the ball of radius ρ about the
    origin, which must contain ξ; it differs from the group sum by the tail
    outside that ball.

    Raises:
        IntegralPreconditionError: If λ or ρ is not positive, or |ξ| ≥ ρ
        DivergentIntegralError: If deg Q > n − 2
    """
    if lam <= 0 or rho <= 0:
        raise IntegralPreconditionError(f"lambda and rho must be positive, got {lam}, {rho}")
    if math.fsum(float(x) ** 2 for x in xi) >= rho**2:
        raise IntegralPreconditionError(f"xi must lie inside the ball of radius {rho}")
    n = Q.dimension
    ell = Q.degree or 0
    if ell > n - 2:
        raise DivergentIntegralError(n, ell)
    xi_exact = [to_fraction(x) for x in xi]

    first = moment_integral(Q).numeric * lam**ell
    expansion = shift_expansion(Q)
    shifts = [
        CenterGroup(
            value=moment_integral(term).numeric * lam ** (ell - h),
            lambda_order=ell - h,
            xi_order=h,
        )
        for h, term in enumerate(expansion.at(xi_exact), start=1)
    ]
    constant = float(Q.evaluate(xi_exact)) * j_value(n, 0)

    quadrature = _origin_ball_integral(Q, xi, lam, rho, radial_nodes, sphere_order)
    return CenterChange(
        bubble_group=CenterGroup(value=first, lambda_order=ell, xi_order=0),
        shift_groups=shifts,
        constant_group=CenterGroup(value=constant, lambda_order=0, xi_order=ell),
        quadrature=quadrature,
    )


def _check_identity_arguments(n: int, k: int, alpha: Sequence[int]) -> None:
    if k < 2 or k % 2:
        raise IntegralPreconditionError(f"k must be even and at least 2, got {k}")
    if len(alpha) != n:
        raise IntegralPreconditionError(f"alpha must have length {n}")
    if n < 2 or alpha[0] or alpha[-1]:
        raise IntegralPreconditionError("alpha must vanish in the first and last slots")
    if any(a < 0 for a in alpha):
        raise IntegralPreconditionError("alpha must be non-negative")


def _identity_sides(n: int, k: int, alpha: Sequence[int]) -> Tuple[Polynomial, Polynomial]:
    lhs = list(alpha)
    lhs[0] = k + 2
    rhs = list(alpha)
    rhs[0] = k
    rhs[-1] = 2
    return Polynomial.monomial(lhs), Polynomial.monomial(rhs, k + 1)


def reduction_identity_check(n: int, k: int, alpha: Sequence[int]) -> bool:
    """∫ y₁^{k+2} M w = (k + 1) ∫ y₁^k y_n² M w, compared as exact multiples of J."""
    _check_identity_arguments(n, k, alpha)
    degree = k + 2 + sum(alpha)
    if degree > n - 1:
        raise DivergentIntegralError(n, degree)
    lhs, rhs = _identity_sides(n, k, alpha)
    return moment_integral(lhs).j_multiple == moment_integral(rhs).j_multiple


def laplacian_identity_check(n: int, k: int, alpha: Sequence[int]) -> bool:
    """Δ^h(y₁^{k+2} M) = (k + 1) Δ^h(y₁^k y_n² M) as polynomials, h = ⌊ℓ/2⌋."""
    _check_identity_arguments(n, k, alpha)
    if any(a % 2 for a in alpha):
        raise IntegralPreconditionError("alpha must be even")
    lhs, rhs = _identity_sides(n, k, alpha)
    h = (k + 2 + sum(alpha)) // 2
    return iterated_laplacian(lhs, h) == iterated_laplacian(rhs, h)
