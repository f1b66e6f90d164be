"""
Non-degeneracy and balance constraints on the Taylor data of K at blow-up points.

Algebraic constraints (values of P, moments of the shift terms, interference
between flexibility exponents) are decided over the rationals. Constraints
where float powers enter use a relative tolerance, and the Pohozaev identity
is checked by quadrature.
"""

import logging
import math
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import optimize

from bubble_correction.config.settings import settings
from bubble_correction.integrals import (
    _legendre_rule,
    gradient_moment,
    gradient_moment_field,
    moment_integral,
    shift_expansion,
    sphere_rule,
)
from bubble_correction.polynomial import (
    Polynomial,
    Scalar,
    directional_pairing,
    gradient,
    iterated_laplacian,
    to_fraction,
)
from bubble_correction.profile import AnalyticField, CurvatureModel, conformal_constant
from bubble_correction.reduction import h_of

logger = logging.getLogger(__name__)


class BalanceError(Exception):
    """Base exception for balance checks."""


class UnsupportedConfigurationError(BalanceError, ValueError):
    """Dimension, degree or exponent outside the range a check is stated for."""


def _fraction_string(value: Fraction) -> str:
    return str(value)


class ViolationReport(BaseModel):
    """
    Outcome of one constraint.

    ``residual_exact`` is set when the residual is an exact rational and then
    decides the verdict; otherwise ``residual_float`` is compared against
    ``tolerance``.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    constraint: str
    residual_float: float
    residual_exact: Optional[Fraction] = None
    tolerance: float
    passed: bool
    details: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_verdict(self) -> "ViolationReport":
        if self.residual_exact is not None:
            expected = abs(self.residual_exact) <= to_fraction(self.tolerance)
        else:
            expected = abs(self.residual_float) <= self.tolerance
        if expected != self.passed:
            raise ValueError(f"verdict for {self.constraint} does not match its residual")
        return self

    @classmethod
    def build(
        cls,
        constraint: str,
        residual_float: float,
        tolerance: float,
        residual_exact: Optional[Fraction] = None,
        details: Optional[Dict[str, Any]] = None,
    ) -> "ViolationReport":
        if residual_exact is not None:
            passed = abs(residual_exact) <= to_fraction(tolerance)
        else:
            passed = bool(abs(residual_float) <= tolerance)
        return cls(
            constraint=constraint,
            residual_float=residual_float,
            residual_exact=residual_exact,
            tolerance=tolerance,
            passed=passed,
            details=details or {},
        )

    def to_json(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "constraint": self.constraint,
            "residual_float": self.residual_float,
            "pass": self.passed,
            "tolerance": self.tolerance,
        }
        if self.residual_exact is not None:
            data["residual_exact"] = _fraction_string(self.residual_exact)
        if self.details:
            data["details"] = self.details
        return data


def _fraction_list(values: Any) -> List[Fraction]:
    return [to_fraction(v) for v in values]


class BlowupConfiguration(BaseModel):
    """
    Blow-up points with their Taylor data.

    ``k_values`` hold c̃_n K(Ŷ_m), so the unit normalization is n(n − 2).
    Coordinates, flexibility vectors and exponents are exact rationals.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int = Field(..., ge=3)
    points: List[List[Fraction]]
    k_values: List[float]
    taylor_polys: List[Polynomial]
    flex_vectors: List[List[Fraction]]
    flex_exponents: List[Fraction]
    scale_ratios: List[Fraction]

    @field_validator("points", "flex_vectors", mode="before")
    @classmethod
    def coerce_vectors(cls, v: Any) -> List[List[Fraction]]:
        return [_fraction_list(row) for row in v]

    @field_validator("flex_exponents", "scale_ratios", mode="before")
    @classmethod
    def coerce_scalars(cls, v: Any) -> List[Fraction]:
        return _fraction_list(v)

    @field_validator("taylor_polys", mode="before")
    @classmethod
    def coerce_polys(cls, v: Any) -> List[Polynomial]:
        return [p if isinstance(p, Polynomial) else Polynomial.from_json(p) for p in v]

    @model_validator(mode="after")
    def validate_configuration(self) -> "BlowupConfiguration":
        n = self.n
        count = len(self.points)
        if count == 0:
            raise ValueError("at least one blow-up point is required")
        for name in ("k_values", "taylor_polys", "flex_vectors", "flex_exponents", "scale_ratios"):
            if len(getattr(self, name)) != count:
                raise ValueError(f"{name} must have one entry per point")
        for row in self.points + self.flex_vectors:
            if len(row) != n:
                raise ValueError(f"vectors must have {n} coordinates")
        if any(self.points[0]):
            raise ValueError("the first point must be the origin")
        if len({tuple(p) for p in self.points}) != count:
            raise ValueError("points must be pairwise distinct")
        if any(k <= 0 for k in self.k_values):
            raise ValueError("curvature values must be positive")
        for poly in self.taylor_polys:
            if poly.dimension != n:
                raise ValueError("taylor polynomial dimension does not match n")
            if poly.is_zero or not poly.is_homogeneous() or poly.degree != n - 2:
                raise ValueError(f"taylor polynomials must be homogeneous of degree {n - 2}")
        if any(eta <= 0 for eta in self.flex_exponents):
            raise ValueError("flexibility exponents must be positive")
        if any(s <= 0 for s in self.scale_ratios):
            raise ValueError("scale ratios must be positive")
        if self.scale_ratios[0] != 1:
            raise ValueError("the first scale ratio must be 1")
        return self

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "BlowupConfiguration":
        return cls.model_validate(data)

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "points": [[str(x) for x in p] for p in self.points],
            "k_values": list(self.k_values),
            "taylor_polys": [p.to_json() for p in self.taylor_polys],
            "flex_vectors": [[str(x) for x in v] for v in self.flex_vectors],
            "flex_exponents": [str(e) for e in self.flex_exponents],
            "scale_ratios": [str(s) for s in self.scale_ratios],
        }


class GradientBounds(BaseModel):
    c_low: float
    c_high: float
    argmin: List[float]
    samples: int

    @property
    def holds(self) -> bool:
        return self.c_low > settings.GRADIENT_FLOOR


def _sample_directions(n: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Random unit vectors plus the axes and the diagonals of coordinate planes."""
    random = rng.standard_normal((samples, n))
    random /= np.linalg.norm(random, axis=1, keepdims=True)
    eye = np.eye(n)
    planes = [
        (sa * eye[i] + sb * eye[j]) / math.sqrt(2)
        for i in range(n)
        for j in range(i + 1, n)
        for sa in (1, -1)
        for sb in (1, -1)
    ]
    return np.vstack([random, eye, -eye] + ([np.array(planes)] if planes else []))


def gradient_lower_bound(
    P: Polynomial,
    rho: float = 1.0,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradientBounds:
    """
    Estimate the constants in C⁻¹|y|^{ℓ−1} ≤ |∇P(y)| ≤ C|y|^{ℓ−1}.

    |∇P(y)|/|y|^{ℓ−1} is sampled on the sphere of radius ρ; by homogeneity
    the ratio does not depend on ρ.

    Args:
        P: Homogeneous polynomial of degree ℓ ≥ 2
        rho: Sampling radius
        samples: Number of random directions, defaults to ``settings.SAMPLES``
        rng: numpy random generator

    Returns:
        GradientBounds: Minimum and maximum ratio with the minimizing direction

    Raises:
        UnsupportedConfigurationError: If P is not homogeneous of degree ≥ 2
    """
    ell = P.degree or 0
    if not P.is_homogeneous() or ell < 2:
        raise UnsupportedConfigurationError("expected a homogeneous polynomial of degree >= 2")
    if rho <= 0:
        raise UnsupportedConfigurationError(f"rho must be positive, got {rho}")
    samples = samples or settings.SAMPLES
    rng = rng if rng is not None else np.random.default_rng(settings.SEED)
    directions = _sample_directions(P.dimension, samples, rng)
    points = rho * directions
    grad = np.column_stack([g.evaluate_many(points) for g in gradient(P)])
    ratios = np.linalg.norm(grad, axis=1) / rho ** (ell - 1)
    low = int(np.argmin(ratios))
    return GradientBounds(
        c_low=float(ratios[low]),
        c_high=float(ratios.max()),
        argmin=directions[low].tolist(),
        samples=len(directions),
    )


class FalsifierResult(BaseModel):
    counterexample: Optional[List[float]] = None
    residual: Optional[float] = None
    certificate: Optional[str] = None
    proven: bool = False
    candidates: int = 0
    message: str = ""

    def to_json(self) -> Dict[str, Any]:
        return self.model_dump()


def _separable_even_powers(P: Polynomial) -> Optional[List[Fraction]]:
    """Coefficients c_i when P = Σ c_i y_i^ℓ with ℓ even; otherwise None."""
    ell = P.degree or 0
    if ell < 2 or ell % 2:
        return None
    coeffs = [Fraction(0)] * P.dimension
    for alpha, c in P.terms.items():
        support = [i for i, a in enumerate(alpha) if a]
        if len(support) != 1:
            return None
        coeffs[support[0]] = c
    return coeffs


def parity_certificate(P: Polynomial) -> FalsifierResult:
    """
    Decide non-vanishing of the gradient moment for separable even powers.

    For P = Σ c_i y_i^ℓ the i-th component of ∫∇P(y + X) w dy is c_i times an
    odd polynomial in X_i with positive coefficients, so it vanishes iff
    X_i = 0 or c_i = 0.
    """
    coeffs = _separable_even_powers(P)
    if coeffs is None:
        return FalsifierResult(message="not a separable even-power polynomial")
    missing = [i for i, c in enumerate(coeffs) if c == 0]
    if missing:
        X = [0.0] * P.dimension
        X[missing[0]] = 1.0
        return FalsifierResult(
            counterexample=X,
            residual=float(np.max(np.abs(gradient_moment(P, X)))),
            certificate="parity",
            message=f"coordinate y{missing[0] + 1} is absent; every X along it is a counterexample",
        )
    return FalsifierResult(
        certificate="parity",
        proven=True,
        message="moment vanishes only at X = 0",
    )


def flexibility_falsifier(
    P: Polynomial,
    budget: int = 64,
    rng: Optional[np.random.Generator] = None,
    tolerance: Optional[float] = None,
) -> FalsifierResult:
    """
    Look for X ≠ 0 with ∫ ∇P(y + X)(1 + |y|²)^{−n} dy = 0.

    A coarse grid of random directions and log-spaced radii is ranked by
    |F(X)|/|X|, the best candidates are refined with least squares, and the
    first refined point with |F(X)| below ``tolerance`` is returned. Finding
    nothing is not a proof; separable even powers are decided by
    :func:`parity_certificate` instead.

    Raises:
        UnsupportedConfigurationError: If deg P > n − 2
    """
    n = P.dimension
    tolerance = tolerance if tolerance is not None else settings.FALSIFIER_TOLERANCE
    rng = rng if rng is not None else np.random.default_rng(settings.SEED)
    if P.is_zero:
        X = [1.0] + [0.0] * (n - 1)
        return FalsifierResult(counterexample=X, residual=0.0, message="P = 0")
    if not P.is_homogeneous():
        raise UnsupportedConfigurationError("expected a homogeneous polynomial")
    if (P.degree or 0) > n - 2:
        raise UnsupportedConfigurationError(f"degree must not exceed n - 2 = {n - 2}")

    certificate = parity_certificate(P)
    if certificate.certificate is not None:
        return certificate

    field = gradient_moment_field(P)
    directions = rng.standard_normal((budget, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = np.geomspace(0.1, 10.0, 8)
    grid = (directions[:, None, :] * radii[None, :, None]).reshape(-1, n)
    scores = np.linalg.norm(field.evaluate_many(grid), axis=1) / np.linalg.norm(grid, axis=1)
    order = np.argsort(scores)

    def scaled(X: np.ndarray) -> np.ndarray:
        return field.evaluate(X) / max(float(np.linalg.norm(X)), 1e-12)

    refinements = min(max(budget // 8, 1), len(order))
    for idx in order[:refinements]:
        fit = optimize.least_squares(scaled, grid[idx], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        X = fit.x
        if np.linalg.norm(X) < 1e-6:
            continue
        residual = float(np.max(np.abs(field.evaluate(X))))
        if residual < tolerance:
            logger.info(f"Counterexample found at X={X.tolist()} with residual {residual:.3e}")
            return FalsifierResult(
                counterexample=X.tolist(),
                residual=residual,
                candidates=len(grid),
                message="counterexample found",
            )
    return FalsifierResult(
        candidates=len(grid),
        message="no counterexample found within budget; this is not a proof",
    )


def eta_bound(n: int, ell: int) -> Fraction:
    if ell == n - 2:
        return Fraction(2, 3 * n - 2)
    if ell == n - 3:
        if n <= 6:
            raise UnsupportedConfigurationError(f"ell = n - 3 needs n > 6, got n = {n}")
        return Fraction(n - 6, (n - 3) * (3 * n - 2))
    raise UnsupportedConfigurationError(f"ell must be n - 2 or n - 3, got ell = {ell} for n = {n}")


def eta_admissible(n: int, ell: int, eta: Scalar) -> bool:
    """Strict upper bound on the flexibility exponent for ℓ ∈ {n − 2, n − 3}."""
    bound = eta_bound(n, ell)
    value = Fraction(eta) if isinstance(eta, float) else to_fraction(eta)
    if value < 0:
        raise UnsupportedConfigurationError(f"eta must be non-negative, got {eta}")
    return value < bound


def single_point_constraints(P: Polynomial, X: Sequence[Scalar]) -> List[ViolationReport]:
    """
    Constraints a flexible simple blow-up point forces on P and X.

    P(X) must vanish, and so must the J-multiple of ∫Ξ_h(X, ·) w for every
    1 ≤ h ≤ ℓ − 1, where Ξ_h collects the terms of P(X + z) of degree h in X.
    Hypotheses on P are reported as their own entries and do not stop the
    checks.
    """
    n = P.dimension
    if len(X) != n:
        raise UnsupportedConfigurationError(f"X must have {n} coordinates")
    point = _fraction_list(X)
    ell = P.degree or 0
    reports: List[ViolationReport] = []

    degree_ok = P.is_homogeneous() and ell in (n - 2, n - 3)
    reports.append(
        ViolationReport.build(
            "hypothesis:degree",
            0.0 if degree_ok else 1.0,
            0.0,
            details={"degree": ell, "allowed": [n - 2, n - 3]},
        )
    )
    top = iterated_laplacian(P, h_of(ell)) if ell else P
    reports.append(
        ViolationReport.build(
            "hypothesis:top_laplacian",
            0.0 if top.is_zero else 1.0,
            0.0,
            details={"top_laplacian": top.to_json()},
        )
    )
    if not degree_ok:
        logger.warning(f"single-point constraints requested outside their hypotheses (ell={ell})")

    value = to_fraction(P.evaluate(point))
    reports.append(
        ViolationReport.build("P(X)", float(value), settings.TOL_EXACT, residual_exact=value)
    )
    if P.is_homogeneous() and ell >= 2:
        for h, term in enumerate(shift_expansion(P).at(point), start=1):
            j_multiple = moment_integral(term).j_multiple
            reports.append(
                ViolationReport.build(
                    f"shift_moment_{h}",
                    float(j_multiple),
                    settings.TOL_EXACT,
                    residual_exact=j_multiple,
                    details={"degree_in_X": h},
                )
            )
    return reports


def interference_check(n: int, etas: Sequence[Scalar]) -> ViolationReport:
    """
    Count coincidences (n − 3)η_m = h η_j, j ≠ m, 1 ≤ h ≤ n − 3, over the rationals.

    Raises:
        UnsupportedConfigurationError: If n ≤ 6
    """
    if n <= 6:
        raise UnsupportedConfigurationError(f"interference check needs n > 6, got {n}")
    values = _fraction_list(etas)
    hits: List[Dict[str, Any]] = []
    for m, eta_m in enumerate(values):
        for j, eta_j in enumerate(values):
            if j == m:
                continue
            for h in range(1, n - 2):
                if (n - 3) * eta_m == h * eta_j:
                    hits.append({"m": m, "j": j, "h": h})
    return ViolationReport.build(
        "interference",
        float(len(hits)),
        0.0,
        residual_exact=Fraction(len(hits)),
        details={"violations": hits},
    )


def balance_weight(n: int, k_value: float, scale_ratio: Fraction, eta: Fraction) -> float:
    """[n(n − 2)/(c̃_n K)]^{n/2} · S^{(n−3)(1+η)}."""
    return (n * (n - 2) / k_value) ** (n / 2) * float(scale_ratio) ** ((n - 3) * (1 + float(eta)))


def multi_point_balance(config: BlowupConfiguration) -> ViolationReport:
    """
    Weighted balance of ⟨Ŷ_m, ∇P_m(X_m)⟩ inside each group of equal η.

    The pairings are exact rationals; only the weights are floats. A group
    passes when |Σ w p| ≤ TOL_FLOAT · Σ|w p|, so a group whose only nonzero
    pairing is unmatched always fails.
    """
    n = config.n
    if n <= 6:
        raise UnsupportedConfigurationError(f"multi-point balance needs n > 6, got {n}")
    groups: Dict[Fraction, List[int]] = {}
    for m, eta in enumerate(config.flex_exponents):
        groups.setdefault(eta, []).append(m)

    group_reports = []
    worst = 0.0
    for eta, members in sorted(groups.items()):
        pairings = [
            to_fraction(
                directional_pairing(config.points[m], config.taylor_polys[m]).evaluate(
                    config.flex_vectors[m]
                )
            )
            for m in members
        ]
        terms = [
            balance_weight(n, config.k_values[m], config.scale_ratios[m], eta) * float(p)
            for m, p in zip(members, pairings)
        ]
        total = math.fsum(terms)
        scale = math.fsum(abs(t) for t in terms)
        residual = abs(total) / scale if scale > 0 else 0.0
        worst = max(worst, residual)
        group_reports.append(
            {
                "eta": str(eta),
                "members": members,
                "pairings": [str(p) for p in pairings],
                "sum": total,
                "relative_residual": residual,
            }
        )
    return ViolationReport.build(
        "multi_point_balance",
        worst,
        settings.TOL_FLOAT,
        details={"groups": group_reports},
    )


def _pohozaev_field(
    v: AnalyticField, kappa: AnalyticField, points: np.ndarray
) -> np.ndarray:
    n = v.n
    p = 2 * n / (n - 2)
    value = v.value(points)
    grad = v.gradient(points)
    radial = np.einsum("ij,ij->i", points, grad)
    grad_sq = np.einsum("ij,ij->i", grad, grad)
    return (
        (n - 2) / 2 * value[:, None] * grad
        - grad_sq[:, None] * points / 2
        + radial[:, None] * grad
        + (n - 2) / (2 * n) * (kappa.value(points) * value**p)[:, None] * points
    )


def pohozaev_sides(
    v: AnalyticField,
    kappa: AnalyticField,
    rho: float,
    radial_nodes: int = 64,
    sphere_order: Optional[int] = None,
) -> Tuple[float, float]:
    """
    Volume and flux sides of the Pohozaev identity on the ball of radius ρ.

    Returns ∫⟨y, ∇κ⟩ v^{2n/(n−2)} and (2n/(n−2)) ∮⟨V, ν⟩, where κ = c̃_n K
    and v solves −Δv = κ v^{(n+2)/(n−2)} for the identity to hold.
    """
    n = v.n
    p = 2 * n / (n - 2)
    nodes, weights = sphere_rule(n, sphere_order)
    t, w = _legendre_rule(radial_nodes)
    radii = rho * (t + 1) / 2
    radial_weights = rho / 2 * w * radii ** (n - 1)

    volume = 0.0
    for r, rw in zip(radii, radial_weights):
        shell = r * nodes
        grad_kappa = kappa.gradient(shell)
        integrand = np.einsum("ij,ij->i", shell, grad_kappa) * v.value(shell) ** p
        volume += rw * float(weights @ integrand)

    boundary = rho * nodes
    field = _pohozaev_field(v, kappa, boundary)
    flux = rho ** (n - 1) * float(weights @ np.einsum("ij,ij->i", field, nodes))
    return volume, p * flux


def pohozaev_volume_vs_surface(
    v: AnalyticField,
    curvature: AnalyticField,
    rho: float,
    radial_nodes: int = 64,
    sphere_order: Optional[int] = None,
) -> ViolationReport:
    """
    Compare the two sides of the Pohozaev identity.

    Passes when |L − R| ≤ max(TOL_QUAD · max(|L|, |R|), TOL_ABS). ``curvature``
    is κ = c̃_n K; a :class:`CurvatureModel` built from P, or any analytic field.
    """
    if rho <= 0:
        raise UnsupportedConfigurationError(f"rho must be positive, got {rho}")
    if np.any(v.value(rho * sphere_rule(v.n, sphere_order)[0]) <= 0):
        raise UnsupportedConfigurationError("v must be positive on the sphere")
    volume, flux = pohozaev_sides(v, curvature, rho, radial_nodes, sphere_order)
    gap = abs(volume - flux)
    tolerance = max(settings.TOL_QUAD * max(abs(volume), abs(flux)), settings.TOL_ABS)
    details = {"volume": volume, "flux": flux, "rho": rho}
    if isinstance(curvature, CurvatureModel):
        details["flux_over_cn"] = flux / conformal_constant(v.n)
    return ViolationReport.build("pohozaev", gap, tolerance, details=details)
