"""Analytic profiles near a simple blow-up point.

Every field here is evaluated on arrays of points of shape (m, n) and exposes
its value, gradient and Laplacian in closed form, so identities can be checked
without differencing. Finite-difference helpers are provided as an independent
oracle.

Coordinates: ``y`` is the original variable, ``Y = (y − ξ)/λ`` the rescaled one.
The refined profile is

    v̂(y) = A_{λ,ξ}(y) + λ^{ℓ+1} Γ(Y) (λ/(λ² + |y − ξ|²))^{n/2} + O_H(y)

and in the rescaled picture V(Y) = λ^{(n−2)/2} v̂(ξ + λY) equals

    A₁(Y) + λ^ℓ Π(Y) + λ^{n−2} [H(Y) − h_o (1 − λ R̃(Y)/c)].
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial as Poly1D
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from bubble_correction.config.settings import settings
from bubble_correction.integrals import sphere_area, sphere_rule
from bubble_correction.polynomial import (
    Polynomial,
    euler_operator,
    gradient,
    laplacian,
)
from bubble_correction.reduction import apply_L
from bubble_correction.utils.parallel import map_chunks

logger = logging.getLogger(__name__)

FD_STEP = 1e-3


class ProfileError(Exception):
    """Base exception for profile construction and evaluation."""


class PoleSingularityError(ProfileError, ValueError):
    """Evaluation at a pole of a field (projection pole or harmonic point)."""


class GeometryError(ProfileError, ValueError):
    """Points or radii violate the geometry a construction needs."""


class UnverifiedCorrectionError(ProfileError):
    """The supplied Γ does not solve L(Γ) = P exactly."""


def conformal_constant(n: int) -> float:
    """c̃_n = 4(n − 1)/(n − 2)."""
    return 4.0 * (n - 1) / (n - 2)


def _as_points(points: Any, n: int) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != n:
        raise GeometryError(f"points must have {n} columns, got {pts.shape[1]}")
    return pts


class AnalyticField(ABC):
    """A scalar field on R^n with closed-form derivatives."""

    n: int

    @abstractmethod
    def value(self, points: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def gradient(self, points: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def laplacian(self, points: np.ndarray) -> np.ndarray:
        pass

    def __call__(self, point: Sequence[float]) -> float:
        return float(self.value(_as_points(point, self.n))[0])


def finite_difference_gradient(
    func: Callable[[np.ndarray], np.ndarray], points: np.ndarray, h: float = FD_STEP
) -> np.ndarray:
    """Fourth-order central differences, one column per coordinate."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty_like(pts)
    for i in range(pts.shape[1]):
        e = np.zeros(pts.shape[1])
        e[i] = h
        out[:, i] = (
            -func(pts + 2 * e) + 8 * func(pts + e) - 8 * func(pts - e) + func(pts - 2 * e)
        ) / (12 * h)
    return out


def finite_difference_laplacian(
    func: Callable[[np.ndarray], np.ndarray], points: np.ndarray, h: float = FD_STEP
) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    center = func(pts)
    out = np.zeros(pts.shape[0])
    for i in range(pts.shape[1]):
        e = np.zeros(pts.shape[1])
        e[i] = h
        out += (
            -func(pts + 2 * e)
            + 16 * func(pts + e)
            - 30 * center
            + 16 * func(pts - e)
            - func(pts - 2 * e)
        ) / (12 * h * h)
    return out


class BubbleParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=3)
    eps: float = Field(..., gt=0)
    center: List[float]

    @model_validator(mode="after")
    def validate_center(self) -> "BubbleParams":
        if len(self.center) != self.n:
            raise ValueError(f"center must have {self.n} coordinates")
        return self


class Bubble(AnalyticField):
    """A_{ε,ζ}(y) = (ε/(ε² + |y − ζ|²))^{(n−2)/2}."""

    def __init__(self, params: BubbleParams):
        self.params = params
        self.n = params.n
        self.eps = params.eps
        self.center = np.asarray(params.center, dtype=float)

    def _parts(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        d = _as_points(points, self.n) - self.center
        denom = self.eps**2 + np.einsum("ij,ij->i", d, d)
        return d, denom, (self.eps / denom) ** ((self.n - 2) / 2)

    def value(self, points: np.ndarray) -> np.ndarray:
        return self._parts(points)[2]

    def gradient(self, points: np.ndarray) -> np.ndarray:
        d, denom, a = self._parts(points)
        return -(self.n - 2) * (a / denom)[:, None] * d

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        """ΔA = −n(n − 2) A^{(n+2)/(n−2)}, valid for every ε and ζ."""
        a = self.value(points)
        return -self.n * (self.n - 2) * a ** ((self.n + 2) / (self.n - 2))

    @property
    def peak(self) -> float:
        return self.eps ** (-(self.n - 2) / 2)


def bubble(params: BubbleParams) -> Bubble:
    return Bubble(params)


def unit_bubble(n: int) -> Bubble:
    """A₁ = A_{1,0}."""
    return Bubble(BubbleParams(n=n, eps=1.0, center=[0.0] * n))


def stereographic_projection(x: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """S^n → R^n from the north pole: y = x'/(1 − x_{n+1})."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    gap = 1.0 - pts[:, -1]
    if np.any(np.abs(gap) < tol):
        raise PoleSingularityError("stereographic projection is singular at the north pole")
    return pts[:, :-1] / gap[:, None]


def inverse_stereographic(y: np.ndarray) -> np.ndarray:
    """x = (2y, |y|² − 1)/(1 + |y|²)."""
    pts = np.atleast_2d(np.asarray(y, dtype=float))
    r2 = np.einsum("ij,ij->i", pts, pts)
    return np.hstack([2 * pts, (r2 - 1)[:, None]]) / (1 + r2)[:, None]


def _conformal_factor(y: np.ndarray, n: int) -> np.ndarray:
    return (2.0 / (1.0 + np.einsum("ij,ij->i", y, y))) ** ((n - 2) / 2)


def stereographic_pair(
    func: Callable[[np.ndarray], np.ndarray],
    n: int,
    source: Literal["sphere", "plane"] = "sphere",
) -> Callable[[np.ndarray], np.ndarray]:
    """
    Conformal partner of a function under stereographic projection.

    From the sphere: v(y) = u(P⁻¹(y)) (2/(1 + |y|²))^{(n−2)/2}.
    From the plane: u(x) = v(P(x)) ((1 + |y|²)/2)^{(n−2)/2} with y = P(x).
    """
    if source == "sphere":

        def to_plane(y: np.ndarray) -> np.ndarray:
            pts = _as_points(y, n)
            return func(inverse_stereographic(pts)) * _conformal_factor(pts, n)

        return to_plane

    def to_sphere(x: np.ndarray) -> np.ndarray:
        y = stereographic_projection(x)
        return func(y) / _conformal_factor(y, n)

    return to_sphere


class CurvatureModel(AnalyticField):
    """
    κ(y) = c̃_n K(y) = n(n − 2) − P(y) + R(y) near the blow-up point.

    The remainder R, when given, only has terms of degree above deg P. With
    R = 0 the radial derivative ⟨y, ∇κ⟩ equals −ℓ P exactly.
    """

    def __init__(self, P: Polynomial, remainder: Optional[Polynomial] = None):
        if P.is_zero or not P.is_homogeneous():
            raise GeometryError("P must be a nonzero homogeneous polynomial")
        ell = P.degree or 0
        if ell < 2:
            raise GeometryError(f"P must have degree at least 2, got {ell}")
        n = P.dimension
        remainder = remainder if remainder is not None else Polynomial.zero(n)
        if remainder.dimension != n:
            raise GeometryError("remainder dimension does not match P")
        if any(sum(alpha) <= ell for alpha in remainder.terms):
            raise GeometryError(f"remainder terms must have degree above {ell}")
        self.n = n
        self.ell = ell
        self.P = P
        self.remainder = remainder
        self.kappa = Polynomial.constant(n, n * (n - 2)) - P + remainder
        self._gradient = gradient(self.kappa)
        self._laplacian = laplacian(self.kappa)

    @property
    def radial_derivative_polynomial(self) -> Polynomial:
        """⟨y, ∇κ⟩ as an exact polynomial."""
        return euler_operator(self.kappa)

    def value(self, points: np.ndarray) -> np.ndarray:
        return self.kappa.evaluate_many(_as_points(points, self.n))

    def gradient(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points, self.n)
        return np.column_stack([g.evaluate_many(pts) for g in self._gradient])

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        return self._laplacian.evaluate_many(_as_points(points, self.n))

    def radial_derivative(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points, self.n)
        return np.einsum("ij,ij->i", pts, self.gradient(pts))

    def curvature(self, points: np.ndarray) -> np.ndarray:
        """K itself, κ/c̃_n."""
        return self.value(points) / conformal_constant(self.n)


def synth_K(P: Polynomial, remainder: Optional[Polynomial] = None) -> CurvatureModel:
    return CurvatureModel(P, remainder)


class ConstantCurvature(AnalyticField):
    """κ ≡ n(n − 2) unless another constant is given; bubbles solve the equation exactly."""

    def __init__(self, n: int, value: Optional[float] = None):
        self.n = n
        self.constant = float(n * (n - 2) if value is None else value)

    def value(self, points: np.ndarray) -> np.ndarray:
        return np.full(_as_points(points, self.n).shape[0], self.constant)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return np.zeros_like(_as_points(points, self.n))

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        return np.zeros(_as_points(points, self.n).shape[0])


class CorrectionField(AnalyticField):
    """Π(Y) = Γ(Y) (1 + |Y|²)^{−n/2}."""

    def __init__(self, gamma: Polynomial):
        self.n = gamma.dimension
        self.gamma = gamma
        self._gradient = gradient(gamma)
        self._laplacian = laplacian(gamma)

    def _weight(self, pts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        one_plus = 1.0 + np.einsum("ij,ij->i", pts, pts)
        return one_plus, one_plus ** (-self.n / 2)

    def value(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points, self.n)
        return self.gamma.evaluate_many(pts) * self._weight(pts)[1]

    def gradient(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points, self.n)
        one_plus, q = self._weight(pts)
        grad_gamma = np.column_stack([g.evaluate_many(pts) for g in self._gradient])
        grad_q = -self.n * (q / one_plus)[:, None] * pts
        return grad_gamma * q[:, None] + self.gamma.evaluate_many(pts)[:, None] * grad_q

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points, self.n)
        n = self.n
        one_plus, q = self._weight(pts)
        rho = one_plus - 1.0
        grad_gamma = np.column_stack([g.evaluate_many(pts) for g in self._gradient])
        grad_q = -n * (q / one_plus)[:, None] * pts
        lap_q = -n * q / one_plus**2 * (n - 2 * rho)
        return (
            self._laplacian.evaluate_many(pts) * q
            + 2 * np.einsum("ij,ij->i", grad_gamma, grad_q)
            + self.gamma.evaluate_many(pts) * lap_q
        )


def pi_eval(gamma: Polynomial, n: Optional[int] = None) -> CorrectionField:
    if n is not None and n != gamma.dimension:
        raise GeometryError(f"gamma has dimension {gamma.dimension}, expected {n}")
    return CorrectionField(gamma)


class ResidualReport(BaseModel):
    """Sampled residual statistics of a float identity."""

    samples: int
    max_abs: float
    mean_abs: float
    slopes: Dict[str, float] = Field(default_factory=dict)
    details: Dict[str, Any] = Field(default_factory=dict)
    tolerance: Optional[float] = None
    passed: Optional[bool] = None

    @model_validator(mode="after")
    def validate_verdict(self) -> "ResidualReport":
        if self.tolerance is not None and self.passed is None:
            self.passed = self.max_abs <= self.tolerance
        return self

    def to_json(self) -> Dict[str, Any]:
        return self.model_dump()


def _sample_ball(rng: np.random.Generator, samples: int, n: int, radius: float) -> np.ndarray:
    directions = rng.standard_normal((samples, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.random(samples) ** (1.0 / n)
    return directions * radii[:, None]


def linearized_residual(
    gamma: Polynomial,
    P: Polynomial,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    radius: float = 3.0,
) -> ResidualReport:
    """
    ΔΠ + n(n + 2) A₁^{4/(n−2)} Π − P A₁^{(n+2)/(n−2)} at random points.

    This is the float shadow of L(Γ) = P; Γ must solve it exactly.

    Raises:
        UnverifiedCorrectionError: If apply_L(Γ) ≠ P
    """
    if gamma.dimension != P.dimension:
        raise GeometryError("gamma and P must share a dimension")
    if apply_L(gamma) != P:
        raise UnverifiedCorrectionError("gamma does not satisfy L(gamma) = P exactly")
    n = gamma.dimension
    samples = samples or settings.SAMPLES
    rng = rng if rng is not None else np.random.default_rng(settings.SEED)
    points = _sample_ball(rng, samples, n, radius)
    field = CorrectionField(gamma)

    def residual(chunk: np.ndarray) -> np.ndarray:
        a1 = 1.0 / (1.0 + np.einsum("ij,ij->i", chunk, chunk))
        return (
            field.laplacian(chunk)
            + n * (n + 2) * a1**2 * field.value(chunk)
            - P.evaluate_many(chunk) * a1 ** ((n + 2) / 2)
        )

    values = np.abs(map_chunks(residual, points))
    return ResidualReport(
        samples=samples,
        max_abs=float(values.max()),
        mean_abs=float(values.mean()),
        details={"radius": radius},
    )


class HarmonicTail(AnalyticField):
    """H(Y) = Σ_j 𝒜_j |λY − Ŷ_j|^{−(n−2)}; harmonic away from the points Ŷ_j/λ."""

    def __init__(self, points: Sequence[Sequence[float]], weights: Sequence[float], lam: float):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.weights = np.asarray(weights, dtype=float)
        self.n = self.points.shape[1]
        self.lam = float(lam)
        if self.n < 3:
            raise GeometryError("harmonic tail needs n >= 3")
        if len(self.weights) != len(self.points):
            raise GeometryError("one weight per harmonic point is required")
        if np.any(self.weights <= 0):
            raise GeometryError("harmonic weights must be positive")
        if np.any(np.linalg.norm(self.points, axis=1) == 0):
            raise GeometryError("harmonic points must be away from the origin")
        if self.lam <= 0:
            raise GeometryError("lambda must be positive")

    def _offsets(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pts = _as_points(points, self.n)
        d = self.lam * pts[:, None, :] - self.points[None, :, :]
        r = np.linalg.norm(d, axis=2)
        if np.any(r == 0):
            raise PoleSingularityError("harmonic tail evaluated at one of its points")
        return d, r

    def value(self, points: np.ndarray) -> np.ndarray:
        _, r = self._offsets(points)
        return (self.weights * r ** (2 - self.n)).sum(axis=1)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        d, r = self._offsets(points)
        coeff = -(self.n - 2) * self.lam * self.weights * r ** (-self.n)
        return np.einsum("mj,mji->mi", coeff, d)

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        self._offsets(points)
        return np.zeros(_as_points(points, self.n).shape[0])

    @property
    def h_o(self) -> float:
        return float(self.value(np.zeros((1, self.n)))[0])

    @property
    def gradient_at_origin(self) -> np.ndarray:
        """(n − 2) λ Σ 𝒜_j Ŷ_j/|Ŷ_j|^n."""
        return self.gradient(np.zeros((1, self.n)))[0]


def harmonic_tail(
    points: Sequence[Sequence[float]], weights: Sequence[float], lam: float
) -> HarmonicTail:
    return HarmonicTail(points, weights, lam)


class InterpolationRadius(AnalyticField):
    """
    C² radial function equal to |Y| for |Y| ≥ 1 and flat to second order at 0.

    On [0, 1] it is the quintic 6r³ − 8r⁴ + 3r⁵, which matches r in value,
    first and second derivative at r = 1.
    """

    profile = Poly1D([0.0, 0.0, 0.0, 6.0, -8.0, 3.0])

    def __init__(self, n: int):
        self.n = n
        self._d1 = self.profile.deriv()
        self._d2 = self.profile.deriv(2)

    def _radius(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pts = _as_points(points, self.n)
        return pts, np.linalg.norm(pts, axis=1)

    def value(self, points: np.ndarray) -> np.ndarray:
        _, r = self._radius(points)
        return np.where(r >= 1.0, r, self.profile(np.minimum(r, 1.0)))

    def derivative(self, r: np.ndarray) -> np.ndarray:
        return np.where(r >= 1.0, 1.0, self._d1(np.minimum(r, 1.0)))

    def gradient(self, points: np.ndarray) -> np.ndarray:
        pts, r = self._radius(points)
        safe = np.where(r > 0, r, 1.0)
        return (self.derivative(r) / safe)[:, None] * pts

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        """f'' + (n − 1) f'/r, with f'/r extended by 0 at the origin."""
        _, r = self._radius(points)
        inner = np.minimum(r, 1.0)
        safe = np.where(r > 0, r, 1.0)
        second = np.where(r >= 1.0, 0.0, self._d2(inner))
        first_over_r = np.where(r > 0, self.derivative(r) / safe, 0.0)
        return second + (self.n - 1) * first_over_r


def interpolation_R(n: int) -> InterpolationRadius:
    return InterpolationRadius(n)


class RefinedProfileSpec(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int = Field(..., ge=3)
    ell: int = Field(..., ge=2)
    lam: float = Field(..., gt=0)
    xi: List[float]
    gamma: Polynomial
    harmonic_points: List[List[float]] = Field(default_factory=list)
    harmonic_weights: List[float] = Field(default_factory=list)
    joint_radius_c: float = Field(..., gt=0)

    @field_validator("harmonic_weights")
    @classmethod
    def validate_weights(cls, v: List[float]) -> List[float]:
        if any(w <= 0 for w in v):
            raise ValueError("harmonic weights must be positive")
        return v

    @model_validator(mode="after")
    def validate_geometry(self) -> "RefinedProfileSpec":
        if self.ell > self.n - 2:
            raise ValueError(f"ell must not exceed n - 2 (n={self.n}, ell={self.ell})")
        if len(self.xi) != self.n:
            raise ValueError(f"xi must have {self.n} coordinates")
        if self.gamma.dimension != self.n:
            raise ValueError("gamma dimension does not match n")
        if len(self.harmonic_points) != len(self.harmonic_weights):
            raise ValueError("one weight per harmonic point is required")
        for point in self.harmonic_points:
            if len(point) != self.n:
                raise ValueError(f"harmonic points must have {self.n} coordinates")
            if float(np.linalg.norm(point)) < 2 * self.joint_radius_c:
                raise ValueError(
                    f"harmonic point {point} lies inside twice the joint radius"
                )
        return self

    @property
    def h_o(self) -> float:
        """Σ 𝒜_j |Ŷ_j|^{−(n−2)}."""
        return math.fsum(
            w * float(np.linalg.norm(p)) ** (2 - self.n)
            for p, w in zip(self.harmonic_points, self.harmonic_weights)
        )


class _ZeroTail(AnalyticField):
    def __init__(self, n: int):
        self.n = n

    def value(self, points: np.ndarray) -> np.ndarray:
        return np.zeros(_as_points(points, self.n).shape[0])

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return np.zeros_like(_as_points(points, self.n))

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        return self.value(points)

    h_o = 0.0

    @property
    def gradient_at_origin(self) -> np.ndarray:
        return np.zeros(self.n)


Component = Literal["bubble", "correction", "harmonic_group", "total"]


class RefinedProfile:
    """
    The assembled profile v̂ with each addend available separately.

    ``tilt`` subtracts ⟨g, Y⟩ A₁(Y) in the rescaled picture; the manufactured
    profile uses g = λ^{n−2} ∇H(0).
    """

    def __init__(self, spec: RefinedProfileSpec, tilt: Optional[Sequence[float]] = None):
        self.spec = spec
        self.n = spec.n
        self.ell = spec.ell
        self.lam = spec.lam
        self.c = spec.joint_radius_c
        self.xi = np.asarray(spec.xi, dtype=float)
        self.bubble = Bubble(BubbleParams(n=spec.n, eps=spec.lam, center=spec.xi))
        self.unit_bubble = unit_bubble(spec.n)
        self.correction = CorrectionField(spec.gamma)
        self.tail: AnalyticField = (
            HarmonicTail(spec.harmonic_points, spec.harmonic_weights, spec.lam)
            if spec.harmonic_points
            else _ZeroTail(spec.n)
        )
        self.radius = InterpolationRadius(spec.n)
        self.tilt = np.zeros(spec.n) if tilt is None else np.asarray(tilt, dtype=float)

    @property
    def h_o(self) -> float:
        return self.tail.h_o  # type: ignore[attr-defined]

    def to_scaled(self, y: np.ndarray) -> np.ndarray:
        return (_as_points(y, self.n) - self.xi) / self.lam

    def from_scaled(self, Y: np.ndarray) -> np.ndarray:
        return self.xi + self.lam * _as_points(Y, self.n)

    # Rescaled picture

    def scaled_harmonic_group(self, Y: np.ndarray) -> np.ndarray:
        """λ^{n−2} [H(Y) − h_o (1 − λ R̃(Y)/c)]."""
        Y = _as_points(Y, self.n)
        joint = 1.0 - self.lam * self.radius.value(Y) / self.c
        return self.lam ** (self.n - 2) * (self.tail.value(Y) - self.h_o * joint)

    def scaled_components(self, Y: np.ndarray) -> Dict[str, np.ndarray]:
        Y = _as_points(Y, self.n)
        a1 = self.unit_bubble.value(Y)
        parts = {
            "bubble": a1,
            "correction": self.lam**self.ell * self.correction.value(Y),
            "harmonic_group": self.scaled_harmonic_group(Y),
            "tilt": -(Y @ self.tilt) * a1,
        }
        parts["total"] = parts["bubble"] + parts["correction"] + parts["harmonic_group"] + parts["tilt"]
        return parts

    def scaled_value(self, Y: np.ndarray) -> np.ndarray:
        """V(Y) = λ^{(n−2)/2} v̂(ξ + λY), computed from the original variable."""
        return self.lam ** ((self.n - 2) / 2) * self.value(self.from_scaled(Y))

    # Original picture

    def correction_term(
        self, y: np.ndarray, form: Literal["bracket", "bubble_power"] = "bracket"
    ) -> np.ndarray:
        """
        λ^{ℓ+1} Γ(Y) (λ/(λ² + |y − ξ|²))^{n/2}.

        ``form="bubble_power"`` evaluates the same term as λ^{ℓ+1} Γ(Y) A_{λ,ξ}^{n/(n−2)}.
        """
        y = _as_points(y, self.n)
        Y = self.to_scaled(y)
        gamma = self.spec.gamma.evaluate_many(Y)
        if form == "bubble_power":
            factor = self.bubble.value(y) ** (self.n / (self.n - 2))
        else:
            d = y - self.xi
            factor = (self.lam / (self.lam**2 + np.einsum("ij,ij->i", d, d))) ** (self.n / 2)
        return self.lam ** (self.ell + 1) * gamma * factor

    def harmonic_group(self, y: np.ndarray) -> np.ndarray:
        """λ^{(n−2)/2} [Σ 𝒜_j |y − ξ − Ŷ_j|^{−(n−2)} − h_o + λ h_o R̃(Y)/c]."""
        return self.lam ** (-(self.n - 2) / 2) * self.scaled_harmonic_group(self.to_scaled(y))

    def tilt_term(self, y: np.ndarray) -> np.ndarray:
        Y = self.to_scaled(y)
        return -self.lam ** (-(self.n - 2) / 2) * (Y @ self.tilt) * self.unit_bubble.value(Y)

    def components(self, y: np.ndarray) -> Dict[str, np.ndarray]:
        y = _as_points(y, self.n)
        parts = {
            "bubble": self.bubble.value(y),
            "correction": self.correction_term(y),
            "harmonic_group": self.harmonic_group(y),
        }
        total = parts["bubble"] + parts["correction"] + parts["harmonic_group"]
        if np.any(self.tilt):
            total = total + self.tilt_term(y)
        parts["total"] = total
        return parts

    def value(self, y: np.ndarray) -> np.ndarray:
        return self.components(y)["total"]

    def __call__(self, y: Sequence[float]) -> float:
        return float(self.value(_as_points(y, self.n))[0])

    def joint_residuals(self, directions: np.ndarray) -> Tuple[float, float]:
        """
        Deviation of the harmonic group from 0 at Y = 0 and from λ^{n−2} H on |Y| = c/λ.
        """
        at_origin = float(abs(self.scaled_harmonic_group(np.zeros((1, self.n)))[0]))
        unit = directions / np.linalg.norm(directions, axis=1, keepdims=True)
        Y = unit * (self.c / self.lam)
        on_sphere = self.scaled_harmonic_group(Y) - self.lam ** (self.n - 2) * self.tail.value(Y)
        return at_origin, float(np.max(np.abs(on_sphere)))

    def pi_deviation(self, Y: np.ndarray) -> np.ndarray:
        """D(Y) = V(Y) − A₁(Y) − λ^ℓ Π(Y) − λ^{n−2}[H(Y) − h_o(1 − λ R̃(Y)/c)]."""
        Y = _as_points(Y, self.n)
        return (
            self.scaled_value(Y)
            - self.unit_bubble.value(Y)
            - self.lam**self.ell * self.correction.value(Y)
            - self.scaled_harmonic_group(Y)
        )


def refined_profile(spec: RefinedProfileSpec) -> RefinedProfile:
    return RefinedProfile(spec)


def manufactured_profile(spec: RefinedProfileSpec) -> RefinedProfile:
    """
    v̂ tilted so that its deviation has gradient −λ^{n−2} ∇H(0) at the origin.

    The deviation then vanishes at 0 with first derivative of order λ^{n−1}.
    """
    base = RefinedProfile(spec)
    g = spec.lam ** (spec.n - 2) * base.tail.gradient_at_origin  # type: ignore[attr-defined]
    return RefinedProfile(spec, tilt=g)


def deviation_gradient_at_origin(profile: RefinedProfile, h: float = FD_STEP) -> np.ndarray:
    return finite_difference_gradient(profile.pi_deviation, np.zeros((1, profile.n)), h)[0]


def mezzo_scale_constant(
    profile: RefinedProfile,
    c1: float,
    c2: float,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """sup |V − A₁ − λ^{n−2} H| / λ^{n−2} over c1/λ ≤ |Y| ≤ c2/λ."""
    if not 0 < c1 < c2:
        raise GeometryError(f"need 0 < c1 < c2, got {c1}, {c2}")
    n = profile.n
    lam = profile.lam
    samples = samples or settings.SAMPLES
    rng = rng if rng is not None else np.random.default_rng(settings.SEED)
    directions = rng.standard_normal((samples, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = rng.uniform(c1 / lam, c2 / lam, samples)
    Y = directions * radii[:, None]
    gap = (
        profile.scaled_value(Y)
        - profile.unit_bubble.value(Y)
        - lam ** (n - 2) * profile.tail.value(Y)
    )
    return float(np.max(np.abs(gap)) / lam ** (n - 2))


class GreenBoundReport(BaseModel):
    delta: float
    green_constant: float
    green_bound: float
    poisson_constant: float
    poisson_bound: float

    @property
    def passed(self) -> bool:
        return self.green_constant <= self.green_bound and self.poisson_constant <= self.poisson_bound


class BallGreenFunction:
    """
    Dirichlet Green's function and Poisson kernel of the ball of radius a.

    G(y, ξ) = −[|y − ξ|^{2−n} − (a/|ξ|)^{n−2} |y − ξ*|^{2−n}] / ((n − 2)|S^{n−1}|)
    with ξ* = a²ξ/|ξ|², so that ΔG = δ_ξ and G = 0 on the sphere.
    """

    def __init__(self, n: int, a: float):
        if n < 3:
            raise GeometryError("Green's function needs n >= 3")
        if a <= 0:
            raise GeometryError(f"radius must be positive, got {a}")
        self.n = n
        self.a = float(a)
        self.area = sphere_area(n)

    def reflection(self, xi: Sequence[float]) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        norm2 = float(xi @ xi)
        if norm2 == 0:
            raise GeometryError("the center has no reflection")
        return self.a**2 * xi / norm2

    def _check_inside(self, xi: np.ndarray) -> None:
        if np.linalg.norm(xi) >= self.a:
            raise GeometryError("xi must lie strictly inside the ball")

    def green(self, y: np.ndarray, xi: Sequence[float]) -> np.ndarray:
        y = _as_points(y, self.n)
        xi = np.asarray(xi, dtype=float)
        self._check_inside(xi)
        r = np.linalg.norm(y - xi, axis=1)
        if np.any(r == 0):
            raise GeometryError("y must differ from xi")
        norm = float(np.linalg.norm(xi))
        if norm == 0:
            image = np.full_like(r, self.a ** (2 - self.n))
        else:
            star = self.reflection(xi)
            image = (self.a / norm) ** (self.n - 2) * np.linalg.norm(y - star, axis=1) ** (2 - self.n)
        return -(r ** (2 - self.n) - image) / ((self.n - 2) * self.area)

    def poisson(self, y: np.ndarray, xi: Sequence[float]) -> np.ndarray:
        """(a² − |ξ|²)/(a |S^{n−1}| |y − ξ|^n) for |y| = a."""
        y = _as_points(y, self.n)
        xi = np.asarray(xi, dtype=float)
        self._check_inside(xi)
        r = np.linalg.norm(y - xi, axis=1)
        return (self.a**2 - xi @ xi) / (self.a * self.area * r**self.n)

    def dirichlet_residual(self, xi: Sequence[float], points: np.ndarray) -> float:
        """max |G(y, ξ)| over ``points`` pushed onto the boundary sphere."""
        pts = _as_points(points, self.n)
        boundary = self.a * pts / np.linalg.norm(pts, axis=1, keepdims=True)
        return float(np.max(np.abs(self.green(boundary, xi))))

    def poisson_normalization(self, xi: Sequence[float], order: Optional[int] = None) -> float:
        nodes, weights = sphere_rule(self.n, order)
        return float(self.a ** (self.n - 1) * weights @ self.poisson(self.a * nodes, xi))

    def predicted_constants(self) -> Tuple[float, float, float]:
        n = self.n
        c1 = 1.0 / ((n - 2) * self.area)
        c2 = 2.0 ** (n - 2) / ((n - 2) * self.area)
        c3 = 1.0 / self.area
        return c1, c2, c3

    def bound_check(
        self, delta: float, samples: Optional[int] = None, rng: Optional[np.random.Generator] = None
    ) -> GreenBoundReport:
        """
        Measure sup |G| |y − ξ|^{n−2} and sup P a^{n−1} over |ξ| ≤ (1 − δ)a.

        The bounds are C₁ + C₂/δ^{n−2} and C₃/δ^n.
        """
        if not 0 < delta < 1:
            raise GeometryError(f"delta must lie in (0, 1), got {delta}")
        n = self.n
        samples = samples or settings.SAMPLES
        rng = rng if rng is not None else np.random.default_rng(settings.SEED)
        centers = _sample_ball(rng, samples, n, (1 - delta) * self.a)
        inside = _sample_ball(rng, samples, n, self.a)
        boundary = rng.standard_normal((samples, n))
        boundary = self.a * boundary / np.linalg.norm(boundary, axis=1, keepdims=True)

        green_ratio = 0.0
        poisson_ratio = 0.0
        for xi, y, z in zip(centers, inside, boundary):
            r = float(np.linalg.norm(y - xi))
            if r == 0:
                continue
            green_ratio = max(green_ratio, float(abs(self.green(y, xi)[0])) * r ** (n - 2))
            poisson_ratio = max(poisson_ratio, float(self.poisson(z, xi)[0]) * self.a ** (n - 1))
        c1, c2, c3 = self.predicted_constants()
        return GreenBoundReport(
            delta=delta,
            green_constant=green_ratio,
            green_bound=c1 + c2 / delta ** (n - 2),
            poisson_constant=poisson_ratio,
            poisson_bound=c3 / delta**n,
        )


def greens_ball(a: float, n: int) -> BallGreenFunction:
    return BallGreenFunction(n, a)


class RescaledAverage(BaseModel):
    radii: List[float]
    averages: List[float]
    t: List[float]
    critical_points: int


def rescaled_average(
    v: Callable[[np.ndarray], np.ndarray],
    xi: Sequence[float],
    radii: Sequence[float],
    order: Optional[int] = None,
) -> RescaledAverage:
    """
    w̄(r) = r^{(n−2)/2} · (average of v over the sphere of radius r about ξ).

    Critical points are counted as sign changes of the discrete derivative of w̄
    along the given radii, which should be increasing.
    """
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise GeometryError("radii must be positive and increasing")
    nodes, weights = sphere_rule(n, order)
    area = weights.sum()
    averages = []
    for r in radii:
        values = v(xi + r * nodes)
        if np.any(values <= 0):
            raise GeometryError(f"profile is not positive on the sphere of radius {r}")
        averages.append(float(weights @ values) / area)
    w_bar = radii ** ((n - 2) / 2) * np.asarray(averages)
    slope = np.sign(np.diff(w_bar))
    slope = slope[slope != 0]
    changes = int(np.count_nonzero(slope[1:] != slope[:-1]))
    return RescaledAverage(
        radii=radii.tolist(),
        averages=w_bar.tolist(),
        t=(-np.log(radii)).tolist(),
        critical_points=changes,
    )


def bubble_cosh_profile(n: int, eps: float, t: np.ndarray) -> np.ndarray:
    """Rescaled average of A_{ε,ξ} about its own center: (2 cosh(t + log ε))^{−(n−2)/2}, t = −log r."""
    return (2.0 * np.cosh(np.asarray(t, dtype=float) + math.log(eps))) ** (-(n - 2) / 2)


def _bound_summary(excess: np.ndarray) -> Dict[str, Any]:
    return {
        "samples": int(excess.size),
        "violations": int(np.count_nonzero(excess > 0)),
        "max_excess": float(max(excess.max(), 0.0)) if excess.size else 0.0,
    }


def linearization_bound_check(
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    n: int = 4,
    epsilons: Sequence[float] = (0.1, 0.01),
) -> ResidualReport:
    """
    Sample the elementary inequalities behind the linearization.

    * mean-value bound a^p − b^p ≤ p (a − b) a^{p−1} for a > b > 0, p ≥ 1; the
      variant with 1/p in place of p fails and is only counted;
    * |(1 + t)^β − 1| ≤ ε + C_β ε^{−β} |t|^β on t ≥ −1, C_β = (2^β + 1)(β + 1)^β;
    * |(A + B + C)^β − A^β| ≤ ε A^β + C̄_β ε^{−β}(|B|^β + |C|^β), C̄_β = 2^{β−1} C_β;
    * the remainder of A^q − V^q − q A^{q−1}(A − V), q = (n + 2)/(n − 2), divided
      by (A − V)² A^{q−2} for comparable A and V; its sup is reported.

    β = 2n/(n − 2).
    """
    samples = samples or settings.SAMPLES
    rng = rng if rng is not None else np.random.default_rng(settings.SEED)
    beta = 2 * n / (n - 2)
    c_beta = (2**beta + 1) * (beta + 1) ** beta
    c_bar = 2 ** (beta - 1) * c_beta
    slack = 1e-12
    details: Dict[str, Any] = {"beta": beta, "C_beta": c_beta, "C_bar_beta": c_bar}
    worst = 0.0

    a = rng.uniform(0.01, 10.0, samples)
    b = a * rng.uniform(0.0, 1.0, samples)
    b = np.where(b <= 0, a / 2, b)
    p = rng.uniform(1.0, 5.0, samples)
    lhs = a**p - b**p
    excess = lhs - p * (a - b) * a ** (p - 1) * (1 + slack)
    details["mean_value"] = _bound_summary(excess)
    worst = max(worst, details["mean_value"]["max_excess"])
    printed = int(np.count_nonzero(lhs > (a - b) * a ** (p - 1) / p))
    details["reciprocal_p_violations"] = printed
    if printed:
        logger.warning(
            f"a^p - b^p <= (1/p)(a - b)a^(p-1) fails on {printed} of {samples} samples; "
            "the mean-value form with factor p is the one checked"
        )

    t = rng.uniform(-1.0, 10.0, samples)
    for eps in epsilons:
        excess = np.abs((1 + t) ** beta - 1) - (eps + c_beta / eps**beta * np.abs(t) ** beta) * (
            1 + slack
        )
        key = f"power_split_eps_{eps:g}"
        details[key] = _bound_summary(excess)
        worst = max(worst, details[key]["max_excess"])

        A = rng.uniform(0.1, 5.0, samples)
        B = rng.uniform(-2.0, 2.0, samples)
        C = rng.uniform(-2.0, 2.0, samples)
        ok = A + B + C > 0
        A, B, C = A[ok], B[ok], C[ok]
        lhs3 = np.abs((A + B + C) ** beta - A**beta)
        rhs3 = eps * A**beta + c_bar / eps**beta * (np.abs(B) ** beta + np.abs(C) ** beta)
        key = f"three_term_eps_{eps:g}"
        details[key] = _bound_summary(lhs3 - rhs3 * (1 + slack))
        worst = max(worst, details[key]["max_excess"])

    q = (n + 2) / (n - 2)
    A = rng.uniform(0.05, 1.0, samples)
    V = A * rng.uniform(0.25, 4.0, samples)
    V = np.where(np.isclose(V, A), A * 1.5, V)
    remainder = A**q - V**q - q * A ** (q - 1) * (A - V)
    ratio = np.abs(remainder) / ((A - V) ** 2 * A ** (q - 2))
    details["linearization_ratio_sup"] = float(ratio.max())

    return ResidualReport(
        samples=samples,
        max_abs=worst,
        mean_abs=worst,
        details=details,
        tolerance=0.0,
    )
