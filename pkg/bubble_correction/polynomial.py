"""Exact multivariate polynomials over the rationals.

A polynomial in ``n`` variables ``y1..yn`` is stored as a map from exponent
tuples (multi-indices) to nonzero :class:`fractions.Fraction` coefficients,
kept in graded-lexicographic order (highest degree first, then
lexicographically descending exponents). The zero polynomial is the empty
map; its degree is undefined and reported as ``None``.

Every binary operation checks that both operands live in the same dimension.
Values are immutable once built and safe to share between threads.
"""

import itertools
import math
from fractions import Fraction
from numbers import Integral
from types import MappingProxyType
from typing import (
    Any,
    Dict,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

MultiIndex = Tuple[int, ...]
Rational = Union[int, Fraction]
Scalar = Union[int, float, Fraction]

# Marker returned by ``Polynomial.degree`` for the zero polynomial.
UNDEFINED_DEGREE = None


class PolynomialError(Exception):
    """Base exception for polynomial construction and arithmetic."""


class DimensionMismatchError(PolynomialError, ValueError):
    """Raised when operands or points disagree on the ambient dimension."""

    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"dimension mismatch: expected {expected}, got {actual}")


class PolynomialFormatError(PolynomialError, ValueError):
    """Raised when a polynomial cannot be built from the supplied data."""


def graded_lex_key(alpha: MultiIndex) -> Tuple[int, Tuple[int, ...]]:
    """Sort key placing higher total degree first, then larger exponents first."""
    return (-sum(alpha), tuple(-a for a in alpha))


def to_fraction(value: Any) -> Fraction:
    """
    Convert a scalar to an exact rational.

    Floats are converted through their shortest decimal representation, so
    ``0.1`` becomes ``1/10`` rather than the binary expansion.

    Args:
        value: int, Fraction, decimal or ``"p/q"`` string, or float

    Returns:
        Fraction: The exact value
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not coefficients")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Integral):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r} has no rational form")
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a rational number")


class TermModel(BaseModel):
    """One ``{"alpha", "num", "den"}`` entry of the polynomial JSON schema."""

    alpha: List[int]
    num: str
    den: str = "1"

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v: List[int]) -> List[int]:
        if any(a < 0 for a in v):
            raise ValueError(f"negative exponent in {v}")
        return v

    @field_validator("num", "den", mode="before")
    @classmethod
    def validate_integer_string(cls, v: Any) -> str:
        if isinstance(v, bool):
            raise ValueError("booleans are not integers")
        if isinstance(v, int):
            return str(v)
        if not isinstance(v, str):
            raise ValueError(f"expected a decimal integer string, got {v!r}")
        try:
            int(v)
        except ValueError as e:
            raise ValueError(f"{v!r} is not a decimal integer") from e
        return v

    @field_validator("den")
    @classmethod
    def validate_positive_denominator(cls, v: str) -> str:
        if int(v) <= 0:
            raise ValueError("denominator must be positive")
        return v


class PolynomialModel(BaseModel):
    """Validated form of ``{"dimension": n, "terms": [...]}``."""

    dimension: int = Field(..., gt=0)
    terms: List[TermModel] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_lengths(self) -> "PolynomialModel":
        for term in self.terms:
            if len(term.alpha) != self.dimension:
                raise ValueError(
                    f"multi-index {term.alpha} does not have length {self.dimension}"
                )
        return self


class Polynomial:
    """Immutable exact polynomial with a fixed ambient dimension."""

    __slots__ = ("_dimension", "_terms", "_hash")

    def __init__(self, dimension: int, terms: Optional[Mapping[Any, Rational]] = None):
        if isinstance(dimension, bool) or not isinstance(dimension, Integral):
            raise PolynomialFormatError(f"dimension must be an integer, got {dimension!r}")
        if dimension < 1:
            raise PolynomialFormatError(f"dimension must be positive, got {dimension}")
        collected: Dict[MultiIndex, Fraction] = {}
        for alpha, coeff in (terms or {}).items():
            key = tuple(int(a) for a in alpha)
            if len(key) != dimension:
                raise DimensionMismatchError(dimension, len(key))
            if any(a < 0 for a in key):
                raise PolynomialFormatError(f"negative exponent in {key}")
            if isinstance(coeff, float):
                raise PolynomialFormatError(
                    f"float coefficient {coeff!r}; use Fraction or to_fraction()"
                )
            collected[key] = collected.get(key, Fraction(0)) + to_fraction(coeff)
        self._init_clean(int(dimension), collected)

    def _init_clean(self, dimension: int, terms: Dict[MultiIndex, Fraction]) -> None:
        ordered = sorted(
            ((alpha, c) for alpha, c in terms.items() if c != 0),
            key=lambda item: graded_lex_key(item[0]),
        )
        self._dimension = dimension
        self._terms = MappingProxyType(dict(ordered))
        self._hash: Optional[int] = None

    @classmethod
    def _from_clean(cls, dimension: int, terms: Dict[MultiIndex, Fraction]) -> "Polynomial":
        """Build from already-validated exponent tuples and Fraction values."""
        poly = cls.__new__(cls)
        poly._init_clean(dimension, terms)
        return poly

    # Constructors

    @classmethod
    def zero(cls, dimension: int) -> "Polynomial":
        return cls(dimension)

    @classmethod
    def constant(cls, dimension: int, value: Rational) -> "Polynomial":
        return cls(dimension, {(0,) * dimension: value})

    @classmethod
    def variable(cls, dimension: int, index: int) -> "Polynomial":
        """The coordinate ``y_{index+1}`` (``index`` is zero-based)."""
        if not 0 <= index < dimension:
            raise PolynomialFormatError(
                f"variable index {index} out of range for dimension {dimension}"
            )
        alpha = [0] * dimension
        alpha[index] = 1
        return cls(dimension, {tuple(alpha): 1})

    @classmethod
    def monomial(cls, alpha: Sequence[int], coefficient: Rational = 1) -> "Polynomial":
        return cls(len(alpha), {tuple(alpha): coefficient})

    @classmethod
    def radius_squared(cls, dimension: int) -> "Polynomial":
        """``y1^2 + ... + yn^2``."""
        terms = {}
        for i in range(dimension):
            alpha = [0] * dimension
            alpha[i] = 2
            terms[tuple(alpha)] = 1
        return cls(dimension, terms)

    # Read access

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def terms(self) -> Mapping[MultiIndex, Fraction]:
        return self._terms

    @property
    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> Optional[int]:
        """Total degree, or ``UNDEFINED_DEGREE`` for the zero polynomial."""
        if not self._terms:
            return UNDEFINED_DEGREE
        return max(sum(alpha) for alpha in self._terms)

    def coefficient(self, alpha: Sequence[int]) -> Fraction:
        return self._terms.get(tuple(alpha), Fraction(0))

    @property
    def constant_term(self) -> Fraction:
        return self.coefficient((0,) * self._dimension)

    def is_homogeneous(self) -> bool:
        """True when every term has the same total degree (the zero polynomial counts)."""
        return len({sum(alpha) for alpha in self._terms}) <= 1

    def homogeneous_components(self) -> Dict[int, "Polynomial"]:
        """Split into homogeneous parts keyed by degree, highest degree first."""
        parts: Dict[int, Dict[MultiIndex, Fraction]] = {}
        for alpha, c in self._terms.items():
            parts.setdefault(sum(alpha), {})[alpha] = c
        return {
            d: Polynomial._from_clean(self._dimension, parts[d])
            for d in sorted(parts, reverse=True)
        }

    def __iter__(self) -> Iterator[Tuple[MultiIndex, Fraction]]:
        return iter(self._terms.items())

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    # Arithmetic

    def _coerce(self, other: Any) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other._dimension != self._dimension:
                raise DimensionMismatchError(self._dimension, other._dimension)
            return other
        if isinstance(other, (Integral, Fraction)) and not isinstance(other, bool):
            return Polynomial.constant(self._dimension, other)
        raise TypeError(f"unsupported operand {other!r}")

    def __add__(self, other: Any) -> "Polynomial":
        try:
            rhs = self._coerce(other)
        except TypeError:
            return NotImplemented
        out = dict(self._terms)
        for alpha, c in rhs._terms.items():
            out[alpha] = out.get(alpha, Fraction(0)) + c
        return Polynomial._from_clean(self._dimension, out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial._from_clean(
            self._dimension, {alpha: -c for alpha, c in self._terms.items()}
        )

    def __sub__(self, other: Any) -> "Polynomial":
        try:
            rhs = self._coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-rhs)

    def __rsub__(self, other: Any) -> "Polynomial":
        return (-self) + other

    def scale(self, factor: Rational) -> "Polynomial":
        f = to_fraction(factor)
        if f == 0:
            return Polynomial.zero(self._dimension)
        return Polynomial._from_clean(
            self._dimension, {alpha: c * f for alpha, c in self._terms.items()}
        )

    def __mul__(self, other: Any) -> "Polynomial":
        if isinstance(other, (Integral, Fraction)) and not isinstance(other, bool):
            return self.scale(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        rhs = self._coerce(other)
        out: Dict[MultiIndex, Fraction] = {}
        for a, ca in self._terms.items():
            for b, cb in rhs._terms.items():
                key = tuple(x + y for x, y in zip(a, b))
                out[key] = out.get(key, Fraction(0)) + ca * cb
        return Polynomial._from_clean(self._dimension, out)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "Polynomial":
        if isinstance(other, (Integral, Fraction)) and not isinstance(other, bool):
            if other == 0:
                raise ZeroDivisionError("polynomial division by zero")
            return self.scale(Fraction(1) / to_fraction(other))
        return NotImplemented

    def __pow__(self, exponent: int) -> "Polynomial":
        if not isinstance(exponent, Integral) or exponent < 0:
            raise ValueError("exponent must be a non-negative integer")
        result = Polynomial.constant(self._dimension, 1)
        for _ in range(int(exponent)):
            result = result * self
        return result

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Polynomial):
            return self._dimension == other._dimension and dict(self._terms) == dict(
                other._terms
            )
        if isinstance(other, (Integral, Fraction)) and not isinstance(other, bool):
            return self == Polynomial.constant(self._dimension, other)
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._dimension, frozenset(self._terms.items())))
        return self._hash

    # Calculus

    def derivative(self, index: int) -> "Polynomial":
        """Partial derivative with respect to ``y_{index+1}``."""
        if not 0 <= index < self._dimension:
            raise PolynomialFormatError(f"variable index {index} out of range")
        out: Dict[MultiIndex, Fraction] = {}
        for alpha, c in self._terms.items():
            a = alpha[index]
            if a == 0:
                continue
            beta = alpha[:index] + (a - 1,) + alpha[index + 1 :]
            out[beta] = out.get(beta, Fraction(0)) + c * a
        return Polynomial._from_clean(self._dimension, out)

    def partial(self, alpha: Sequence[int]) -> "Polynomial":
        """Mixed derivative ``D^alpha``."""
        if len(alpha) != self._dimension:
            raise DimensionMismatchError(self._dimension, len(alpha))
        out: Dict[MultiIndex, Fraction] = {}
        for beta, c in self._terms.items():
            if any(b < a for a, b in zip(alpha, beta)):
                continue
            factor = 1
            for a, b in zip(alpha, beta):
                factor *= math.perm(b, a)
            gamma = tuple(b - a for a, b in zip(alpha, beta))
            out[gamma] = out.get(gamma, Fraction(0)) + c * factor
        return Polynomial._from_clean(self._dimension, out)

    # Evaluation

    def evaluate(self, point: Sequence[Scalar]) -> Union[Fraction, float]:
        """
        Evaluate at a point.

        Rational mode (every coordinate an int or Fraction) is exact. Float
        mode rounds each coefficient to the nearest double, forms each
        monomial in double precision and adds the terms with ``math.fsum``,
        so the only rounding is in the coefficients and the products.

        Args:
            point: Coordinates, one per variable

        Returns:
            Fraction in rational mode, float otherwise
        """
        if len(point) != self._dimension:
            raise DimensionMismatchError(self._dimension, len(point))
        exact = all(
            isinstance(x, (Integral, Fraction)) and not isinstance(x, bool) for x in point
        )
        if exact:
            values = [to_fraction(x) for x in point]
            total = Fraction(0)
            for alpha, c in self._terms.items():
                term = c
                for a, v in zip(alpha, values):
                    if a:
                        term *= v**a
                total += term
            return total
        coords = [float(x) for x in point]
        products = []
        for alpha, c in self._terms.items():
            term = float(c)
            for a, v in zip(alpha, coords):
                if a:
                    term *= v**a
            products.append(term)
        return math.fsum(products)

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Float evaluation at every row of an ``(m, n)`` array."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self._dimension:
            raise DimensionMismatchError(self._dimension, pts.shape[-1])
        out = np.zeros(pts.shape[0])
        for alpha, c in self._terms.items():
            term = np.full(pts.shape[0], float(c))
            for i, a in enumerate(alpha):
                if a:
                    term = term * pts[:, i] ** a
            out += term
        return out

    # Serialization

    def to_json(self) -> Dict[str, Any]:
        return {
            "dimension": self._dimension,
            "terms": [
                {"alpha": list(alpha), "num": str(c.numerator), "den": str(c.denominator)}
                for alpha, c in self._terms.items()
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Polynomial":
        """Parse the polynomial JSON schema; raises pydantic ``ValidationError``."""
        model = PolynomialModel.model_validate(data)
        terms: Dict[MultiIndex, Fraction] = {}
        for term in model.terms:
            alpha = tuple(term.alpha)
            terms[alpha] = terms.get(alpha, Fraction(0)) + Fraction(
                int(term.num), int(term.den)
            )
        return cls._from_clean(model.dimension, terms)

    # Display

    def __repr__(self) -> str:
        return f"Polynomial(dimension={self._dimension}, {self})"

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        pieces = []
        for alpha, c in self._terms.items():
            factors = [
                f"y{i + 1}" if a == 1 else f"y{i + 1}^{a}" for i, a in enumerate(alpha) if a
            ]
            magnitude = abs(c)
            if not factors:
                body = str(magnitude)
            elif magnitude == 1:
                body = "*".join(factors)
            else:
                body = "*".join([str(magnitude)] + factors)
            sign = "-" if c < 0 else "+"
            pieces.append((sign, body))
        first_sign, first_body = pieces[0]
        text = ("-" if first_sign == "-" else "") + first_body
        for sign, body in pieces[1:]:
            text += f" {sign} {body}"
        return text


def laplacian(P: Polynomial) -> Polynomial:
    """``Δ P = Σ_i ∂²P/∂y_i²``."""
    out: Dict[MultiIndex, Fraction] = {}
    for alpha, c in P.terms.items():
        for i, a in enumerate(alpha):
            if a >= 2:
                beta = alpha[:i] + (a - 2,) + alpha[i + 1 :]
                out[beta] = out.get(beta, Fraction(0)) + c * (a * (a - 1))
    return Polynomial._from_clean(P.dimension, out)


def iterated_laplacian(P: Polynomial, k: int) -> Polynomial:
    """k-fold Laplacian; ``k = 0`` returns ``P``."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    result = P
    for _ in range(k):
        if result.is_zero:
            break
        result = laplacian(result)
    return result


def euler_operator(P: Polynomial) -> Polynomial:
    """``Y·∇P``; multiplies each term by its total degree."""
    return Polynomial._from_clean(
        P.dimension, {alpha: c * sum(alpha) for alpha, c in P.terms.items()}
    )


def gradient(P: Polynomial) -> List[Polynomial]:
    return [P.derivative(i) for i in range(P.dimension)]


def r2_multiply(P: Polynomial, j: int) -> Polynomial:
    """``(y1^2 + ... + yn^2)^j · P``."""
    if j < 0:
        raise ValueError(f"j must be non-negative, got {j}")
    n = P.dimension
    current: Dict[MultiIndex, Fraction] = dict(P.terms)
    for _ in range(j):
        nxt: Dict[MultiIndex, Fraction] = {}
        for alpha, c in current.items():
            for i in range(n):
                beta = alpha[:i] + (alpha[i] + 2,) + alpha[i + 1 :]
                nxt[beta] = nxt.get(beta, Fraction(0)) + c
        current = nxt
    return Polynomial._from_clean(n, current)


def directional_pairing(X: Sequence[Scalar], P: Polynomial) -> Polynomial:
    """``⟨X, ∇P⟩`` for a rational point ``X``."""
    if len(X) != P.dimension:
        raise DimensionMismatchError(P.dimension, len(X))
    result = Polynomial.zero(P.dimension)
    for i, x in enumerate(X):
        xi = to_fraction(x)
        if xi:
            result = result + P.derivative(i).scale(xi)
    return result


def evaluate(P: Polynomial, point: Sequence[Scalar]) -> Union[Fraction, float]:
    return P.evaluate(point)


def partial(P: Polynomial, alpha: Sequence[int]) -> Polynomial:
    return P.partial(alpha)


def translate(P: Polynomial, X: Sequence[Scalar]) -> Polynomial:
    """Exact ``y ↦ P(y + X)`` by binomial expansion of every monomial."""
    if len(X) != P.dimension:
        raise DimensionMismatchError(P.dimension, len(X))
    shift = [to_fraction(x) for x in X]
    out: Dict[MultiIndex, Fraction] = {}
    for alpha, c in P.terms.items():
        factors = []
        for a, x in zip(alpha, shift):
            if x == 0:
                factors.append([(a, Fraction(1))])
            else:
                factors.append([(b, math.comb(a, b) * x ** (a - b)) for b in range(a + 1)])
        for combo in itertools.product(*factors):
            beta = tuple(b for b, _ in combo)
            value = c
            for _, w in combo:
                value *= w
            out[beta] = out.get(beta, Fraction(0)) + value
    return Polynomial._from_clean(P.dimension, out)


def embed(P: Polynomial, dimension: int, offset: int) -> Polynomial:
    """Lift ``P`` into ``dimension`` variables, placing its variables at ``offset``."""
    if offset < 0 or offset + P.dimension > dimension:
        raise PolynomialFormatError(
            f"cannot place {P.dimension} variables at offset {offset} in dimension {dimension}"
        )
    tail = dimension - offset - P.dimension
    return Polynomial._from_clean(
        dimension,
        {(0,) * offset + alpha + (0,) * tail: c for alpha, c in P.terms.items()},
    )


def substitute_leading(P: Polynomial, values: Sequence[Scalar]) -> Polynomial:
    """Substitute rational values for the first ``len(values)`` variables."""
    k = len(values)
    if k >= P.dimension:
        raise PolynomialFormatError("must leave at least one free variable")
    vals = [to_fraction(v) for v in values]
    out: Dict[MultiIndex, Fraction] = {}
    for alpha, c in P.terms.items():
        value = c
        for a, v in zip(alpha[:k], vals):
            if a:
                value *= v**a
        if value:
            beta = alpha[k:]
            out[beta] = out.get(beta, Fraction(0)) + value
    return Polynomial._from_clean(P.dimension - k, out)


def alternating_powers(n: int, ell: int) -> Polynomial:
    """``(y1^ℓ − y2^ℓ) + (y3^ℓ − y4^ℓ) + ... + (y_{n−1}^ℓ − y_n^ℓ)`` for even ``n``."""
    if n < 2 or n % 2:
        raise ValueError(f"n must be even and positive, got {n}")
    terms = {}
    for i in range(n):
        alpha = [0] * n
        alpha[i] = ell
        terms[tuple(alpha)] = 1 if i % 2 == 0 else -1
    return Polynomial(n, terms)


def random_homogeneous(
    n: int,
    ell: int,
    rng: np.random.Generator,
    terms: int = 4,
    max_coefficient: int = 9,
    max_denominator: int = 5,
) -> Polynomial:
    """
    Draw a nonzero homogeneous polynomial with a few random rational terms.

    Args:
        n: Dimension
        ell: Degree
        rng: numpy random generator
        terms: Number of monomials to draw (duplicates merge)
        max_coefficient: Bound on numerators
        max_denominator: Bound on denominators

    Returns:
        Polynomial: Homogeneous of degree ``ell``
    """
    while True:
        out: Dict[MultiIndex, Fraction] = {}
        for _ in range(terms):
            slots = rng.integers(0, n, size=ell)
            alpha = tuple(int(a) for a in np.bincount(slots, minlength=n))
            num = int(rng.integers(1, max_coefficient + 1)) * int(rng.choice([-1, 1]))
            den = int(rng.integers(1, max_denominator + 1))
            out[alpha] = out.get(alpha, Fraction(0)) + Fraction(num, den)
        poly = Polynomial._from_clean(n, out)
        if not poly.is_zero:
            return poly
