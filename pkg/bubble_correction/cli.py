"""Command-line front end.

Every subcommand reads JSON, writes a JSON report (CSV for ``profile``) and
returns an exit code: 0 on success, 1 for malformed input or a violated
precondition, 2 when the mathematics says no (residue obstruction, guard
failure, failing balance).
"""

import argparse
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from bubble_correction.balance import (
    BalanceError,
    BlowupConfiguration,
    interference_check,
    multi_point_balance,
)
from bubble_correction.config.settings import settings
from bubble_correction.integrals import IntegralError, moment_integral, moment_integral_mixed
from bubble_correction.polynomial import Polynomial, PolynomialError
from bubble_correction.profile import (
    ProfileError,
    RefinedProfile,
    RefinedProfileSpec,
    greens_ball,
    linearized_residual,
)
from bubble_correction.reduction import (
    CharacteristicGuardError,
    ReductionError,
    ResidueObstructionError,
    UnsolvableError,
    coefficient_table,
    solve_gamma,
    solve_general,
)
from bubble_correction.utils.logging import setup_logging

logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_INPUT = 1
EXIT_OBSTRUCTION = 2

Command = Literal["solve", "table", "integrate", "balance", "residual-scan", "green-check", "profile"]

NEEDS_INPUT = {"solve", "integrate", "balance", "residual-scan", "profile"}


class RunConfig(BaseModel):
    """Validated command-line arguments."""

    model_config = ConfigDict(frozen=True)

    command: Command
    n: Optional[int] = Field(default=None, ge=3)
    ell: Optional[int] = Field(default=None, ge=1)
    input: Optional[Path] = None
    output: Optional[Path] = None
    tol_exact: Optional[float] = Field(default=None, ge=0.0)
    tol_float: Optional[float] = Field(default=None, ge=0.0)
    tol_quad: Optional[float] = Field(default=None, ge=0.0)
    seed: int = Field(default_factory=lambda: settings.SEED, ge=0, lt=2**64)
    samples: int = Field(default_factory=lambda: settings.SAMPLES, gt=0)
    general: bool = False
    method: Literal["closed_form", "quadrature"] = "closed_form"
    radius: float = Field(default=1.0, gt=0.0)
    delta: List[float] = Field(default_factory=lambda: [0.1, 0.3])

    @model_validator(mode="after")
    def validate_command(self) -> "RunConfig":
        if self.command in NEEDS_INPUT:
            if self.input is None:
                raise ValueError(f"{self.command} needs --input")
            if not self.input.is_file():
                raise ValueError(f"input file not found: {self.input}")
        if self.command == "table" and (self.n is None or self.ell is None):
            raise ValueError("table needs --n and --ell")
        if self.command == "green-check":
            if self.n is None:
                raise ValueError("green-check needs --n")
            if any(not 0 < d < 1 for d in self.delta):
                raise ValueError("every --delta must lie in (0, 1)")
        return self

    def apply_tolerances(self) -> None:
        if self.tol_exact is not None:
            settings.TOL_EXACT = self.tol_exact
        if self.tol_float is not None:
            settings.TOL_FLOAT = self.tol_float
        if self.tol_quad is not None:
            settings.TOL_QUAD = self.tol_quad

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def _format_float(value: float) -> str:
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    text = f"{value:.17g}"
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


class ReportEncoder(json.JSONEncoder):
    """JSON encoder writing every float with 17 significant digits."""

    def default(self, o: Any) -> Any:
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, Path):
            return str(o)
        return super().default(o)

    def iterencode(self, o: Any, _one_shot: bool = False) -> Any:
        encoder = (
            json.encoder.encode_basestring_ascii
            if self.ensure_ascii
            else json.encoder.encode_basestring
        )
        iterencode = json.encoder._make_iterencode(  # type: ignore[attr-defined]
            {} if self.check_circular else None,
            self.default,
            encoder,
            self.indent,
            _format_float,
            self.key_separator,
            self.item_separator,
            self.sort_keys,
            self.skipkeys,
            _one_shot,
        )
        return iterencode(o, 0)


def dump_json(data: Any) -> str:
    return json.dumps(data, cls=ReportEncoder, indent=2, sort_keys=True) + "\n"


def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(config: RunConfig, text: str) -> None:
    if config.output is None:
        sys.stdout.write(text)
    else:
        write_atomic(config.output, text)
        logger.info(f"Wrote {config.output}")


def _load_json(path: Optional[Path]) -> Any:
    assert path is not None
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def _load_polynomial(config: RunConfig) -> Polynomial:
    P = Polynomial.from_json(_load_json(config.input))
    if config.n is not None and config.n != P.dimension:
        raise ValueError(f"--n {config.n} does not match the input dimension {P.dimension}")
    if config.ell is not None and P.degree != config.ell:
        raise ValueError(f"--ell {config.ell} does not match the input degree {P.degree}")
    return P


def cmd_solve(config: RunConfig) -> int:
    P = _load_polynomial(config)
    solver = solve_general if config.general else solve_gamma
    try:
        solution = solver(P)
    except ResidueObstructionError as e:
        emit(
            config,
            dump_json(
                {
                    "status": "obstructed",
                    "residue": e.residue.to_json(),
                    "top_laplacian": e.top_laplacian.to_json(),
                }
            ),
        )
        return EXIT_OBSTRUCTION
    except UnsolvableError as e:
        emit(
            config,
            dump_json({"status": "unsolvable", "residue": e.residue.to_json(), "reasons": e.reasons}),
        )
        return EXIT_OBSTRUCTION
    emit(config, dump_json({"status": "solved", "solution": solution.to_json()}))
    return EXIT_OK


def cmd_table(config: RunConfig) -> int:
    assert config.n is not None and config.ell is not None
    try:
        table = coefficient_table(config.n, config.ell)
    except CharacteristicGuardError as e:
        emit(
            config,
            dump_json(
                {
                    "status": "guard_failure",
                    "cell": {"j": e.j, "k": e.k},
                    "root": e.root,
                    "n": e.n,
                    "ell": e.ell,
                }
            ),
        )
        return EXIT_OBSTRUCTION
    emit(config, dump_json(table.to_json()))
    return EXIT_OK


def cmd_integrate(config: RunConfig) -> int:
    Q = _load_polynomial(config)
    if Q.is_homogeneous():
        report = moment_integral(Q, config.method).to_json()
    else:
        mixed = moment_integral_mixed(Q, config.method)
        report = {
            "components": {str(d): r.to_json() for d, r in mixed.components.items()},
            "numeric": mixed.numeric,
        }
    emit(config, dump_json(report))
    return EXIT_OK


def cmd_balance(config: RunConfig) -> int:
    """Balance of the equal-η groups; interference is reported alongside."""
    blowup = BlowupConfiguration.from_json(_load_json(config.input))
    if config.n is not None and config.n != blowup.n:
        raise ValueError(f"--n {config.n} does not match the configuration dimension {blowup.n}")
    balance = multi_point_balance(blowup)
    interference = interference_check(blowup.n, blowup.flex_exponents)
    emit(config, dump_json([balance.to_json(), interference.to_json()]))
    return EXIT_OK if balance.passed else EXIT_OBSTRUCTION


def cmd_residual_scan(config: RunConfig) -> int:
    P = _load_polynomial(config)
    try:
        solution = solve_gamma(P)
    except ResidueObstructionError as e:
        emit(config, dump_json({"status": "obstructed", "residue": e.residue.to_json()}))
        return EXIT_OBSTRUCTION
    report = linearized_residual(solution.gamma, P, samples=config.samples, rng=config.rng())
    emit(config, dump_json(report.to_json()))
    return EXIT_OK


def cmd_green_check(config: RunConfig) -> int:
    assert config.n is not None
    ball = greens_ball(config.radius, config.n)
    rng = config.rng()
    xi = np.zeros(config.n)
    xi[0] = 0.5 * config.radius
    sample_points = rng.standard_normal((config.samples, config.n))
    report: Dict[str, Any] = {
        "n": config.n,
        "radius": config.radius,
        "dirichlet_residual": ball.dirichlet_residual(xi, sample_points),
        "poisson_normalization": ball.poisson_normalization(xi),
        "bounds": [
            ball.bound_check(delta, samples=config.samples, rng=rng).model_dump()
            for delta in config.delta
        ],
    }
    emit(config, dump_json(report))
    return EXIT_OK


class ProfileRequest(BaseModel):
    """Input of the ``profile`` command; Γ is given directly or solved from ``source``."""

    n: int = Field(..., ge=3)
    ell: Optional[int] = None
    lam: float = Field(..., gt=0, alias="lambda")
    xi: List[float]
    gamma: Optional[Dict[str, Any]] = None
    source: Optional[Dict[str, Any]] = None
    harmonic_points: List[List[float]] = Field(default_factory=list)
    harmonic_weights: List[float] = Field(default_factory=list)
    joint_radius_c: float = Field(..., gt=0)

    @model_validator(mode="after")
    def validate_gamma_or_source(self) -> "ProfileRequest":
        if (self.gamma is None) == (self.source is None):
            raise ValueError("give exactly one of gamma and source")
        if self.gamma is not None and self.ell is None:
            raise ValueError("ell is required when gamma is given")
        return self

    def to_spec(self) -> RefinedProfileSpec:
        if self.source is not None:
            P = Polynomial.from_json(self.source)
            gamma = solve_gamma(P).gamma
            ell = P.degree or 0
        else:
            gamma = Polynomial.from_json(self.gamma or {})
            ell = self.ell or 0
        return RefinedProfileSpec(
            n=self.n,
            ell=ell,
            lam=self.lam,
            xi=self.xi,
            gamma=gamma,
            harmonic_points=self.harmonic_points,
            harmonic_weights=self.harmonic_weights,
            joint_radius_c=self.joint_radius_c,
        )


def cmd_profile(config: RunConfig) -> int:
    """Sample the refined profile in the ball of radius ``--radius`` about ξ and write CSV."""
    request = ProfileRequest.model_validate(_load_json(config.input))
    try:
        spec = request.to_spec()
    except ResidueObstructionError as e:
        emit(config, dump_json({"status": "obstructed", "residue": e.residue.to_json()}))
        return EXIT_OBSTRUCTION
    profile = RefinedProfile(spec)
    rng = config.rng()
    n = spec.n
    directions = rng.standard_normal((config.samples, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = config.radius * rng.random(config.samples) ** (1.0 / n)
    points = profile.xi + directions * radii[:, None]
    parts = profile.components(points)
    table = np.column_stack(
        [points, parts["bubble"], parts["correction"], parts["harmonic_group"], parts["total"]]
    )
    header = ",".join([f"y{i + 1}" for i in range(n)] + ["bubble", "correction", "harmonic_group", "total"])
    buffer = _savetxt(table, header)
    emit(config, buffer)
    return EXIT_OK


def _savetxt(table: np.ndarray, header: str) -> str:
    stream = io.StringIO()
    np.savetxt(stream, table, fmt="%.17g", delimiter=",", header=header, comments="")
    return stream.getvalue()


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "solve": cmd_solve,
    "table": cmd_table,
    "integrate": cmd_integrate,
    "balance": cmd_balance,
    "residual-scan": cmd_residual_scan,
    "green-check": cmd_green_check,
    "profile": cmd_profile,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, help="Dimension")
    common.add_argument("--ell", type=int, help="Degree of the source polynomial")
    common.add_argument("--input", type=Path, help="Input JSON file")
    common.add_argument("--output", type=Path, help="Output file (stdout if omitted)")
    common.add_argument("--tol-exact", type=float, help="Override the exact tolerance")
    common.add_argument("--tol-float", type=float, help="Override the mixed float tolerance")
    common.add_argument("--tol-quad", type=float, help="Override the quadrature tolerance")
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument("--samples", type=int, help="Number of sample points")

    parser = argparse.ArgumentParser(
        prog="bubble-correction",
        description="Polynomial corrections and balance checks for bubble profiles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", parents=[common], help="Solve L(Gamma) = P")
    solve.add_argument(
        "--general", action="store_true", help="Absorb residues by a radial completion"
    )
    sub.add_parser("table", parents=[common], help="Dump the coefficient table")
    integrate = sub.add_parser("integrate", parents=[common], help="Bubble-weighted moment")
    integrate.add_argument("--method", choices=["closed_form", "quadrature"], default="closed_form")
    sub.add_parser("balance", parents=[common], help="Multi-point balance of a configuration")
    sub.add_parser("residual-scan", parents=[common], help="Sampled linearized residual")
    green = sub.add_parser("green-check", parents=[common], help="Green's function checks")
    green.add_argument("--radius", type=float, default=1.0, help="Ball radius")
    green.add_argument(
        "--delta", type=float, action="append", help="Distance margin (repeatable)"
    )
    profile = sub.add_parser("profile", parents=[common], help="Sample the refined profile")
    profile.add_argument("--radius", type=float, default=1.0, help="Sampling radius about xi")
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    values = {k: v for k, v in vars(args).items() if v is not None}
    values["command"] = args.command
    return RunConfig.model_validate(values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    setup_logging("bubble_correction")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _run_config(args)
        config.apply_tolerances()
        return COMMANDS[config.command](config)
    except CharacteristicGuardError as e:
        logger.error(str(e))
        return EXIT_OBSTRUCTION
    except (
        ValidationError,
        OSError,
        ValueError,
        PolynomialError,
        ReductionError,
        IntegralError,
        BalanceError,
        ProfileError,
    ) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
