import math
from typing import Any, Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_core import PydanticCustomError

from src.utils import GARDNER_OUTPUT_DIR


SpatialFunction = Callable[[np.ndarray], np.ndarray]
SpaceTimeFunction = Callable[[np.ndarray, float], np.ndarray]

# how the ghost coefficients c_{-1}, c_{N+1} are tied to the interior ones
BoundaryClosure = Literal["extrapolated", "neumann"]


# --- Basis ---


class BasisConstants(BaseModel):
    """Nodal values of B_m and its first two derivatives (one row of the knot table)."""

    model_config = ConfigDict(frozen=True)

    zeta: float = Field(gt=0)
    h: float = Field(gt=0)
    alpha1: float  # B_m(x_{m±1})
    alpha2: float = 1.0  # B_m(x_m)
    beta1: float  # coefficient of delta_{m-1} in U'_m
    beta2: float  # coefficient of delta_{m+1} in U'_m
    gamma1: float  # B''_m(x_{m±1})
    gamma2: float  # B''_m(x_m)
    series_branch: bool = False


class SplinePieceCoefficients(BaseModel):
    model_config = ConfigDict(frozen=True)

    zeta: float = Field(gt=0)
    h: float = Field(gt=0)
    a1: float
    b1: float
    b2: float
    c1: float
    d1: float
    # (zeta*h*cosh(zeta*h) - sinh(zeta*h)) / (zeta*h)**3
    scaled_denominator: float
    # weight of the inner truncated power, 2 * (1 + cosh(zeta*h))
    tension: float


# --- Problem ---


class GardnerParameters(BaseModel):
    model_config = ConfigDict(frozen=True)

    mu1: float
    mu2: float
    mu3: float

    @field_validator("mu3")
    @classmethod
    def dispersion_must_not_vanish(cls, value: float) -> float:
        if value == 0.0:
            raise ValueError("mu3 must be non-zero, the equation degenerates otherwise")
        return value


class Grid(BaseModel):
    model_config = ConfigDict(frozen=True)

    a: float
    b: float
    N: int = Field(ge=4)

    @model_validator(mode="after")
    def check_interval(self) -> "Grid":
        if not self.a < self.b:
            raise ValueError(f"grid requires a < b, got a={self.a}, b={self.b}")
        return self

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.N + 1)


class ProblemSpec(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = "custom"
    params: GardnerParameters
    grid: Grid
    dt: float = Field(gt=0)
    zeta: float = Field(gt=0)
    t_end: float = Field(ge=0)
    initial_u: SpatialFunction
    initial_v: SpatialFunction
    analytical: SpaceTimeFunction | None = None
    derivative_source: Literal["analytic", "finite_difference"] = "analytic"
    boundary: BoundaryClosure = "extrapolated"

    @model_validator(mode="after")
    def check_initial_derivative(self) -> "ProblemSpec":
        if self.derivative_source != "analytic":
            return self
        rng = np.random.default_rng(0)
        span = self.grid.b - self.grid.a
        points = rng.uniform(self.grid.a + 0.05 * span, self.grid.b - 0.05 * span, 10)
        step = 1e-5 * max(1.0, span / 100.0)
        centered = (
            np.asarray(self.initial_u(points + step), dtype=float)
            - np.asarray(self.initial_u(points - step), dtype=float)
        ) / (2.0 * step)
        supplied = np.asarray(self.initial_v(points), dtype=float)
        scale = max(float(np.max(np.abs(supplied))), 1e-12)
        mismatch = float(np.max(np.abs(centered - supplied)))
        if mismatch > 1e-6 * scale:
            raise ValueError(
                f"initial_v is not the derivative of initial_u (max mismatch {mismatch:.3e})"
            )
        return self

    @property
    def num_steps(self) -> int:
        return int(round(self.t_end / self.dt))


# --- Solver state ---


def _frozen_array(value: Any) -> np.ndarray:
    array = np.array(value, dtype=float)
    array.flags.writeable = False
    return array


class SplineState(BaseModel):
    """Coefficients delta_{-1..N+1} and phi_{-1..N+1} at one time level."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    t: float
    delta: np.ndarray
    phi: np.ndarray
    step_index: int = 0

    @field_validator("delta", "phi", mode="before")
    @classmethod
    def to_read_only_array(cls, value: Any) -> np.ndarray:
        array = _frozen_array(value)
        if array.ndim != 1 or array.size < 7:
            raise ValueError("coefficient vectors must be 1-D with at least N+3 = 7 entries")
        if not np.all(np.isfinite(array)):
            raise ValueError("coefficient vectors must be finite")
        return array

    @model_validator(mode="after")
    def check_sizes(self) -> "SplineState":
        if self.delta.shape != self.phi.shape:
            raise ValueError("delta and phi must have the same length")
        return self

    @property
    def N(self) -> int:
        return self.delta.size - 3


class NodalValues(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    U: np.ndarray
    Ux: np.ndarray
    Uxx: np.ndarray
    V: np.ndarray
    Vx: np.ndarray
    Vxx: np.ndarray


class BandedSystem(BaseModel):
    """A x^{n+1} = B x^n in LAPACK band storage, ghost columns already eliminated.

    Unknowns are interleaved as (delta_0, phi_0, delta_1, phi_1, ..., delta_N, phi_N).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    size: int
    lower_bandwidth: int = 3
    upper_bandwidth: int = 3
    a_bands: np.ndarray
    b_bands: np.ndarray


# --- Diagnostics ---


class ErrorReport(BaseModel):
    t: float
    linf: float = Field(ge=0)
    argmax_node: int = Field(ge=0)
    argmax_x: float


class ConservationReport(BaseModel):
    t: float
    M: float
    E: float
    H: float
    C_M: float | None = None
    C_E: float | None = None
    C_H: float | None = None
    # quantities whose baseline was zero, reported as absolute change
    absolute_fallback: tuple[str, ...] = ()


class AmplificationSample(BaseModel):
    phase: float
    epsilon: float
    rho_momentum: float
    rho_constraint: float


class ZetaScanRow(BaseModel):
    zeta: float
    linf: float | None = None
    # L-infinity error per observed time when several times are scanned at once
    linf_by_time: dict[float, float] = {}
    error: str | None = None


class ZetaScanResult(BaseModel):
    best_zeta: float
    metric_time: float
    rows: list[ZetaScanRow]


# --- Experiments ---


ExperimentName = Literal["example1", "example2", "example3", "custom"]
TableId = Literal["T2", "T3", "T4", "T5", "T6"]

EXPERIMENT_DEFAULTS: dict[str, dict[str, float]] = {
    "example1": {"N": 100, "t_end": 5.0},
    "example2": {"N": 100, "t_end": 12.0},
    "example3": {"N": 200, "t_end": 15.0},
}
CUSTOM_FIELDS = ("a", "b", "mu1", "mu2", "mu3", "initial")


def _config_error(key: str, reason: str) -> PydanticCustomError:
    return PydanticCustomError(
        "config_field", "{key}: {reason}", {"key": key, "reason": reason}
    )


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentName
    N: int | None = Field(default=None, ge=4)
    dt: float = Field(default=0.1, gt=0)
    zeta: float = Field(default=1.0, gt=0)
    t_end: float | None = Field(default=None, ge=0)
    snapshot_times: tuple[float, ...] | None = None
    report_times: tuple[float, ...] | None = None
    output_dir: str = GARDNER_OUTPUT_DIR
    snapshot_density: float = Field(default=5.0, gt=0)
    quadrature: Literal["gauss", "nodal"] = "gauss"
    quadrature_points: int = 4
    boundary: BoundaryClosure = "extrapolated"
    a: float | None = None
    b: float | None = None
    mu1: float | None = None
    mu2: float | None = None
    mu3: float | None = None
    initial: str | None = None

    @field_validator("snapshot_times", "report_times", mode="before")
    @classmethod
    def split_times(cls, value: Any) -> Any:
        if isinstance(value, str):
            return tuple(part.strip() for part in value.split(",") if part.strip())
        return value

    @field_validator("quadrature_points")
    @classmethod
    def supported_rule(cls, value: int) -> int:
        if value not in (4, 6):
            raise ValueError("only 4- and 6-point Gauss-Legendre rules are supported")
        return value

    @model_validator(mode="after")
    def fill_and_check(self) -> "RunConfig":
        if self.experiment == "custom":
            for key in CUSTOM_FIELDS:
                if getattr(self, key) is None:
                    raise _config_error(key, "required when experiment=custom")
            if not self.a < self.b:
                raise _config_error("b", "must be greater than a")
            if self.mu3 == 0.0:
                raise _config_error("mu3", "must be non-zero")
            if self.N is None:
                raise _config_error("N", "required when experiment=custom")
            if self.t_end is None:
                raise _config_error("t_end", "required when experiment=custom")
        else:
            for key in CUSTOM_FIELDS:
                if getattr(self, key) is not None:
                    raise _config_error(key, "only allowed when experiment=custom")
            defaults = EXPERIMENT_DEFAULTS[self.experiment]
            if self.N is None:
                self.N = int(defaults["N"])
            if self.t_end is None:
                self.t_end = defaults["t_end"]

        endpoints = tuple(sorted({0.0, float(self.t_end)}))
        if self.snapshot_times is None:
            self.snapshot_times = endpoints
        if self.report_times is None:
            self.report_times = endpoints
        tolerance = 1e-9 * max(1.0, self.t_end)
        for key in ("snapshot_times", "report_times"):
            times = getattr(self, key)
            if any(t < -tolerance or t > self.t_end + tolerance for t in times):
                raise _config_error(key, f"all times must lie in [0, {self.t_end}]")
            if any(not math.isfinite(t) for t in times):
                raise _config_error(key, "times must be finite")
            steps = [round(t / self.dt) for t in set(times)]
            if len(steps) != len(set(steps)):
                raise _config_error(
                    key, f"two different times fall on the same step (dt={self.dt})"
                )
        return self


class SnapshotRecord(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    t: float
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    # u - u_exact at x, when the problem has an analytical solution
    error: np.ndarray | None = None


class SnapshotSeries(BaseModel):
    records: list[SnapshotRecord] = []


class RunOutcome(BaseModel):
    status: Literal["success", "breakdown"]
    exit_code: int
    steps_completed: int
    final_time: float
    output_dir: str
    files: list[str] = []
    message: str | None = None
