"""JSON experiment configuration.

Every block rejects unknown keys.  Validation errors are reported as
``ConfigurationError`` messages that start with the dotted field path.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .grid import Grid
from .linear import LinearParams
from .physics import DEFAULT_VACUUM_GUARD, MAX_ORDER, PressureModel
from .solver import InitialDataSpec, StepperConfig


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridBlock(_Block):
    d: int = Field(3, ge=1, le=3)
    n: Union[int, list[int]] = 32
    L: Union[float, list[float]] = 2 * math.pi

    @model_validator(mode="after")
    def _shape(self):
        n = self.n_tuple
        L = self.L_tuple
        if len(n) != self.d or len(L) != self.d:
            raise ValueError("n and L must be scalars or lists of length d")
        for v in n:
            if v < 8 or v % 2:
                raise ValueError(f"n must be even and >= 8, got {v}")
        for v in L:
            if not (v > 0 and math.isfinite(v)):
                raise ValueError("L must be positive")
        return self

    @property
    def n_tuple(self) -> tuple[int, ...]:
        return tuple(self.n) if isinstance(self.n, list) else (self.n,) * self.d

    @property
    def L_tuple(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.L) if isinstance(self.L, list) else (float(self.L),) * self.d

    def build(self) -> Grid:
        return Grid(self.n_tuple, self.L_tuple)


class ParamsBlock(_Block):
    mu: float = Field(1.0, gt=0)
    lam: float = 0.0
    kappa: float = Field(1.0, gt=0)
    eps_deg: float = Field(1e-6, ge=0, lt=1)

    @model_validator(mode="after")
    def _nu(self):
        if not self.lam + 2 * self.mu > 0:
            raise ValueError("nu = lam + 2 mu must be positive")
        return self

    def build(self) -> LinearParams:
        return LinearParams(self.mu, self.lam, self.kappa, eps_deg=self.eps_deg)


class PressureBlock(_Block):
    coeffs: list[float] = Field(default_factory=lambda: [1.0], max_length=MAX_ORDER - 1)
    radius: float = Field(1.0, gt=0)

    def build(self) -> PressureModel:
        return PressureModel(tuple(self.coeffs), self.radius)


class InitialBlock(_Block):
    family: Literal["gaussian", "random", "zero"] = "gaussian"
    amplitude: float = Field(1e-3, ge=0)
    width: float = Field(1.0, gt=0)
    mtilde_scale: float = 1.0
    band: tuple[float, float] | None = None

    @field_validator("band")
    @classmethod
    def _band(cls, v):
        if v is not None and not (0 <= v[0] < v[1]):
            raise ValueError("band must satisfy 0 <= low < high")
        return v


class TimeBlock(_Block):
    dt: float = Field(0.01, gt=0)
    t_final: float = Field(1.0, ge=0)
    scheme: Literal["ETD1", "ETD-RK2"] = "ETD-RK2"
    n_snapshots: int = Field(16, ge=1)
    snapshot_times: list[float] | None = None
    n_records: int = Field(64, ge=2)
    dealias: Literal["2/3", "none"] = "2/3"
    linear_only: bool = False

    @model_validator(mode="after")
    def _steps(self):
        if 0 < self.t_final < self.dt:
            raise ValueError("t_final must be at least dt")
        return self


class GuardsBlock(_Block):
    vacuum: float = Field(DEFAULT_VACUUM_GUARD, gt=0)
    wrap: float = Field(1e-6, gt=0)


class NormEntry(_Block):
    name: str | None = None
    component: Literal["a", "m", "U"] = "a"
    s: float = 0.0
    p: float = Field(2.0, ge=1)
    sigma: float = Field(1.0, ge=1)


class AsymptoticsBlock(_Block):
    s: list[float] = Field(default_factory=lambda: [0.0, 0.5])
    p: float = 2.0
    window: tuple[float, float] = (10.0, 100.0)
    include_tail: bool = True

    @model_validator(mode="after")
    def _ranges(self):
        if not 1 < self.p <= 2:
            raise ValueError("p must satisfy 1 < p <= 2 for the profile comparator")
        if not 0 < self.window[0] < self.window[1]:
            raise ValueError("window must satisfy 0 < start < end")
        return self


class DecayBlock(_Block):
    csv: str | None = None
    columns: list[str] = Field(default_factory=lambda: ["a_B0", "m_B0"])
    targets: dict[str, float] = Field(default_factory=dict)
    tolerance: float = Field(0.15, gt=0)
    window: tuple[float, float] | None = None
    p: float = 2.0

    @model_validator(mode="after")
    def _p(self):
        if not 1 <= self.p <= 2:
            raise ValueError("p must satisfy 1 <= p <= 2 for the decay estimates")
        return self


class GevreyBlock(_Block):
    c0: Union[Literal["fit"], float] = "fit"
    safety: float = Field(0.5, gt=0, le=1)
    p: float = Field(2.0, ge=1)
    sigma: float = Field(1.0, ge=1)
    sup_factor: float = Field(10.0, gt=0)
    radius_tolerance: float = Field(0.2, gt=0)
    window: tuple[float, float] = (10.0, 100.0)

    @field_validator("c0")
    @classmethod
    def _c0(cls, v):
        if v != "fit" and not v > 0:
            raise ValueError("c0 must be 'fit' or a positive number")
        return v


class LinearVerifyBlock(_Block):
    samples: int = Field(100, ge=1)
    t_max: float = Field(5.0, gt=0)
    xi_max: float = Field(4.0, gt=0)


class ExperimentConfig(_Block):
    grid: GridBlock = GridBlock()
    params: ParamsBlock = ParamsBlock()
    pressure: PressureBlock = PressureBlock()
    initial: InitialBlock = InitialBlock()
    time: TimeBlock = TimeBlock()
    guards: GuardsBlock = GuardsBlock()
    norms: list[NormEntry] = Field(default_factory=list)
    asymptotics: AsymptoticsBlock = AsymptoticsBlock()
    decay: DecayBlock = DecayBlock()
    gevrey: GevreyBlock = GevreyBlock()
    linear_verify: LinearVerifyBlock = LinearVerifyBlock()
    out: str = "out"
    seed: int = Field(0, ge=0, lt=2**64)

    # --- builders -----------------------------------------------------------

    def build_grid(self) -> Grid:
        return self.grid.build()

    def build_params(self) -> LinearParams:
        return self.params.build()

    def build_pressure(self) -> PressureModel:
        return self.pressure.build()

    def build_initial(self) -> InitialDataSpec:
        fam = self.initial.family
        amp = 0.0 if fam == "zero" else self.initial.amplitude
        return InitialDataSpec(amplitude=amp, family="gaussian" if fam == "zero" else fam,
                               width=self.initial.width, mtilde_scale=self.initial.mtilde_scale,
                               seed=self.seed, band=self.initial.band)

    def build_stepper(self) -> StepperConfig:
        t = self.time
        return StepperConfig(
            dt=t.dt, t_final=t.t_final, scheme=t.scheme, n_snapshots=t.n_snapshots,
            snapshot_times=None if t.snapshot_times is None else tuple(t.snapshot_times),
            dealias=t.dealias, vacuum_guard=self.guards.vacuum, wrap_tolerance=self.guards.wrap,
            linear_only=t.linear_only,
        )

    def echo(self) -> dict:
        return self.model_dump(mode="json")


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        path = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{path}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(_format_errors(exc)) from None


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigurationError("<root>: config must be a JSON object")
    return parse_config(data)


def seeded_rng(config: ExperimentConfig) -> np.random.Generator:
    return np.random.default_rng(config.seed)
