"""Strictly validated scenario documents (JSON)."""

from __future__ import annotations

import json
import math
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator, model_validator

from .errors import ScenarioError

SERIES_NAMES = (
    "U_S", "U_B", "U_chi", "U_tot", "Q_S_rate", "Q_B_rate", "W_S_rate", "W_B_rate",
    "S_S", "S_B", "S_SB", "S_chi", "T_pseudo_S", "T_pseudo_B", "T_ext_S", "T_ext_B",
    "Sigma_S_rate", "Sigma_B_rate",
)
SeriesName = Literal[SERIES_NAMES]  # type: ignore[valid-type]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


class Grid(Strict):
    t0: float = 0.0
    t1: float
    steps: int = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.t1 > self.t0:
            raise ValueError("t1 must be greater than t0")
        return self


class Split(Strict):
    alpha_s: float = 1.0


class Mode(Strict):
    omega: float = Field(gt=0)
    # real number or [re, im]
    f: float | tuple[float, float] = 1.0

    @property
    def coupling(self) -> complex:
        return complex(*self.f) if isinstance(self.f, tuple) else complex(self.f)


class QubitInitial(Strict):
    bloch: tuple[float, float, float]
    bath: Literal["thermal", "vacuum"] = "thermal"

    @field_validator("bloch")
    @classmethod
    def _inside_ball(cls, v):
        if math.sqrt(sum(c * c for c in v)) > 1 + 1e-12:
            raise ValueError("Bloch vector must have norm <= 1")
        return v


class Matrix(Strict):
    re: list[list[float]]
    im: list[list[float]] | None = None

    @model_validator(mode="after")
    def _square(self):
        n = len(self.re)
        if n == 0 or any(len(row) != n for row in self.re):
            raise ValueError("matrix must be square and non-empty")
        if self.im is not None and (len(self.im) != n or any(len(row) != n for row in self.im)):
            raise ValueError("imaginary part must match the real part's shape")
        return self


class ThermalizingParameters(Strict):
    omega0: float = Field(gt=0)
    lam: float = Field(alias="lambda")
    beta: float = Field(gt=0)
    dynamics: Literal["markovian", "exact"] = "markovian"
    modes: list[Mode] = Field(default_factory=list)
    n_max: int = Field(default=3, ge=1)
    epsilon: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _modes_for_exact(self):
        if self.dynamics == "exact" and not self.modes:
            raise ValueError("exact dynamics needs a non-empty modes list")
        return self


class DephasingParameters(Strict):
    omega0: float = Field(gt=0)
    lam: float = Field(alias="lambda")
    beta: float = Field(gt=0)
    mode_kind: Literal["discrete", "ohmic-continuum"] = "discrete"
    modes: list[Mode] = Field(default_factory=list)
    n_max: int = Field(default=30, ge=1)
    epsilon: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _modes_for_discrete(self):
        if self.mode_kind == "discrete" and not self.modes:
            raise ValueError("discrete mode_kind needs a non-empty modes list")
        return self


class ExplicitHamiltonians(Strict):
    h_s: Matrix
    h_b: Matrix
    h_int: Matrix


class RandomHamiltonians(Strict):
    scale: float = Field(default=1.0, gt=0)
    interaction_scale: float = Field(default=1.0, ge=0)


class CustomParameters(Strict):
    dim_s: int = Field(ge=1)
    dim_b: int = Field(ge=1)
    hamiltonians: ExplicitHamiltonians | None = None
    random: RandomHamiltonians | None = None
    t_ref: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.hamiltonians is None) == (self.random is None):
            raise ValueError("give exactly one of 'hamiltonians' or 'random'")
        if self.hamiltonians is not None:
            for name, expected in (("h_s", self.dim_s), ("h_b", self.dim_b), ("h_int", self.dim_s * self.dim_b)):
                size = len(getattr(self.hamiltonians, name).re)
                if size != expected:
                    raise ValueError(f"hamiltonians.{name} is {size}x{size}, expected {expected}x{expected}")
        return self


class CustomInitial(Strict):
    rho: Matrix | None = None
    random_rank: int | None = Field(default=None, ge=1)
    product: bool = False


class _Common(Strict):
    split: Split = Split()
    grid: Grid
    outputs: list[SeriesName] = Field(default_factory=list)  # type: ignore[valid-type]
    seed: int = 0


class ThermalizingScenario(_Common):
    model: Literal["thermalizing"]
    parameters: ThermalizingParameters
    initial: QubitInitial


class DephasingScenario(_Common):
    model: Literal["dephasing"]
    parameters: DephasingParameters
    initial: QubitInitial


class CustomScenario(_Common):
    model: Literal["custom-bipartite"]
    parameters: CustomParameters
    initial: CustomInitial = CustomInitial()


Scenario = Annotated[Union[ThermalizingScenario, DephasingScenario, CustomScenario], Field(discriminator="model")]
_adapter = TypeAdapter(Scenario)


def _describe(err: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in err.errors())


def parse_scenario(text: str | bytes):
    """Parse and validate a scenario document; ``ScenarioError`` names the offending fields."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return _adapter.validate_python(data)
    except ValidationError as exc:
        raise ScenarioError(_describe(exc)) from None


def dump_scenario(scenario) -> str:
    return json.dumps(scenario.model_dump(mode="json", by_alias=True, exclude_none=True), indent=2, sort_keys=True)


def with_override(scenario, dotted: str, value):
    """Copy of ``scenario`` with one (dotted-path) field replaced, re-validated."""
    data = scenario.model_dump(mode="json", by_alias=True, exclude_none=True)
    node = data
    keys = dotted.split(".")
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ScenarioError(f"{dotted}: no such field")
        node = node[key]
    if not isinstance(node, dict):
        raise ScenarioError(f"{dotted}: no such field")
    node[keys[-1]] = value
    return parse_scenario(json.dumps(data))
