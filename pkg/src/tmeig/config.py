"""Experiment configuration schema.

Configs are YAML (or JSON) documents validated against :class:`ExperimentConfig`
before any computation. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .models import LinearGaussianModel, MoessbauerModel, FocusedModel, make_linear_gaussian

SCHEMA_PATH = Path(__file__).with_name("experiment.schema.json")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LinearSpec(_Strict):
    kind: Literal["linear"]
    n_x: int = Field(ge=1)
    n_y: int = Field(ge=1)
    decay: float = Field(0.8, gt=0, le=1)
    seed: int = Field(0, ge=0, description="seed of the random orthonormal factors of G")
    noise_var: float = Field(0.01, gt=0)
    sigma: float = Field(0.1, gt=0)
    length: float = Field(0.1, gt=0)

    @model_validator(mode="after")
    def _shape(self):
        if self.n_y > self.n_x:
            raise ValueError(f"n_y={self.n_y} must not exceed n_x={self.n_x}")
        return self

    def build(self):
        return make_linear_gaussian(
            self.n_x,
            self.n_y,
            self.decay,
            self.seed,
            noise_var=self.noise_var,
            sigma=self.sigma,
            length=self.length,
        )


class ScalarSpec(_Strict):
    kind: Literal["scalar"]
    g: float = 1.0
    prior_var: float = Field(1.0, gt=0)
    noise_var: float = Field(1.0, gt=0)

    def build(self):
        return LinearGaussianModel(
            np.array([[self.g]]), np.array([[self.prior_var]]), np.array([[self.noise_var]])
        )


class MoessbauerSpec(_Strict):
    kind: Literal["moessbauer"]
    velocities: list[float] = Field(default_factory=lambda: [-1.3, 0.0, 1.3], min_length=1)
    noise_sd: float = Field(0.1, gt=0)
    prior_loc: list[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0, 1.0])
    prior_scale: list[float] = Field(default_factory=lambda: [1.0, 0.3, 0.3, 0.2])
    focus: list[int] | None = Field(None, description="parameter indices kept (focused EIG)")

    @field_validator("prior_loc", "prior_scale")
    @classmethod
    def _four(cls, v):
        if len(v) != 4:
            raise ValueError("need exactly 4 entries (center, log width, log height, log offset)")
        return v

    @field_validator("prior_scale")
    @classmethod
    def _positive(cls, v):
        if any(s <= 0 for s in v):
            raise ValueError("prior scales must be positive")
        return v

    @field_validator("focus")
    @classmethod
    def _focus(cls, v):
        if v is not None and (not v or any(i not in range(4) for i in v) or len(set(v)) != len(v)):
            raise ValueError("focus must list distinct indices in 0..3")
        return v

    def build(self):
        base = MoessbauerModel(
            tuple(self.velocities), self.noise_sd, tuple(self.prior_loc), tuple(self.prior_scale)
        )
        return FocusedModel(base, tuple(self.focus)) if self.focus else base


class DimredSpec(_Strict):
    methods: list[Literal["CMI", "PCA", "CCA"]] = Field(
        default_factory=lambda: ["CMI", "PCA", "CCA"], min_length=1
    )
    r: list[Annotated[int, Field(ge=1)]] = Field(min_length=1)
    s: list[Annotated[int, Field(ge=1)]] = Field(min_length=1)
    n_mc: int = Field(500, ge=1)


Exponent = Union[float, str]


class ExperimentConfig(_Strict):
    experiment: Literal["allocation-sweep", "estimator-compare", "moessbauer", "dimred-grid"]
    model: Union[LinearSpec, ScalarSpec, MoessbauerSpec] = Field(discriminator="kind")
    kinds: list[Literal["m", "pos", "lik", "pr", "nmc"]] = Field(
        default_factory=lambda: ["m", "pos", "lik", "pr"], min_length=1
    )
    p: list[Exponent] = Field(
        default_factory=lambda: [1 / 3],
        min_length=1,
        description="allocation exponents; numbers or fractions such as '1/3'",
    )
    L: list[Annotated[int, Field(ge=2)]] = Field(min_length=1, description="sample budgets")
    replicates: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    out: str = "results"
    degree: int = Field(1, ge=1, le=6)
    dimred: DimredSpec | None = None

    @field_validator("p")
    @classmethod
    def _exponents(cls, v):
        out = []
        for item in v:
            val = float(Fraction(item)) if isinstance(item, str) else float(item)
            if not 0 <= val < 10:
                raise ValueError(f"allocation exponent {item} must be in [0, 10)")
            out.append(val)
        return out

    @model_validator(mode="after")
    def _consistent(self):
        if self.experiment == "dimred-grid":
            if self.dimred is None:
                raise ValueError("dimred-grid needs a 'dimred' section")
            if isinstance(self.model, ScalarSpec):
                raise ValueError("dimred-grid needs a multivariate model")
        if self.experiment == "allocation-sweep" and isinstance(self.model, MoessbauerSpec):
            raise ValueError("allocation-sweep needs a model with a closed-form EIG")
        return self

    def build_model(self):
        return self.model.build()


class ConfigError(ValueError):
    """Schema violation; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


def _field_path(loc):
    parts = []
    for item in loc:
        if isinstance(item, int):
            parts.append(f"[{item}]")
        else:
            parts.append(("." if parts else "") + str(item))
    return "".join(parts) or "<root>"


def load_config(path):
    """Parse and validate a config file. Returns ``(config, sha256 of the bytes)``."""
    raw = Path(path).read_bytes()
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError("<root>", f"not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        # drop union tags pydantic inserts into the location
        loc = [x for x in err["loc"] if x not in ("linear", "scalar", "moessbauer")]
        raise ConfigError(_field_path(loc), err["msg"]) from exc
    return cfg, hashlib.sha256(raw).hexdigest()


def json_schema():
    return ExperimentConfig.model_json_schema()


def write_schema(path=SCHEMA_PATH):
    Path(path).write_text(json.dumps(json_schema(), indent=2, sort_keys=True) + "\n")
