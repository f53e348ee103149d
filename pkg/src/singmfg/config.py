"""Versioned experiment configs in YAML.

A config names one experiment, an explicit master seed and the parameter
overrides for that experiment.  Unknown keys anywhere are errors, as are
unknown experiments and registry names.

.. code-block:: yaml

    schema_version: 1
    experiment: mfg-crowd
    seed: 0
    output_dir: runs/crowd
    params:
      M: 4096
      lattice: {n_t: 50, x_min: -1.5, x_max: 3.5, n_x: 126, xi_max: 2.0}
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from .errors import ConfigError
from .experiments import parse_params

SCHEMA_VERSION = 1


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1]
    experiment: str
    seed: int
    params: dict = {}
    output_dir: str | None = None

    @model_validator(mode="after")
    def _params_valid(self):
        parse_params(self.experiment, self.params)
        return self

    def resolved_params(self):
        return parse_params(self.experiment, self.params)


def config_from_dict(data) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid YAML: {e}") from e
    return config_from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(exclude_none=True), sort_keys=False)
