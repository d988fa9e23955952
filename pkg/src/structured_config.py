#!/usr/bin/env python3
# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Structured configuration for flowlab experiments."""
import logging
import math
import os
from enum import Enum
from typing import Optional, Tuple

import yaml
from pydantic import BaseModel, root_validator, validator

from literals import (
    ADMM_DELTA_STOP_POWER,
    ADMM_RHO_MAX,
    ADMM_RHO_MIN,
    HALF_WIDTH,
    MAX_LEVEL,
    MAX_SUBDIV,
)
from mesh import square_mesh_size

logger = logging.getLogger(__name__)

CONFIG_PATH = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), os.pardir, "config.yaml"
)


class BaseConfigModel(BaseModel):
    """Class to be used for defining the structured configuration options."""

    def __getitem__(self, x):
        """Return the item using the notation instance[key]."""
        return getattr(self, x.replace("-", "_"))


class BaseEnumStr(str, Enum):
    """Base class for string enum."""

    def __str__(self) -> str:
        """Return the value as a string.

        Returns:
            string of config value
        """
        return str(self.value)


class Example(BaseEnumStr):
    """Enum for the `example` field."""

    disk = "disk"
    cone = "cone"


class Scheme(BaseEnumStr):
    """Enum for the `scheme` field."""

    semi = "semi"
    implicit_admm = "implicit-admm"
    implicit_fp = "implicit-fp"


class Regularization(BaseEnumStr):
    """Enum for the `regularization` field."""

    standard = "standard"
    truncated = "truncated"


class DensityChoice(BaseEnumStr):
    """Enum for the `density` field."""

    p_dirichlet = "p-dirichlet"
    prandtl_eyring = "prandtl-eyring"


class BoundaryCondition(BaseEnumStr):
    """Enum for the `bc` field."""

    dirichlet = "dirichlet"
    neumann = "neumann"


class OutputFormat(BaseEnumStr):
    """Enum for the `output-format` field."""

    csv = "csv"
    json = "json"


class ExperimentConfig(BaseConfigModel):
    """Manager for the structured experiment configuration."""

    example: Example
    scheme: Scheme
    density: DensityChoice
    level: int
    p: float
    regularization: Regularization
    eps_power: Optional[float]
    eps_value: Optional[float]
    tau_factor: float
    t_end: float
    bc: BoundaryCondition
    subdiv: int
    cg_tol: float
    lumped_mass: bool
    admm_rho0: float
    admm_mu: float
    admm_scale: float
    admm_maxit: int
    delta_stop: Optional[float]
    fp_inner_tol: float
    fp_max_inner: int
    zero_datum: bool
    output: Optional[str]
    output_format: OutputFormat
    snapshots: Optional[Tuple[float, ...]]
    dump_mesh: bool
    workers: int

    class Config:
        """Pydantic options."""

        allow_mutation = False

    @validator("*", pre=True)
    @classmethod
    def blank_string(cls, value):
        """Check for empty strings.

        Args:
            value: configuration value

        Returns:
            None in place of empty string or value
        """
        if value == "":
            return None
        return value

    @validator("level")
    @classmethod
    def level_validator(cls, value: int) -> int:
        """Check validity of `level` field.

        Args:
            value: level value

        Returns:
            value: the refinement level

        Raises:
            ValueError: in the case when the value is out of range
        """
        if 0 <= value <= MAX_LEVEL:
            return value
        raise ValueError(f"level must lie in [0, {MAX_LEVEL}].")

    @validator("subdiv")
    @classmethod
    def subdiv_validator(cls, value: int) -> int:
        """Check validity of `subdiv` field.

        Args:
            value: quadrature refinement depth

        Returns:
            value: the quadrature refinement depth

        Raises:
            ValueError: in the case when the value is out of range
        """
        if 0 <= value <= MAX_SUBDIV:
            return value
        raise ValueError(f"subdiv must lie in [0, {MAX_SUBDIV}].")

    @validator("p")
    @classmethod
    def p_validator(cls, value: float) -> float:
        """Check validity of `p` field.

        Args:
            value: exponent of the p-Dirichlet energy

        Returns:
            value: the exponent

        Raises:
            ValueError: in the case when the value is out of range
        """
        if 1.0 <= value < 2.0:
            return value
        raise ValueError("p must lie in [1, 2).")

    @validator("eps_power")
    @classmethod
    def eps_power_validator(cls, value: Optional[float]) -> Optional[float]:
        """Check validity of `eps_power` field.

        Args:
            value: exponent alpha of eps = h^alpha

        Returns:
            value: the exponent

        Raises:
            ValueError: in the case when the value is not positive
        """
        if value is None or value > 0:
            return value
        raise ValueError("eps-power must be positive.")

    @validator("eps_value")
    @classmethod
    def eps_value_validator(cls, value: Optional[float]) -> Optional[float]:
        """Check validity of `eps_value` field.

        Args:
            value: absolute regularization parameter

        Returns:
            value: the regularization parameter

        Raises:
            ValueError: in the case when the value is negative
        """
        if value is None or value >= 0:
            return value
        raise ValueError("eps-value must be nonnegative.")

    @validator(
        "tau_factor",
        "t_end",
        "cg_tol",
        "fp_inner_tol",
        "delta_stop",
        "admm_mu",
    )
    @classmethod
    def positive_validator(cls, value: Optional[float]) -> Optional[float]:
        """Check that tolerances, factors and times are positive.

        Args:
            value: configuration value

        Returns:
            value: the validated value

        Raises:
            ValueError: in the case when the value is not positive
        """
        if value is None or value > 0:
            return value
        raise ValueError("Value must be positive.")

    @validator("admm_rho0")
    @classmethod
    def rho0_validator(cls, value: float) -> float:
        """Check validity of `admm_rho0` field.

        Args:
            value: initial ADMM penalty

        Returns:
            value: the initial penalty

        Raises:
            ValueError: in the case when the value is out of range
        """
        if ADMM_RHO_MIN <= value <= ADMM_RHO_MAX:
            return value
        raise ValueError(
            f"admm-rho0 must lie in [{ADMM_RHO_MIN}, {ADMM_RHO_MAX}]."
        )

    @validator("admm_scale")
    @classmethod
    def scale_validator(cls, value: float) -> float:
        """Check validity of `admm_scale` field.

        Args:
            value: penalty multiplier

        Returns:
            value: the penalty multiplier

        Raises:
            ValueError: in the case when the value does not exceed one
        """
        if value > 1.0:
            return value
        raise ValueError("admm-scale must exceed 1.")

    @validator("admm_maxit", "fp_max_inner", "workers")
    @classmethod
    def count_validator(cls, value: int) -> int:
        """Check that iteration budgets and worker counts are positive.

        Args:
            value: configuration value

        Returns:
            value: the validated count

        Raises:
            ValueError: in the case when the value is not positive
        """
        if value >= 1:
            return value
        raise ValueError("Value must be at least 1.")

    @validator("snapshots", pre=True)
    @classmethod
    def snapshots_validator(cls, value):
        """Parse the comma separated list of snapshot times.

        Args:
            value: string such as ``0.1,0.25`` or a sequence of numbers

        Returns:
            A sorted tuple of nonnegative times, or None.

        Raises:
            ValueError: in the case when a time is negative
        """
        if value is None:
            return None
        if isinstance(value, str):
            value = [item for item in value.split(",") if item.strip()]
        times = tuple(sorted(float(item) for item in value))
        if any(t < 0 for t in times):
            raise ValueError("snapshot times must be nonnegative.")
        return times or None

    @root_validator(skip_on_failure=True)
    @classmethod
    def scheme_validator(cls, values):
        """Check combinations of scheme, density and regularization.

        Args:
            values: field values validated so far

        Returns:
            values: with the default regularization mode filled in

        Raises:
            ValueError: in the case of an inconsistent combination
        """
        scheme = values["scheme"]
        eps_power, eps_value = values["eps_power"], values["eps_value"]
        if eps_power is not None and eps_value is not None:
            raise ValueError("eps-power and eps-value are mutually exclusive.")

        if eps_power is None and eps_value is None:
            if scheme == Scheme.implicit_admm:
                values["eps_value"] = 0.0
            else:
                values["eps_power"] = 1.0
            logger.debug(
                f"no regularization given; using eps-power="
                f"{values['eps_power']}, eps-value={values['eps_value']}"
            )

        positive_eps = values["eps_power"] is not None or values["eps_value"]
        p_kind = values["density"] == DensityChoice.p_dirichlet
        if scheme == Scheme.implicit_admm:
            if not p_kind or values["p"] != 1.0 or positive_eps:
                raise ValueError(
                    "implicit-admm requires the p-dirichlet density with "
                    "p = 1 and eps = 0."
                )
        elif p_kind and not positive_eps:
            raise ValueError(f"scheme {scheme} requires eps > 0.")
        return values

    @property
    def h(self) -> float:
        """Mesh size of the square mesh at the configured level."""
        return square_mesh_size(self.level, HALF_WIDTH)

    @property
    def eps(self) -> float:
        """Regularization parameter, h^eps_power or eps_value."""
        if self.eps_power is not None:
            return self.h**self.eps_power
        return float(self.eps_value)

    @property
    def eps_mode(self) -> str:
        """Label of the regularization mode used in tables."""
        if self.eps_power is not None:
            return f"h^{self.eps_power:g}"
        return f"{self.eps_value:g}"

    @property
    def tau(self) -> float:
        """Time step tau_factor * h."""
        return self.tau_factor * self.h

    @property
    def admm_delta_stop(self) -> float:
        """ADMM stopping threshold, h^5 unless overridden."""
        if self.delta_stop is not None:
            return self.delta_stop
        return self.h**ADMM_DELTA_STOP_POWER

    @property
    def num_steps(self) -> int:
        """Number of time steps floor(T / tau)."""
        return num_steps(self.t_end, self.tau)


def num_steps(t_end, tau):
    """Number of steps of the stop rule (k + 1) tau > T.

    Args:
        t_end: final time T.
        tau: step size.

    Returns:
        floor(T / tau), robust against T / tau landing just below an integer.
    """
    ratio = t_end / tau
    return int(math.floor(ratio + 1e-12 * max(1.0, ratio)))


def load_options(path=CONFIG_PATH):
    """Read the option declarations.

    Args:
        path: path of the options file.

    Returns:
        A dict mapping option names (kebab case) to their declaration.
    """
    with open(path, encoding="utf-8") as f:
        return yaml.safe_load(f)["options"]


def load_defaults(path=CONFIG_PATH):
    """Read the default of every option from the options file."""
    options = load_options(path)
    return {name: option.get("default") for name, option in options.items()}


def read_config_file(path):
    """Parse a flat ``key = value`` configuration file.

    Args:
        path: path of a UTF-8 text file; ``#`` starts a comment.

    Returns:
        A dict mapping kebab-case keys to raw string values.

    Raises:
        ValueError: for a line without ``=``.
    """
    values = {}
    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{number}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip().replace("_", "-")] = value.strip()
    return values


def parse_config(path=None, overrides=None, defaults_path=CONFIG_PATH):
    """Build a validated configuration from defaults, a file and flags.

    Later sources win: options file defaults, then the key-value file at
    ``path``, then ``overrides``.

    Args:
        path: optional key-value configuration file.
        overrides: optional mapping of option names to values; None values
            are ignored.
        defaults_path: options file providing the defaults.

    Returns:
        The validated ExperimentConfig.

    Raises:
        ValueError: naming the first unknown key.
    """
    values = load_defaults(defaults_path)
    sources = []
    if path is not None:
        sources.append(read_config_file(path))
    if overrides:
        sources.append(
            {
                key.replace("_", "-"): value
                for key, value in overrides.items()
                if value is not None
            }
        )
    for source in sources:
        for key, value in source.items():
            if key not in values:
                raise ValueError(f"unknown configuration key '{key}'")
            values[key] = value
    return ExperimentConfig(
        **{key.replace("-", "_"): value for key, value in values.items()}
    )


def config_echo(cfg):
    """Plain, JSON-compatible view of a configuration.

    Args:
        cfg: the configuration.

    Returns:
        A dict of kebab-case keys to plain values.
    """
    echo = {}
    for key, value in cfg.dict().items():
        if isinstance(value, Enum):
            value = str(value)
        elif isinstance(value, tuple):
            value = list(value)
        echo[key.replace("_", "-")] = value
    return echo
