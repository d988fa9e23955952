#!/usr/bin/env python3
# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Structured config unit tests."""

import logging
import math

import pytest
from pydantic import ValidationError

from structured_config import (
    BoundaryCondition,
    Example,
    ExperimentConfig,
    Scheme,
    config_echo,
    load_defaults,
    num_steps,
    parse_config,
    read_config_file,
)

logger = logging.getLogger(__name__)


def test_defaults() -> None:
    """The options file alone yields a valid semi-implicit run."""
    cfg = parse_config()
    assert cfg.example == Example.disk
    assert cfg.scheme == Scheme.semi
    assert cfg.bc == BoundaryCondition.dirichlet
    assert cfg.level == 4
    assert cfg.eps_power == 1.0
    assert cfg.eps_value is None
    assert cfg.output is None
    assert cfg.snapshots is None
    assert cfg.workers == 1
    assert set(load_defaults()) == {
        key.replace("_", "-") for key in ExperimentConfig.__fields__
    }


def test_derived_quantities() -> None:
    """At level 5 with eps = h^1, eps is 3 sqrt(2) / 32."""
    cfg = parse_config(overrides={"level": 5, "eps_power": 1.0})
    assert cfg.h == pytest.approx(3 * math.sqrt(2) / 32)
    assert cfg.eps == pytest.approx(3 * math.sqrt(2) / 32)
    assert cfg.eps_mode == "h^1"
    assert cfg.tau == pytest.approx(0.25 * cfg.h)
    assert cfg.num_steps == math.floor(1.0 / cfg.tau)
    assert cfg.admm_delta_stop == pytest.approx(cfg.h**5)

    half = parse_config(overrides={"level": 5, "eps_power": 0.5})
    assert half.eps == pytest.approx(math.sqrt(half.h))
    assert half.eps_mode == "h^0.5"


def test_admm_defaults_and_constraints() -> None:
    cfg = parse_config(overrides={"scheme": "implicit-admm"})
    assert cfg.eps_value == 0.0
    assert cfg.eps == 0.0
    assert cfg.eps_mode == "0"

    erroneous = [
        {"scheme": "implicit-admm", "eps_power": 1.0},
        {"scheme": "implicit-admm", "eps_value": 0.1},
        {"scheme": "implicit-admm", "p": 1.5},
        {"scheme": "implicit-admm", "density": "prandtl-eyring"},
    ]
    check_invalid_values(erroneous)


def test_regularization_choices() -> None:
    erroneous = [
        {"eps_power": 1.0, "eps_value": 0.1},
        {"eps_value": 0.0},
        {"scheme": "implicit-fp", "eps_value": 0.0},
        {"eps_power": 0.0},
        {"eps_value": -1.0},
    ]
    check_invalid_values(erroneous)
    accepted = [
        {"eps_value": 0.05},
        {"density": "prandtl-eyring", "eps_value": 0.0},
        {"regularization": "truncated", "eps_power": 2.0},
    ]
    check_valid_values(accepted)


def test_field_ranges() -> None:
    erroneous = [
        {"level": -1},
        {"level": 11},
        {"p": 2.0},
        {"p": 0.5},
        {"subdiv": 7},
        {"tau_factor": 0.0},
        {"t_end": -1.0},
        {"cg_tol": 0.0},
        {"admm_rho0": 1e9},
        {"admm_scale": 1.0},
        {"admm_maxit": 0},
        {"workers": 0},
        {"example": "square"},
        {"scheme": "explicit"},
        {"bc": "robin"},
        {"output_format": "xml"},
        {"snapshots": "0.1,-0.2"},
    ]
    check_invalid_values(erroneous)
    accepted = [
        {"level": 0},
        {"level": 10},
        {"p": 1.5},
        {"subdiv": 6},
        {"bc": "neumann"},
        {"output_format": "json"},
        {"workers": 4},
    ]
    check_valid_values(accepted)


def test_snapshots_are_sorted() -> None:
    cfg = parse_config(overrides={"snapshots": "0.4, 0.1,0.25"})
    assert cfg.snapshots == (0.1, 0.25, 0.4)
    assert parse_config(overrides={"snapshots": ""}).snapshots is None


def test_unknown_key() -> None:
    with pytest.raises(ValueError, match="unknown configuration key"):
        parse_config(overrides={"levels": 3})


def test_config_file(tmp_path) -> None:
    """File values override defaults; overrides win over the file."""
    path = tmp_path / "run.conf"
    path.write_text(
        "# convergence cell\n"
        "example = cone\n"
        "level=3\n"
        "\n"
        "lumped_mass = true  # system only\n"
        "snapshots = 0.1,0.2\n"
    )
    raw = read_config_file(path)
    assert raw["lumped-mass"] == "true"
    cfg = parse_config(path, overrides={"level": 2, "t_end": None})
    assert cfg.example == Example.cone
    assert cfg.level == 2
    assert cfg.t_end == 1.0
    assert cfg.lumped_mass is True
    assert cfg.snapshots == (0.1, 0.2)


def test_malformed_config_file(tmp_path) -> None:
    path = tmp_path / "bad.conf"
    path.write_text("level 3\n")
    with pytest.raises(ValueError, match="bad.conf:1"):
        read_config_file(path)
    path.write_text("lvl = 3\n")
    with pytest.raises(ValueError):
        parse_config(path)


def test_config_is_immutable() -> None:
    cfg = parse_config()
    with pytest.raises(TypeError):
        cfg.level = 3


def test_config_echo() -> None:
    echo = config_echo(parse_config(overrides={"snapshots": "0.1"}))
    assert echo["scheme"] == "semi"
    assert echo["tau-factor"] == 0.25
    assert echo["snapshots"] == [0.1]
    assert echo["eps-value"] is None


@pytest.mark.parametrize(
    "t_end,tau,expected",
    [(1.0, 0.25, 4), (1.0, 0.3, 3), (0.3, 0.1, 3), (0.7, 0.1, 7)],
)
def test_num_steps(t_end, tau, expected) -> None:
    assert num_steps(t_end, tau) == expected


def check_valid_values(accepted_values: list) -> None:
    """Check that each set of overrides parses.

    Args:
        accepted_values: List of override mappings.
    """
    for overrides in accepted_values:
        cfg = parse_config(overrides=overrides)
        for field, value in overrides.items():
            assert cfg[field] == value


def check_invalid_values(erroneus_values: list) -> None:
    """Check that each set of overrides is rejected.

    Args:
        erroneus_values: List of override mappings.
    """
    for overrides in erroneus_values:
        with pytest.raises((ValidationError, ValueError)):
            parse_config(overrides=overrides)
