#!/usr/bin/env python3
# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Acceptance run helpers."""

import logging

import numpy as np

from experiment import build_mask, run_experiment
from fem import nodal_interpolate
from literals import CONE_TABLE, DISK_TABLE
from structured_config import parse_config

logger = logging.getLogger(__name__)

TABLES = {"disk": DISK_TABLE, "cone": CONE_TABLE}
TABLE_BAND = 0.20
ADMM_BAND = 0.25
EXTINCTION_NORM = 0.05


def table_config(example, level, eps_power=None, **overrides):
    """Configuration of one reference table cell.

    Args:
        example: disk or cone.
        level: refinement level.
        eps_power: exponent alpha of eps = h^alpha; none for ADMM.
        overrides: further option values.

    Returns:
        ExperimentConfig with tau = h/4 and T = 1.
    """
    values = {
        "example": example,
        "level": level,
        "tau_factor": 0.25,
        "t_end": 1.0,
    }
    if eps_power is not None:
        values["eps_power"] = eps_power
    values.update(overrides)
    return parse_config(overrides=values)


def max_error(example, level, eps_power=None, **overrides):
    """Maximal L2 error of one table cell."""
    cfg = table_config(example, level, eps_power, **overrides)
    error = run_experiment(cfg).max_error
    logger.info(
        f"{example} level={level} eps={cfg.eps_mode} "
        f"scheme={cfg.scheme}: {error:.4f}"
    )
    return error


def reference(example, column, level):
    """Reference maximal L2 error of a table cell."""
    return TABLES[example][column][level]


def within(value, expected, band):
    """Whether value lies in expected * [1 - band, 1 + band]."""
    return abs(value - expected) <= band * expected


def disk_datum(mesh, cfg):
    """Nodal interpolation of the unit disk indicator under cfg's mask."""
    mask = build_mask(mesh, cfg)

    def indicator(points):
        return (np.linalg.norm(points, axis=1) <= 1.0).astype(float)

    return mask, mask.apply(nodal_interpolate(mesh, indicator))
