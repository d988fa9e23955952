# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Acceptance run fixtures."""

import logging

import pytest

from literals import HALF_WIDTH
from mesh import build_square_mesh

logger = logging.getLogger(__name__)


@pytest.fixture(name="level4_mesh", scope="module")
def level4_mesh():
    """Square mesh after four red refinements."""
    return build_square_mesh(4, HALF_WIDTH)


@pytest.fixture(name="level1_mesh", scope="module")
def level1_mesh():
    """Square mesh with a single interior vertex."""
    return build_square_mesh(1, HALF_WIDTH)
