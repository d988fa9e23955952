# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Sub-command handlers."""

from commands.compare import CompareCommand
from commands.run import RunCommand
from commands.stability import StabilityCommand
from commands.table import TableCommand
from commands.verify import VerifyCommand

__all__ = [
    "CompareCommand",
    "RunCommand",
    "StabilityCommand",
    "TableCommand",
    "VerifyCommand",
]
