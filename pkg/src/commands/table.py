# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Convergence tables."""

import logging
import sys

from experiment import convergence_study, table_csv, table_report
from utils import log_command

logger = logging.getLogger(__name__)


def parse_levels(text):
    """Parse ``a..b`` (inclusive) or a comma separated list of levels.

    Args:
        text: the level range.

    Returns:
        List of levels.

    Raises:
        ValueError: for a malformed range.
    """
    if ".." in text:
        low, high = text.split("..", 1)
        levels = list(range(int(low), int(high) + 1))
    else:
        levels = [int(item) for item in text.split(",") if item.strip()]
    if not levels:
        raise ValueError(f"empty level range '{text}'")
    return levels


def parse_floats(text):
    """Parse a comma separated list of numbers."""
    return [float(item) for item in text.split(",") if item.strip()]


class TableCommand:
    """Defines the `table` command."""

    def __init__(self, app, name="table"):
        """Construct.

        Args:
            app: the FlowLab application.
            name: the command name.
        """
        self.app = app
        self.name = name
        parser = app.add_command(
            name, "maximal L2 errors over a range of levels", self._on_table
        )
        parser.add_argument(
            "--levels",
            default="3..6",
            help="inclusive range a..b or comma separated levels",
        )
        parser.add_argument(
            "--eps-powers",
            dest="eps_powers_list",
            help="comma separated exponents alpha of eps = h^alpha, one "
            "column each",
        )

    @log_command(logger)
    def _on_table(self, args):
        """Handle the table command.

        The CSV goes to the output (stdout by default); the Markdown report
        goes to stdout when an output file is set and to stderr otherwise.

        Args:
            args: parsed arguments.

        Returns:
            Exit status.
        """
        cfg = self.app.config(args)
        eps_powers = None
        if args.eps_powers_list:
            eps_powers = parse_floats(args.eps_powers_list)
        rows = convergence_study(
            cfg, parse_levels(args.levels), eps_powers, workers=cfg.workers
        )
        self.app.emit(table_csv(rows), cfg.output)
        report = table_report(rows, cfg)
        (sys.stdout if cfg.output else sys.stderr).write(report)
        return 0
