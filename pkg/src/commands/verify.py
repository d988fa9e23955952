# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Exact solution checks."""

import logging

from commands.table import parse_floats
from experiment import flux_checks, flux_csv
from structured_config import Example
from utils import log_command

logger = logging.getLogger(__name__)

DEFAULT_TIMES = {
    Example.disk: "0.1,0.25,0.4",
    Example.cone: "0.05,0.1,0.15",
}


class VerifyCommand:
    """Defines the `verify-exact` command."""

    def __init__(self, app, name="verify-exact"):
        """Construct.

        Args:
            app: the FlowLab application.
            name: the command name.
        """
        self.app = app
        self.name = name
        parser = app.add_command(
            name,
            "compare d_t u with div p for the exact solutions",
            self._on_verify,
            config_flags=False,
        )
        parser.add_argument(
            "--example",
            type=Example,
            choices=list(Example),
            default=Example.disk,
        )
        parser.add_argument("--times", help="comma separated times")
        parser.add_argument("--r-min", type=float, default=0.05)
        parser.add_argument("--r-max", type=float, default=1.45)
        parser.add_argument("--step", type=float, default=1e-4)
        parser.add_argument("--samples", type=int, default=64)
        parser.add_argument(
            "--tol", type=float, default=1e-4, help="largest discrepancy"
        )
        parser.add_argument("--output", help="result file")

    @log_command(logger)
    def _on_verify(self, args):
        """Handle the verify-exact command.

        Args:
            args: parsed arguments.

        Returns:
            Exit status.
        """
        times = parse_floats(args.times or DEFAULT_TIMES[args.example])
        rows = flux_checks(
            args.example,
            times,
            args.r_min,
            args.r_max,
            step=args.step,
            samples=args.samples,
        )
        self.app.emit(flux_csv(rows), args.output)
        worst = max(row["max_discrepancy"] for row in rows)
        if worst > args.tol:
            logger.error(f"flux discrepancy {worst:.3e} above {args.tol:.3e}")
            return 1
        return 0
