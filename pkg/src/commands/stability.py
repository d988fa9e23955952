# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Unconditional stability checks."""

import logging

from commands.table import parse_floats
from experiment import stability_csv, stability_sweep
from literals import STATUS_OK
from utils import log_command

logger = logging.getLogger(__name__)


class StabilityCommand:
    """Defines the `check-stability` command.

    Exits with status 1 when a run violates the energy inequality.
    """

    def __init__(self, app, name="check-stability"):
        """Construct.

        Args:
            app: the FlowLab application.
            name: the command name.
        """
        self.app = app
        self.name = name
        parser = app.add_command(
            name,
            "check the discrete energy inequality for several time steps",
            self._on_check,
        )
        parser.add_argument(
            "--taus",
            help="comma separated time steps; defaults to tau, 1 and 10",
        )
        parser.add_argument(
            "--steps", type=int, default=10, help="steps per time step"
        )

    @log_command(logger)
    def _on_check(self, args):
        """Handle the check-stability command.

        Args:
            args: parsed arguments.

        Returns:
            Exit status.
        """
        cfg = self.app.config(args)
        taus = parse_floats(args.taus) if args.taus else [cfg.tau, 1.0, 10.0]
        rows = stability_sweep(cfg, taus, args.steps)
        self.app.emit(stability_csv(rows), cfg.output)
        failed = [row["tau"] for row in rows if row["status"] != STATUS_OK]
        if failed:
            logger.error(f"energy inequality violated for tau in {failed}")
            return 1
        return 0
