# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Semi-implicit against implicit runs."""

import logging

from experiment import compare_csv, compare_schemes
from structured_config import Scheme
from utils import log_command

logger = logging.getLogger(__name__)


class CompareCommand:
    """Defines the `compare` command."""

    def __init__(self, app, name="compare"):
        """Construct.

        Args:
            app: the FlowLab application.
            name: the command name.
        """
        self.app = app
        self.name = name
        parser = app.add_command(
            name,
            "mass-norm difference of semi-implicit and implicit states",
            self._on_compare,
        )
        parser.add_argument(
            "--implicit-scheme",
            type=Scheme,
            choices=[Scheme.implicit_fp, Scheme.implicit_admm],
            default=Scheme.implicit_fp,
        )

    @log_command(logger)
    def _on_compare(self, args):
        """Handle the compare command.

        Args:
            args: parsed arguments.

        Returns:
            Exit status.
        """
        cfg = self.app.config(args)
        rows = compare_schemes(cfg, args.implicit_scheme)
        largest = max(row.difference for row in rows)
        logger.info(f"largest difference {largest:.6g}")
        self.app.emit(compare_csv(rows), cfg.output)
        return 0
