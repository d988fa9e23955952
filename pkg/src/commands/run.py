# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Single experiment runs."""

import logging

from experiment import run_csv, run_experiment, run_json, snapshot_csv
from structured_config import OutputFormat
from utils import format_float, log_command

logger = logging.getLogger(__name__)


class RunCommand:
    """Defines the `run` command.

    Writes the per-step series of one experiment, plus optional snapshots
    and a mesh dump next to the output.
    """

    def __init__(self, app, name="run"):
        """Construct.

        Args:
            app: the FlowLab application.
            name: the command name.
        """
        self.app = app
        self.name = name
        app.add_command(
            name, "run one experiment and write its error series", self._on_run
        )

    @log_command(logger)
    def _on_run(self, args):
        """Handle the run command.

        Args:
            args: parsed arguments.

        Returns:
            Exit status.
        """
        cfg = self.app.config(args)
        series = run_experiment(cfg)
        if cfg.output_format == OutputFormat.json:
            text = run_json(series)
        else:
            text = run_csv(series)
        self.app.emit(text, cfg.output)

        for requested, (k, coeffs) in sorted(series.snapshots.items()):
            path = self.app.sibling(
                cfg.output, f"-snapshot-t{format_float(requested)}.csv"
            )
            logger.info(f"snapshot at t={requested} taken at step {k}")
            self.app.emit(snapshot_csv(series.mesh, coeffs), path)
        if cfg.dump_mesh:
            self.app.emit(
                series.mesh.dump(), self.app.sibling(cfg.output, ".mesh")
            )
        return 0
