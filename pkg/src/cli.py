#!/usr/bin/env python3
# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Command-line entry point of the flow experiments."""

import argparse
import logging
import os
import sys

from pydantic import ValidationError

from commands import (
    CompareCommand,
    RunCommand,
    StabilityCommand,
    TableCommand,
    VerifyCommand,
)
from errors import SolverError
from experiment import write_text
from literals import APP_NAME
from structured_config import load_options, parse_config

logger = logging.getLogger(__name__)

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


class FlowLab:
    """The command-line application.

    Every sub-command is contributed by a handler object that registers
    its parser through ``add_command``.
    """

    def __init__(self):
        """Construct the parser and register the command handlers."""
        self.parser = argparse.ArgumentParser(
            prog=APP_NAME,
            description="Gradient flows of p-Dirichlet and Prandtl-Eyring "
            "energies on triangulated squares.",
        )
        self.parser.add_argument(
            "--log-level",
            default="INFO",
            type=str.upper,
            choices=LOG_LEVELS,
            help="root logger level",
        )
        self.subparsers = self.parser.add_subparsers(
            dest="command", metavar="COMMAND"
        )
        self.subparsers.required = True
        self.options = load_options()

        self.run_command = RunCommand(self)
        self.table_command = TableCommand(self)
        self.stability_command = StabilityCommand(self)
        self.verify_command = VerifyCommand(self)
        self.compare_command = CompareCommand(self)

    def add_command(self, name, help_text, handler, config_flags=True):
        """Register a sub-command.

        Args:
            name: command name.
            help_text: one line description.
            handler: callable receiving the parsed arguments.
            config_flags: whether to accept the experiment options.

        Returns:
            The sub-command parser, for command specific arguments.
        """
        parser = self.subparsers.add_parser(
            name, help=help_text, description=help_text
        )
        if config_flags:
            parser.add_argument(
                "--config",
                metavar="FILE",
                help="flat 'key = value' configuration file",
            )
            for option, declaration in self.options.items():
                parser.add_argument(
                    f"--{option}",
                    dest=option.replace("-", "_"),
                    metavar=declaration.get("type", "string").upper(),
                    help=" ".join(declaration.get("description", "").split()),
                )
        parser.set_defaults(handler=handler)
        return parser

    def config(self, args):
        """Validated experiment configuration of a parsed command line.

        Args:
            args: parsed arguments.

        Returns:
            ExperimentConfig.
        """
        overrides = {
            option: getattr(args, option.replace("-", "_"), None)
            for option in self.options
        }
        return parse_config(args.config, overrides)

    @staticmethod
    def emit(text, path=None):
        """Write a result to a file, or to stdout when no path is given."""
        if path:
            write_text(path, text)
            logger.info(f"wrote {path}")
        else:
            sys.stdout.write(text)

    @staticmethod
    def sibling(path, suffix):
        """Path next to an output file; relative to APP_NAME without one."""
        stem = os.path.splitext(path)[0] if path else APP_NAME
        return f"{stem}{suffix}"

    def __call__(self, argv=None):
        """Parse the command line and dispatch to the handler.

        Args:
            argv: arguments without the program name.

        Returns:
            The exit status of the handler.
        """
        args = self.parser.parse_args(argv)
        logging.basicConfig(
            level=getattr(logging, args.log_level),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        return args.handler(args) or 0


def main(argv=None):
    """Run the application.

    Args:
        argv: arguments without the program name; sys.argv by default.

    Returns:
        0 on success, 1 for solver failures and failed checks, 2 for
        invalid input.
    """
    try:
        return FlowLab()(argv)
    except (ValueError, ValidationError) as e:
        logger.error(f"invalid input: {e}")
        return 2
    except SolverError as e:
        logger.error(f"solver failure: {e}")
        return 1


if __name__ == "__main__":  # pragma: nocover
    sys.exit(main())
