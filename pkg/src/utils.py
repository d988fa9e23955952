# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Define helpers methods."""

import functools
import logging
import os

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from errors import SolverError


def render(template_name, context):
    """Render the template with the given name using the given context dict.

    Args:
        template_name: File name to read the template from.
        context: Dict used for rendering.

    Returns:
        The rendered text.
    """
    project_dir = os.path.abspath(
        os.path.join(os.path.dirname(__file__), os.pardir)
    )
    loader = FileSystemLoader(os.path.join(project_dir, "templates"))
    environment = Environment(
        loader=loader,
        autoescape=False,  # nosec B701 - plain text artifacts, not HTML
        keep_trailing_newline=True,
        trim_blocks=True,
        lstrip_blocks=True,
        undefined=StrictUndefined,
    )
    return environment.get_template(template_name).render(**context)


def log_command(logger):
    """Log with the provided logger when a command handler is executed.

    Args:
        logger: logger used to log commands.

    Returns:
        Decorator wrapper.
    """

    def decorator(method):
        """Log decorator wrapper.

        Args:
            method: method wrapped by the decorator.

        Returns:
            Decorated method.
        """

        @functools.wraps(method)
        def decorated(self, args):
            """Log decorator method.

            Args:
                args: The parsed command-line arguments.

            Returns:
                Decorated method.
            """
            logger.info(
                f"* running {self.__class__.__name__}.{method.__name__}"
            )
            try:
                return method(self, args)
            finally:
                logger.info(
                    f"* completed {self.__class__.__name__}.{method.__name__}"
                )

        return decorated

    return decorator


def raise_solver_error(func):
    """Log and re-raise SolverError escaping a numerical routine.

    Args:
        func: The function to decorate.

    Returns:
        wrapper: A decorated function that logs failures.
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        """Execute wrapper for the decorated function and raise errors.

        Args:
            args: Positional arguments passed to the decorated function.
            kwargs: Keyword arguments passed to the decorated function.

        Returns:
            result: The result of the decorated function if successful.

        Raises:
            SolverError: In case the numerical routine fails.
        """
        logger = logging.getLogger(func.__module__)

        try:
            return func(*args, **kwargs)
        except SolverError:
            logger.exception(f"Failed to execute {func.__name__}:")
            raise

    return wrapper


def format_float(value):
    """Format a float for CSV output with round-trip precision.

    Args:
        value: number or None.

    Returns:
        The repr of the float, or an empty string for None.
    """
    if value is None:
        return ""
    return repr(float(value))
