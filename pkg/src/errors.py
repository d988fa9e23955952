# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Exceptions raised by the solvers."""


class SolverError(RuntimeError):
    """Base class for numerical solver failures."""


class ConvergenceError(SolverError):
    """Conjugate gradients did not reach the requested tolerance.

    Attributes:
        residual: relative residual reached at the last iteration.
        iterations: number of iterations performed.
    """

    def __init__(self, residual, iterations):
        """Construct.

        Args:
            residual: relative residual reached at the last iteration.
            iterations: number of iterations performed.
        """
        super().__init__(
            f"CG stopped after {iterations} iterations "
            f"with relative residual {residual:.3e}"
        )
        self.residual = residual
        self.iterations = iterations


class AdmmConvergenceError(SolverError):
    """ADMM exhausted its iteration budget.

    Attributes:
        primal_residual: area-weighted norm of grad v - d.
        dual_residual: area-weighted norm of rho (d - d_prev).
        iterations: number of iterations performed.
    """

    def __init__(self, primal_residual, dual_residual, iterations):
        """Construct.

        Args:
            primal_residual: area-weighted norm of grad v - d.
            dual_residual: area-weighted norm of rho (d - d_prev).
            iterations: number of iterations performed.
        """
        super().__init__(
            f"ADMM stopped after {iterations} iterations with primal "
            f"residual {primal_residual:.3e} and dual residual "
            f"{dual_residual:.3e}"
        )
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
        self.iterations = iterations


class FixedPointError(SolverError):
    """The fixed-point iteration of an implicit step did not settle.

    Attributes:
        increment: M-norm of the last increment.
        iterations: number of sweeps performed.
    """

    def __init__(self, increment, iterations):
        """Construct.

        Args:
            increment: M-norm of the last increment.
            iterations: number of sweeps performed.
        """
        super().__init__(
            f"fixed-point iteration stopped after {iterations} sweeps "
            f"with increment {increment:.3e}"
        )
        self.increment = increment
        self.iterations = iterations


class StepError(SolverError):
    """A time step failed.

    Attributes:
        step: index k of the failing step.
        time: time t_k of the failing step.
    """

    def __init__(self, step, time, cause):
        """Construct.

        Args:
            step: index k of the failing step.
            time: time t_k of the failing step.
            cause: the underlying solver error.
        """
        super().__init__(f"step {step} (t={time:.6g}) failed: {cause}")
        self.step = step
        self.time = time
        self.cause = cause


class SingularMatrixError(SolverError):
    """A dense matrix is singular to working precision."""


class DegenerateElementError(ValueError):
    """An element has zero area."""
