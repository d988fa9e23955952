# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Implicit Euler steps by ADMM (total variation) or fixed-point sweeps."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, validator

from energy import energy
from errors import (
    AdmmConvergenceError,
    FixedPointError,
    SolverError,
    StepError,
)
from fem import (
    DirichletMask,
    FeFunction,
    assemble_gradient,
    assemble_mass,
    assemble_stiffness,
    assemble_weighted_stiffness,
    m_norm,
    total_variation,
)
from linsolve import cg_solve
from literals import (
    ADMM_MAXIT,
    ADMM_MU,
    ADMM_RHO0,
    ADMM_RHO_MAX,
    ADMM_RHO_MIN,
    ADMM_SCALE,
    CG_TOL,
    FP_INNER_TOL,
    FP_MAX_INNER,
)
from semi_implicit import StabilityMonitor, Trajectory, element_weights
from structured_config import Scheme, num_steps
from utils import raise_solver_error

logger = logging.getLogger(__name__)


class AdmmParams(BaseModel):
    """Parameters of the ADMM solver.

    Attributes:
        rho0: initial penalty.
        mu: residual ratio triggering a penalty update.
        scale: penalty multiplier.
        delta_stop: threshold of the combined residual.
        maxit: iteration budget per time step.
        cg_tol: relative tolerance of the inner linear solves.
    """

    rho0: float = ADMM_RHO0
    mu: float = ADMM_MU
    scale: float = ADMM_SCALE
    delta_stop: float
    maxit: int = ADMM_MAXIT
    cg_tol: float = CG_TOL

    class Config:
        """Pydantic options."""

        allow_mutation = False

    @validator("rho0")
    @classmethod
    def rho0_validator(cls, value: float) -> float:
        """Check that the initial penalty lies in the admissible range.

        Args:
            value: initial penalty

        Returns:
            value: the initial penalty

        Raises:
            ValueError: in the case when the value is out of range
        """
        if ADMM_RHO_MIN <= value <= ADMM_RHO_MAX:
            return value
        raise ValueError(f"rho0 must lie in [{ADMM_RHO_MIN}, {ADMM_RHO_MAX}].")

    @validator("mu", "scale")
    @classmethod
    def ratio_validator(cls, value: float) -> float:
        """Check that balance ratio and multiplier exceed one.

        Args:
            value: ratio

        Returns:
            value: the ratio

        Raises:
            ValueError: in the case when the value does not exceed one
        """
        if value > 1.0:
            return value
        raise ValueError("Value must exceed 1.")

    @validator("delta_stop", "cg_tol")
    @classmethod
    def positive_validator(cls, value: float) -> float:
        """Check that tolerances are positive.

        Args:
            value: tolerance

        Returns:
            value: the tolerance

        Raises:
            ValueError: in the case when the value is not positive
        """
        if value > 0:
            return value
        raise ValueError("Value must be positive.")

    @validator("maxit")
    @classmethod
    def maxit_validator(cls, value: int) -> int:
        """Check that the iteration budget is positive.

        Args:
            value: iteration budget

        Returns:
            value: the iteration budget

        Raises:
            ValueError: in the case when the value is not positive
        """
        if value >= 1:
            return value
        raise ValueError("maxit must be at least 1.")


@dataclass
class AdmmState:
    """Iterates of the ADMM solver.

    The multiplier is stored scaled, y = lambda / rho.

    Attributes:
        v: nodal values.
        d: (n_e, 2) gradient splits.
        y: (n_e, 2) scaled multipliers.
        rho: current penalty.
        iterations: iterations of the last solve.
        primal_residual: area-weighted norm of grad v - d.
        dual_residual: area-weighted norm of rho (d - d_prev).
    """

    v: np.ndarray
    d: np.ndarray
    y: np.ndarray
    rho: float
    iterations: int = 0
    primal_residual: float = 0.0
    dual_residual: float = 0.0

    @property
    def lam(self):
        """Unscaled multiplier rho * y."""
        return self.rho * self.y

    @property
    def residual(self):
        """Combined residual sqrt(primal^2 + dual^2)."""
        return float(np.hypot(self.primal_residual, self.dual_residual))


@dataclass
class AdmmSystem:
    """Mesh dependent operators shared by all ADMM steps.

    Attributes:
        mesh: the mesh.
        mask: constrained vertices.
        M: mass matrix.
        K: unit weight stiffness matrix.
        B: gradient matrix (2 n_e, n_v).
        areas2: element areas repeated per gradient component.
    """

    mesh: object
    mask: DirichletMask
    M: sp.csr_matrix
    K: sp.csr_matrix
    B: sp.csr_matrix
    areas2: np.ndarray

    @classmethod
    def build(cls, mesh, mask, M=None):
        """Assemble the operators of a mesh.

        Args:
            mesh: the mesh.
            mask: DirichletMask.
            M: optional mass matrix, consistent by default.

        Returns:
            AdmmSystem.
        """
        return cls(
            mesh=mesh,
            mask=mask,
            M=assemble_mass(mesh) if M is None else M,
            K=assemble_stiffness(mesh),
            B=assemble_gradient(mesh),
            areas2=np.repeat(mesh.areas, 2),
        )

    def weighted_norm(self, field):
        """Area-weighted l2 norm of an element field (n_e, 2)."""
        flat = field.ravel()
        return float(np.sqrt(self.areas2 @ (flat * flat)))


def shrink(q, threshold):
    """Proximal map of threshold * |.| applied row-wise.

    Args:
        q: vector(s) with trailing dimension 2.
        threshold: positive threshold.

    Returns:
        0 where |q| <= threshold, (1 - threshold/|q|) q elsewhere.

    Raises:
        ValueError: for a nonpositive threshold.
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    q = np.asarray(q, dtype=float)
    norms = np.linalg.norm(q, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(norms > threshold, 1.0 - threshold / norms, 0.0)
    return factor * q


def tv_objective(mesh, v, u_prev, tau, M):
    """Implicit Euler objective (1/2 tau) ||v - u_prev||_M^2 + TV(v)."""
    delta = np.asarray(v) - np.asarray(u_prev)
    return 0.5 / tau * m_norm(delta, M) ** 2 + total_variation(mesh, v)


def _clamp(rho):
    """Keep the penalty inside its admissible range."""
    return min(max(rho, ADMM_RHO_MIN), ADMM_RHO_MAX)


def admm_solve(u_prev, tau, params, system, state=None):
    """Run ADMM on the total variation step of u_prev.

    Args:
        u_prev: nodal values of the previous state.
        tau: time step.
        params: AdmmParams.
        system: AdmmSystem of the mesh.
        state: optional AdmmState to warm start d, y and rho from.

    Returns:
        The converged AdmmState.

    Raises:
        AdmmConvergenceError: when maxit iterations do not reach delta_stop.
    """
    mask, B, areas2 = system.mask, system.B, system.areas2
    n_e = system.mesh.n_elements
    u_prev = np.asarray(u_prev, dtype=float)
    if state is None:
        d = (B @ u_prev).reshape(n_e, 2)
        y = np.zeros((n_e, 2))
        rho = params.rho0
    else:
        d, y, rho = state.d.copy(), state.y.copy(), state.rho

    mass_rhs = (system.M @ u_prev) / tau
    v = u_prev.copy()
    operator, operator_rho = None, None
    primal = dual = np.inf
    for iteration in range(1, params.maxit + 1):
        if operator_rho != rho:
            operator = mask.restrict(system.M / tau + rho * system.K)
            operator_rho = rho
        rhs = mass_rhs + rho * (B.T @ (areas2 * (d - y).ravel()))
        v_free = cg_solve(
            operator, rhs[mask.free], tol=params.cg_tol, x0=v[mask.free]
        )
        v = mask.expand(v_free)

        gradient = (B @ v).reshape(n_e, 2)
        d_prev = d
        d = shrink(gradient + y, 1.0 / rho)
        y = y + gradient - d

        primal = system.weighted_norm(gradient - d)
        dual = rho * system.weighted_norm(d - d_prev)
        if np.hypot(primal, dual) <= params.delta_stop:
            logger.debug(
                f"ADMM converged in {iteration} iterations: primal "
                f"{primal:.3e}, dual {dual:.3e}, rho {rho:.3e}"
            )
            return AdmmState(
                v=v,
                d=d,
                y=y,
                rho=rho,
                iterations=iteration,
                primal_residual=primal,
                dual_residual=dual,
            )

        if primal > params.mu * dual:
            updated = _clamp(rho * params.scale)
        elif dual > params.mu * primal:
            updated = _clamp(rho / params.scale)
        else:
            updated = rho
        y = y * (rho / updated)
        rho = updated

    raise AdmmConvergenceError(primal, dual, params.maxit)


def implicit_step_admm(
    u_prev, tau, params, mask, M=None, state=None, system=None
):
    """Implicit Euler step of the total variation flow.

    Args:
        u_prev: previous state, zero at constrained vertices.
        tau: time step.
        params: AdmmParams.
        mask: DirichletMask.
        M: optional mass matrix.
        state: optional AdmmState; warm starts the solve and receives the
            final iterates.
        system: optional prebuilt AdmmSystem.

    Returns:
        The new state.

    Raises:
        ValueError: for a nonpositive step or a state violating the mask.
        AdmmConvergenceError: if ADMM does not converge.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if not u_prev.satisfies(mask):
        raise ValueError("previous state violates the Dirichlet constraint")
    mesh = u_prev.mesh
    if system is None:
        system = AdmmSystem.build(mesh, mask, M)
    result = admm_solve(u_prev.coeffs, tau, params, system, state)
    if state is not None:
        state.v, state.d, state.y, state.rho = (
            result.v,
            result.d,
            result.y,
            result.rho,
        )
        state.iterations = result.iterations
        state.primal_residual = result.primal_residual
        state.dual_residual = result.dual_residual
    return FeFunction(mesh, result.v)


@dataclass
class FixedPointInfo:
    """Statistics of a fixed-point implicit step.

    Attributes:
        sweeps: number of linear solves.
        increment: M-norm of the last increment.
    """

    sweeps: int = 0
    increment: float = 0.0


def implicit_step_fixedpoint(
    u_prev,
    tau,
    d,
    inner_tol=FP_INNER_TOL,
    max_inner=FP_MAX_INNER,
    mask=None,
    M=None,
    monitor=False,
    cg_tol=CG_TOL,
    info=None,
):
    """Implicit Euler step by repeated semi-implicit sweeps.

    Each sweep solves (M + tau K_w) w = M u_prev with weights frozen at the
    previous sweep, starting from w = u_prev.

    Args:
        u_prev: previous state.
        tau: time step.
        d: Density.
        inner_tol: threshold of the M-norm of the sweep increment.
        max_inner: sweep budget.
        mask: DirichletMask, pure Neumann by default.
        M: optional mass matrix, consistent by default.
        monitor: if True, return the StabilityReport of the sweeps for the
            objective (1/2 tau) ||w - u_prev||^2 + E[w] as well.
        cg_tol: relative tolerance of the linear solves.
        info: optional FixedPointInfo receiving the statistics.

    Returns:
        The new state, or (state, StabilityReport) when monitor is True.

    Raises:
        ValueError: for an unregularized p-Dirichlet density.
        FixedPointError: if max_inner sweeps do not settle.
    """
    if d.is_p_dirichlet and d.eps <= 0:
        raise ValueError("fixed-point sweeps need eps > 0")
    mesh = u_prev.mesh
    mask = DirichletMask.neumann(mesh) if mask is None else mask
    M = assemble_mass(mesh) if M is None else M
    info = info if info is not None else FixedPointInfo()

    def objective(w):
        return 0.5 / tau * m_norm(w - u_prev.coeffs, M) ** 2 + energy(
            mesh, w, d
        )

    tracker = None
    if monitor:
        tracker = StabilityMonitor(
            objective(u_prev.coeffs), kinetic_factor=0.5 / tau
        )

    rhs_full = M @ u_prev.coeffs
    w = u_prev.coeffs.copy()
    increment = np.inf
    for sweep in range(1, max_inner + 1):
        weights = element_weights(mesh, w, d)
        stiffness = _weighted_system(mesh, M, tau, weights)
        w_free = cg_solve(
            mask.restrict(stiffness),
            rhs_full[mask.free],
            tol=cg_tol,
            x0=w[mask.free],
        )
        w_next = mask.expand(w_free)
        increment = m_norm(w_next - w, M)
        if tracker is not None:
            tracker.record_step(mesh, w, w_next, weights, M, objective(w_next))
        w = w_next
        if increment <= inner_tol:
            info.sweeps, info.increment = sweep, increment
            logger.debug(
                f"fixed point settled after {sweep} sweeps, "
                f"increment {increment:.3e}"
            )
            result = FeFunction(mesh, w)
            return (result, tracker.report) if monitor else result

    info.sweeps, info.increment = max_inner, increment
    raise FixedPointError(increment, max_inner)


def _weighted_system(mesh, M, tau, weights):
    """System matrix M + tau K_w."""
    return M + tau * assemble_weighted_stiffness(mesh, weights)


@raise_solver_error
def run_implicit(
    u0,
    tau,
    t_end,
    scheme,
    params=None,
    mask=None,
    density=None,
    inner_tol=FP_INNER_TOL,
    max_inner=FP_MAX_INNER,
    cg_tol=CG_TOL,
    keep_history=True,
    on_step: Optional[Callable] = None,
):
    """Run floor(T / tau) implicit Euler steps.

    Args:
        u0: initial state.
        tau: time step.
        t_end: final time.
        scheme: Scheme.implicit_admm or Scheme.implicit_fp.
        params: AdmmParams, required for ADMM.
        mask: DirichletMask, pure Neumann by default.
        density: Density, required for the fixed-point scheme.
        inner_tol: fixed-point increment threshold.
        max_inner: fixed-point sweep budget.
        cg_tol: relative tolerance of the fixed-point linear solves.
        keep_history: retain every state instead of the first and last.
        on_step: optional callable ``on_step(k, t_k, u_k)`` for k = 0..K.

    Returns:
        Trajectory with per-step solver statistics.

    Raises:
        ValueError: for missing parameters or an unknown scheme.
        StepError: wrapping the solver failure of a step.
    """
    scheme = Scheme(scheme)
    if scheme == Scheme.implicit_admm and params is None:
        raise ValueError("ADMM needs AdmmParams")
    if scheme == Scheme.implicit_fp and density is None:
        raise ValueError("the fixed-point scheme needs a density")
    if scheme == Scheme.semi:
        raise ValueError("use run_semi_implicit for the semi-implicit scheme")
    if tau <= 0 or t_end <= 0:
        raise ValueError("tau and t_end must be positive")

    mesh = u0.mesh
    mask = DirichletMask.neumann(mesh) if mask is None else mask
    if not u0.satisfies(mask):
        raise ValueError("initial state violates the Dirichlet constraint")
    M = assemble_mass(mesh)
    system = AdmmSystem.build(mesh, mask, M)
    admm_state = None

    trajectory = Trajectory(times=[0.0])
    trajectory.retain(0, u0.copy(), True)
    if on_step is not None:
        on_step(0, 0.0, u0)

    K = num_steps(t_end, tau)
    logger.info(f"{scheme} run: {K} steps, tau={tau:.6g}")
    u_prev = u0
    for k in range(1, K + 1):
        t_k = k * tau
        try:
            if scheme == Scheme.implicit_admm:
                admm_state = admm_solve(
                    u_prev.coeffs, tau, params, system, admm_state
                )
                u = FeFunction(mesh, admm_state.v)
                stats = {
                    "admm_iterations": admm_state.iterations,
                    "primal_residual": admm_state.primal_residual,
                    "dual_residual": admm_state.dual_residual,
                    "rho": admm_state.rho,
                }
            else:
                info = FixedPointInfo()
                u = implicit_step_fixedpoint(
                    u_prev,
                    tau,
                    density,
                    inner_tol=inner_tol,
                    max_inner=max_inner,
                    mask=mask,
                    M=M,
                    cg_tol=cg_tol,
                    info=info,
                )
                stats = {"sweeps": info.sweeps, "increment": info.increment}
        except SolverError as e:
            raise StepError(k, t_k, e) from e

        logger.debug(f"step {k}: t={t_k:.6g} {stats}")
        trajectory.times.append(t_k)
        trajectory.stats.append(stats)
        trajectory.retain(k, u, keep_history)
        if on_step is not None:
            on_step(k, t_k, u)
        u_prev = u
    return trajectory


def tv_history(trajectory):
    """Total variation of every retained state."""
    return [total_variation(u.mesh, u) for u in trajectory.states]
