# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Semi-implicit time stepping with a per-step energy stability check."""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel, root_validator, validator

from energy import Density, DensityKind, energy
from errors import SolverError, StepError
from fem import (
    DirichletMask,
    FeFunction,
    assemble_mass,
    assemble_weighted_stiffness,
    element_gradients,
    m_norm,
)
from linsolve import CgInfo, cg_solve
from literals import (
    CG_TOL,
    PRANDTL_EYRING_SAFEGUARD_RADIUS,
    STABILITY_REL_TOL,
)
from structured_config import num_steps
from utils import raise_solver_error

logger = logging.getLogger(__name__)


class FlowConfig(BaseModel):
    """Parameters of a semi-implicit run.

    Attributes:
        density: the Orlicz density driving the flow.
        tau: time step.
        t_end: final time T; floor(T / tau) steps are taken.
        dirichlet: constrained vertices.
        lumped_mass: use the lumped mass matrix in the linear systems.
        cg_tol: relative CG tolerance.
        keep_history: retain every state instead of the first and last.
    """

    density: Density
    tau: float
    t_end: float
    dirichlet: DirichletMask
    lumped_mass: bool = False
    cg_tol: float = CG_TOL
    keep_history: bool = True

    class Config:
        """Pydantic options."""

        arbitrary_types_allowed = True
        allow_mutation = False

    @validator("tau", "t_end", "cg_tol")
    @classmethod
    def positive_validator(cls, value: float) -> float:
        """Check that step, final time and tolerance are positive.

        Args:
            value: configuration value

        Returns:
            value: the validated value

        Raises:
            ValueError: in the case when the value is not positive
        """
        if value > 0:
            return value
        raise ValueError("Value must be positive.")

    @root_validator(skip_on_failure=True)
    @classmethod
    def flow_validator(cls, values):
        """Check the step against the final time and the density.

        Args:
            values: field values

        Returns:
            values: unchanged

        Raises:
            ValueError: for tau > t_end or an unregularized p-Dirichlet
                density
        """
        if values["tau"] > values["t_end"]:
            raise ValueError("tau must not exceed t_end.")
        density = values["density"]
        if density.is_p_dirichlet and density.eps <= 0:
            raise ValueError("the semi-implicit scheme needs eps > 0.")
        return values

    @property
    def num_steps(self):
        """Number of steps floor(T / tau)."""
        return num_steps(self.t_end, self.tau)


@dataclass
class StabilityReport:
    """Energy bookkeeping of a trajectory.

    Index L refers to the prefix of the first L steps; entry 0 is the
    initial state.

    Attributes:
        energies: E[u^L].
        kinetic: running kinetic sums.
        dissipation: running dissipation sums.
        slack: E[u^0] - (E[u^L] + kinetic + dissipation).
        mass_matrix: which mass matrix measured the kinetic term.
    """

    energies: List[float] = field(default_factory=list)
    kinetic: List[float] = field(default_factory=list)
    dissipation: List[float] = field(default_factory=list)
    slack: List[float] = field(default_factory=list)
    mass_matrix: str = "consistent"

    @property
    def initial_energy(self):
        """Energy of the initial state."""
        return self.energies[0] if self.energies else 0.0

    def relative_slack(self):
        """Minimum slack scaled by the initial energy."""
        minimum = stability_slack(self)
        scale = abs(self.initial_energy)
        return minimum / scale if scale > 0 else minimum

    def energies_nonincreasing(self, rel_tol=STABILITY_REL_TOL):
        """Whether the energy never grows by more than rel_tol E[u^0]."""
        increments = np.diff(self.energies)
        tol = rel_tol * max(abs(self.initial_energy), 1e-300)
        return bool(np.all(increments <= tol))

    def is_stable(self, rel_tol=STABILITY_REL_TOL):
        """Whether every prefix satisfies the inequality up to rel_tol."""
        tol = rel_tol * abs(self.initial_energy)
        return stability_slack(self) >= -tol

    def as_dict(self):
        """JSON-compatible view of the report."""
        return {
            "energies": list(self.energies),
            "kinetic": list(self.kinetic),
            "dissipation": list(self.dissipation),
            "slack": list(self.slack),
            "min_slack": stability_slack(self) if self.slack else None,
            "mass_matrix": self.mass_matrix,
        }


class StabilityMonitor:
    """Accumulates the discrete energy inequality along a trajectory.

    For increments delta_k = u^k - u^{k-1} the kinetic term adds
    ``kinetic_factor * ||delta_k||^2`` and the dissipation term adds
    ``1/2 sum_T |T| w_T^{k-1} |grad delta_k|^2``. With kinetic_factor = 1/tau
    these are tau ||d_t u^k||^2 and (tau^2/2) int w |d_t grad u^k|^2.
    """

    def __init__(
        self, initial_energy, kinetic_factor, mass_matrix="consistent"
    ):
        """Construct.

        Args:
            initial_energy: energy of the first state.
            kinetic_factor: factor of the squared increment norms.
            mass_matrix: label of the matrix measuring increments.
        """
        self.kinetic_factor = kinetic_factor
        self.report = StabilityReport(
            energies=[float(initial_energy)],
            kinetic=[0.0],
            dissipation=[0.0],
            slack=[0.0],
            mass_matrix=mass_matrix,
        )

    def record(self, energy_value, increment_norm_sq, dissipation_integral):
        """Add one step.

        Args:
            energy_value: energy of the new state.
            increment_norm_sq: squared norm of the increment.
            dissipation_integral: sum_T |T| w_T |grad delta_T|^2.

        Returns:
            The slack of the extended prefix.
        """
        report = self.report
        report.energies.append(float(energy_value))
        report.kinetic.append(
            report.kinetic[-1] + self.kinetic_factor * increment_norm_sq
        )
        report.dissipation.append(
            report.dissipation[-1] + 0.5 * dissipation_integral
        )
        slack = report.energies[0] - (
            report.energies[-1] + report.kinetic[-1] + report.dissipation[-1]
        )
        report.slack.append(float(slack))
        return slack

    def record_step(self, mesh, previous, current, weights, M, energy_value):
        """Add the step from ``previous`` to ``current``.

        Args:
            mesh: the mesh.
            previous: nodal values before the step.
            current: nodal values after the step.
            weights: element weights frozen during the step.
            M: matrix measuring the increment.
            energy_value: energy of ``current``.

        Returns:
            The slack of the extended prefix.
        """
        delta = np.asarray(current) - np.asarray(previous)
        gradient = element_gradients(mesh, delta)
        dissipation = float(
            mesh.areas @ (weights * np.einsum("ij,ij->i", gradient, gradient))
        )
        return self.record(energy_value, m_norm(delta, M) ** 2, dissipation)


@dataclass
class Trajectory:
    """States of a run.

    Attributes:
        times: t_k for every step k = 0..K.
        steps: indices of the retained states.
        states: retained states, aligned with ``steps``.
        stats: solver statistics per step 1..K.
    """

    times: List[float] = field(default_factory=list)
    steps: List[int] = field(default_factory=list)
    states: List[FeFunction] = field(default_factory=list)
    stats: List[dict] = field(default_factory=list)

    @property
    def final(self):
        """Last state."""
        return self.states[-1]

    def retain(self, k, state, keep_history):
        """Store state k, dropping the previous one in rolling mode."""
        if not keep_history and len(self.states) == 2:
            self.steps.pop()
            self.states.pop()
        self.steps.append(k)
        self.states.append(state)


def backward_difference(c_k, c_prev, tau):
    """Backward difference quotient (c^k - c^{k-1}) / tau."""
    return (np.asarray(c_k) - np.asarray(c_prev)) / tau


def product_rule_gap(c_k, c_prev, b_k, b_prev, tau):
    """Defect of d_t(c b) = (d_t c) b^{k-1} + c^k d_t b."""
    return (
        backward_difference(
            np.multiply(c_k, b_k), np.multiply(c_prev, b_prev), tau
        )
        - backward_difference(c_k, c_prev, tau) * b_prev
        - np.asarray(c_k) * backward_difference(b_k, b_prev, tau)
    )


def quotient_rule_gap(c_k, c_prev, tau):
    """Defect of d_t(1/c) = -d_t c / (c^{k-1} c^k)."""
    return backward_difference(
        1.0 / np.asarray(c_k), 1.0 / np.asarray(c_prev), tau
    ) + backward_difference(c_k, c_prev, tau) / (
        np.asarray(c_prev) * np.asarray(c_k)
    )


def product_identity_gap(c_k, c_prev, tau):
    """Defect of c^k d_t c^k = d_t |c^k|^2 / 2 + tau |d_t c^k|^2 / 2."""
    d_c = backward_difference(c_k, c_prev, tau)
    return (
        np.asarray(c_k) * d_c
        - 0.5 * backward_difference(np.square(c_k), np.square(c_prev), tau)
        - 0.5 * tau * np.square(d_c)
    )


def element_weights(mesh, u, density):
    """Frozen weights phi'(|g_T|)/|g_T| of the semi-implicit step.

    Zero gradients under the Prandtl-Eyring density use the weight at a tiny
    positive radius.

    Args:
        mesh: the mesh.
        u: FeFunction or nodal array.
        density: Density.

    Returns:
        (n_e,) array of positive weights.
    """
    norms = np.linalg.norm(element_gradients(mesh, u), axis=1)
    if density.kind == DensityKind.prandtl_eyring:
        flat = norms == 0.0
        if np.any(flat):
            logger.warning(
                f"{int(np.count_nonzero(flat))} element(s) with zero "
                "gradient; evaluating the Prandtl-Eyring weight at "
                f"r={PRANDTL_EYRING_SAFEGUARD_RADIUS}"
            )
            norms = np.where(flat, PRANDTL_EYRING_SAFEGUARD_RADIUS, norms)
    return np.asarray(density.weight(norms), dtype=float)


def _solve_step(u_prev, cfg, M, mesh, weights, info=None):
    """Solve (M + tau K_w) u = M u_prev on the free vertices."""
    mask = cfg.dirichlet
    coeffs = u_prev.coeffs if isinstance(u_prev, FeFunction) else u_prev
    stiffness = assemble_weighted_stiffness(mesh, weights)
    system = mask.restrict(M + cfg.tau * stiffness)
    rhs = (M @ coeffs)[mask.free]
    solution = cg_solve(
        system, rhs, tol=cfg.cg_tol, x0=coeffs[mask.free], info=info
    )
    return FeFunction(mesh, mask.expand(solution))


def semi_implicit_step(u_prev, cfg, M, mesh):
    """One step of the semi-implicit scheme.

    Args:
        u_prev: previous state, zero at constrained vertices.
        cfg: FlowConfig.
        M: mass matrix of the linear system.
        mesh: the mesh.

    Returns:
        The new state.

    Raises:
        ValueError: if u_prev violates the Dirichlet mask.
    """
    if not u_prev.satisfies(cfg.dirichlet):
        raise ValueError("previous state violates the Dirichlet constraint")
    weights = element_weights(mesh, u_prev, cfg.density)
    return _solve_step(u_prev, cfg, M, mesh, weights)


@raise_solver_error
def run_semi_implicit(
    u0,
    cfg,
    on_step: Optional[Callable] = None,
):
    """Run floor(T / tau) semi-implicit steps from u0.

    Args:
        u0: initial state, zero at constrained vertices.
        cfg: FlowConfig.
        on_step: optional callable ``on_step(k, t_k, u_k)`` invoked for
            k = 0..K.

    Returns:
        The Trajectory and its StabilityReport.

    Raises:
        ValueError: if u0 violates the Dirichlet mask.
        StepError: wrapping the solver failure of a step.
    """
    mesh = u0.mesh
    if not u0.satisfies(cfg.dirichlet):
        raise ValueError("initial state violates the Dirichlet constraint")

    consistent = assemble_mass(mesh)
    system_mass = consistent
    label = "consistent"
    if cfg.lumped_mass:
        system_mass = assemble_mass(mesh, lumped=True)
        label = "consistent (system: lumped)"
    monitor = StabilityMonitor(
        energy(mesh, u0, cfg.density),
        kinetic_factor=1.0 / cfg.tau,
        mass_matrix=label,
    )
    trajectory = Trajectory(times=[0.0])
    trajectory.retain(0, u0.copy(), True)
    if on_step is not None:
        on_step(0, 0.0, u0)

    K = cfg.num_steps
    logger.info(
        f"semi-implicit run: {K} steps, tau={cfg.tau:.6g}, "
        f"density={cfg.density.kind} p={cfg.density.p} "
        f"eps={cfg.density.eps:.6g}"
    )
    u_prev = u0
    for k in range(1, K + 1):
        t_k = k * cfg.tau
        info = CgInfo()
        try:
            weights = element_weights(mesh, u_prev, cfg.density)
            u = _solve_step(u_prev, cfg, system_mass, mesh, weights, info)
        except SolverError as e:
            raise StepError(k, t_k, e) from e

        energy_k = energy(mesh, u, cfg.density)
        slack = monitor.record_step(
            mesh, u_prev.coeffs, u.coeffs, weights, consistent, energy_k
        )
        logger.debug(
            f"step {k}: t={t_k:.6g} energy={energy_k:.12g} "
            f"slack={slack:.3e} cg_iterations={info.iterations}"
        )
        trajectory.times.append(t_k)
        trajectory.stats.append(
            {"cg_iterations": info.iterations, "cg_residual": info.residual}
        )
        trajectory.retain(k, u, cfg.keep_history)
        if on_step is not None:
            on_step(k, t_k, u)
        u_prev = u

    return trajectory, monitor.report


def stability_slack(report):
    """Minimum slack over all prefixes.

    Args:
        report: a nonempty StabilityReport.

    Returns:
        The minimum slack.

    Raises:
        ValueError: for an empty report.
    """
    if not report.slack:
        raise ValueError("empty stability report")
    return float(min(report.slack))


def audit_trajectory(states, cfg):
    """Rebuild the stability report of a given sequence of states.

    Args:
        states: FeFunctions u^0, ..., u^L on one mesh.
        cfg: FlowConfig providing the density and the step size.

    Returns:
        StabilityReport evaluated with the weights of each previous state.

    Raises:
        ValueError: for an empty sequence.
    """
    if not states:
        raise ValueError("no states to audit")
    mesh = states[0].mesh
    consistent = assemble_mass(mesh)
    monitor = StabilityMonitor(
        energy(mesh, states[0], cfg.density), kinetic_factor=1.0 / cfg.tau
    )
    for previous, current in zip(states, states[1:]):
        weights = element_weights(mesh, previous, cfg.density)
        monitor.record_step(
            mesh,
            previous.coeffs,
            current.coeffs,
            weights,
            consistent,
            energy(mesh, current, cfg.density),
        )
    return monitor.report
