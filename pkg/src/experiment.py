# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Experiment runs, convergence tables, scheme comparisons and writers."""

import csv
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from energy import Density, DensityKind, energy, regularization_error_bound
from errors import SolverError
from exact import ExactSolution, verify_flux_consistency
from fem import (
    DirichletMask,
    FeFunction,
    assemble_mass,
    l2_error,
    m_norm,
    max_norm,
    nodal_interpolate,
    total_variation,
)
from implicit import AdmmParams, run_implicit
from literals import (
    COMPARE_CSV_COLUMNS,
    FLUX_CSV_COLUMNS,
    HALF_WIDTH,
    INITIAL_DATUM,
    RUN_CSV_COLUMNS,
    SNAPSHOT_CSV_COLUMNS,
    STABILITY_CSV_COLUMNS,
    STATUS_FAILED,
    STATUS_OK,
    STATUS_UNSTABLE,
    TABLE_CSV_COLUMNS,
)
from mesh import Mesh, build_square_mesh
from semi_implicit import FlowConfig, StabilityReport, run_semi_implicit
from state import RunMetadata
from structured_config import (
    BoundaryCondition,
    DensityChoice,
    ExperimentConfig,
    Scheme,
    config_echo,
)
from utils import format_float, render

logger = logging.getLogger(__name__)


@dataclass
class ErrorSeries:
    """Errors and energies of one run.

    Attributes:
        times: t_k for k = 0..K.
        l2_errors: L2 distance to the exact solution at t_k.
        energies: energy of the discrete state at t_k.
        metadata: configuration echo and solver statistics.
        report: stability report of semi-implicit runs.
        snapshots: requested time mapped to (k, nodal values).
        mesh: the mesh the run used.
    """

    times: List[float] = field(default_factory=list)
    l2_errors: List[float] = field(default_factory=list)
    energies: List[float] = field(default_factory=list)
    metadata: RunMetadata = field(default_factory=RunMetadata)
    report: Optional[StabilityReport] = None
    snapshots: Dict[float, tuple] = field(default_factory=dict)
    mesh: Optional[Mesh] = None

    @property
    def max_error(self):
        """Maximum of the L2 errors."""
        return max(self.l2_errors)

    def rows(self):
        """One dict per step with the run CSV columns."""
        rows = []
        for k, (t, error, value) in enumerate(
            zip(self.times, self.l2_errors, self.energies)
        ):
            row = {"k": k, "t": t, "l2_error": error, "energy": value}
            if self.report is not None:
                row["kinetic_sum"] = self.report.kinetic[k]
                row["dissipation_sum"] = self.report.dissipation[k]
                row["stability_slack"] = self.report.slack[k]
            rows.append(row)
        return rows


def build_density(cfg):
    """Density selected by a configuration."""
    if cfg.density == DensityChoice.prandtl_eyring:
        return Density(kind=DensityKind.prandtl_eyring)
    return Density.p_dirichlet(cfg.regularization, cfg.p, cfg.eps)


def build_mask(mesh, cfg):
    """Dirichlet mask selected by a configuration."""
    if cfg.bc == BoundaryCondition.dirichlet:
        return DirichletMask.boundary(mesh)
    return DirichletMask.neumann(mesh)


def admm_params(cfg):
    """ADMM parameters selected by a configuration."""
    return AdmmParams(
        rho0=cfg.admm_rho0,
        mu=cfg.admm_mu,
        scale=cfg.admm_scale,
        delta_stop=cfg.admm_delta_stop,
        maxit=cfg.admm_maxit,
        cg_tol=cfg.cg_tol,
    )


def initial_state(mesh, mask, cfg, sol):
    """Initial datum: nodal interpolation of u(0), or zero."""
    if cfg.zero_datum:
        return FeFunction.zeros(mesh)
    return mask.apply(nodal_interpolate(mesh, sol.field(0.0)))


def _snapshot_steps(cfg):
    """Map each requested snapshot time to the closest step index."""
    steps = {}
    for t in cfg.snapshots or ():
        steps[t] = min(int(round(t / cfg.tau)), cfg.num_steps)
    return steps


def run_experiment(cfg: ExperimentConfig):
    """Run one configured experiment against its exact solution.

    Args:
        cfg: validated ExperimentConfig.

    Returns:
        ErrorSeries.

    Raises:
        StepError: if a time step fails.
    """
    mesh = build_square_mesh(cfg.level, HALF_WIDTH)
    sol = ExactSolution(cfg.example)
    mask = build_mask(mesh, cfg)
    u0 = initial_state(mesh, mask, cfg, sol)
    density = build_density(cfg)
    snapshot_steps = _snapshot_steps(cfg)

    series = ErrorSeries(mesh=mesh)
    series.metadata.config = config_echo(cfg)
    series.metadata.update(
        {
            "h": cfg.h,
            "eps": cfg.eps,
            "tau": cfg.tau,
            "num_steps": cfg.num_steps,
            "n_vertices": mesh.n_vertices,
            "n_elements": mesh.n_elements,
            "initial_datum": "zero" if cfg.zero_datum else INITIAL_DATUM,
        }
    )
    if density.is_p_dirichlet and cfg.eps > 0:
        series.metadata.regularization_error_bound = (
            regularization_error_bound(
                cfg.p, cfg.eps, cfg.t_end, cfg.regularization
            )
        )

    def record(k, t, u):
        series.times.append(t)
        series.l2_errors.append(
            l2_error(mesh, u, sol.field(t), subdiv=cfg.subdiv)
        )
        if cfg.scheme == Scheme.implicit_admm:
            series.energies.append(total_variation(mesh, u))
        else:
            series.energies.append(energy(mesh, u, density))
        for requested, step in snapshot_steps.items():
            if step == k:
                series.snapshots[requested] = (k, u.coeffs.copy())

    logger.info(
        f"running {cfg.example} with {cfg.scheme} at level {cfg.level} "
        f"(h={cfg.h:.6g}, eps={cfg.eps:.6g}, tau={cfg.tau:.6g})"
    )
    if cfg.scheme == Scheme.semi:
        flow = FlowConfig(
            density=density,
            tau=cfg.tau,
            t_end=cfg.t_end,
            dirichlet=mask,
            lumped_mass=cfg.lumped_mass,
            cg_tol=cfg.cg_tol,
            keep_history=False,
        )
        trajectory, report = run_semi_implicit(u0, flow, on_step=record)
        series.report = report
        series.metadata.min_stability_slack = min(report.slack)
        series.metadata.mass_matrix = report.mass_matrix
        series.metadata.max_cg_iterations = max(
            [s["cg_iterations"] for s in trajectory.stats], default=0
        )
    else:
        params = None
        if cfg.scheme == Scheme.implicit_admm:
            params = admm_params(cfg)
        trajectory = run_implicit(
            u0,
            cfg.tau,
            cfg.t_end,
            cfg.scheme,
            params=params,
            mask=mask,
            density=density,
            inner_tol=cfg.fp_inner_tol,
            max_inner=cfg.fp_max_inner,
            cg_tol=cfg.cg_tol,
            keep_history=False,
            on_step=record,
        )
        if cfg.scheme == Scheme.implicit_admm:
            series.metadata.delta_stop = cfg.admm_delta_stop
            series.metadata.admm_iterations = [
                s["admm_iterations"] for s in trajectory.stats
            ]
            series.metadata.final_rho = (
                trajectory.stats[-1]["rho"] if trajectory.stats else None
            )
        else:
            series.metadata.fixed_point_sweeps = [
                s["sweeps"] for s in trajectory.stats
            ]

    series.metadata.max_error = series.max_error
    logger.info(f"max L2 error {series.max_error:.6g}")
    return series


@dataclass
class TableRow:
    """One cell of a convergence table.

    Attributes:
        level: refinement level.
        h: mesh size.
        eps_mode: regularization label.
        max_l2_error: maximal L2 error, None when the cell failed.
        rate: log2 of the error ratio to the previous level.
        scheme: time stepping scheme.
        status: ok or failed.
        message: failure description.
    """

    level: int
    h: float
    eps_mode: str
    max_l2_error: Optional[float]
    rate: Optional[float]
    scheme: str
    status: str
    message: str = ""


def _cell_config(base, level, eps_power):
    """Configuration of one table cell."""
    values = base.dict()
    values.update(
        level=level,
        output=None,
        snapshots=None,
        dump_mesh=False,
        workers=1,
    )
    if eps_power is not None:
        values.update(eps_power=eps_power, eps_value=None)
    return ExperimentConfig(**values)


def _run_cell(cfg):
    """Run a table cell, capturing solver failures."""
    try:
        return run_experiment(cfg).max_error, STATUS_OK, ""
    except SolverError as e:
        logger.warning(
            f"table cell level={cfg.level} eps={cfg.eps_mode} failed: {e}"
        )
        return None, STATUS_FAILED, str(e)


def convergence_study(base, levels, eps_powers=None, workers=1):
    """Maximal errors over a range of levels, one column per eps mode.

    Args:
        base: ExperimentConfig shared by all cells.
        levels: ascending nonempty sequence of levels.
        eps_powers: exponents alpha of eps = h^alpha; the base mode when
            None. Ignored by implicit-admm, which always uses eps = 0.
        workers: number of processes running cells concurrently.

    Returns:
        List of TableRow ordered by eps mode, then level.

    Raises:
        ValueError: for an empty or unsorted level range.
    """
    levels = list(levels)
    if not levels:
        raise ValueError("levels must not be empty")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly ascending")
    if eps_powers is None or base.scheme == Scheme.implicit_admm:
        eps_powers = [None]

    cells = [
        _cell_config(base, level, power)
        for power in eps_powers
        for level in levels
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_run_cell, cells))
    else:
        results = [_run_cell(cfg) for cfg in cells]

    rows = []
    previous = {}
    for cfg, (error, status, message) in zip(cells, results):
        before = previous.get(cfg.eps_mode)
        rate = None
        if before is not None and error is not None and error > 0:
            rate = math.log2(before / error)
        previous[cfg.eps_mode] = error
        rows.append(
            TableRow(
                level=cfg.level,
                h=cfg.h,
                eps_mode=cfg.eps_mode,
                max_l2_error=error,
                rate=rate,
                scheme=str(cfg.scheme),
                status=status,
                message=message,
            )
        )
        logger.info(
            f"level {cfg.level} eps={cfg.eps_mode}: "
            f"{format_float(error) or '-'} ({status})"
        )
    return rows


@dataclass
class CompareRow:
    """Difference between two schemes at one time step.

    Attributes:
        k: step index.
        t: time.
        difference: M-norm of the difference of the two states.
        max_norm: running max of the sum of both max norms.
    """

    k: int
    t: float
    difference: float
    max_norm: float


def compare_schemes(cfg, implicit_scheme=Scheme.implicit_fp):
    """Run the semi-implicit and an implicit scheme from the same datum.

    Args:
        cfg: configuration of the semi-implicit run.
        implicit_scheme: implicit-fp (same density) or implicit-admm
            (total variation, eps = 0).

    Returns:
        List of CompareRow for k = 0..K.

    Raises:
        ValueError: if cfg does not select the semi-implicit scheme.
    """
    if cfg.scheme != Scheme.semi:
        raise ValueError("compare runs start from a semi-implicit config")
    implicit_scheme = Scheme(implicit_scheme)
    mesh = build_square_mesh(cfg.level, HALF_WIDTH)
    sol = ExactSolution(cfg.example)
    mask = build_mask(mesh, cfg)
    u0 = initial_state(mesh, mask, cfg, sol)
    density = build_density(cfg)

    semi_states, implicit_states = [], []
    flow = FlowConfig(
        density=density,
        tau=cfg.tau,
        t_end=cfg.t_end,
        dirichlet=mask,
        lumped_mass=cfg.lumped_mass,
        cg_tol=cfg.cg_tol,
        keep_history=False,
    )
    run_semi_implicit(
        u0, flow, on_step=lambda k, t, u: semi_states.append(u.coeffs.copy())
    )
    run_implicit(
        u0,
        cfg.tau,
        cfg.t_end,
        implicit_scheme,
        params=admm_params(cfg),
        mask=mask,
        density=density,
        inner_tol=cfg.fp_inner_tol,
        max_inner=cfg.fp_max_inner,
        cg_tol=cfg.cg_tol,
        keep_history=False,
        on_step=lambda k, t, u: implicit_states.append(u.coeffs.copy()),
    )

    M = assemble_mass(mesh)
    rows, running = [], 0.0
    for k, (semi, implicit) in enumerate(zip(semi_states, implicit_states)):
        running = max(running, max_norm(semi) + max_norm(implicit))
        rows.append(
            CompareRow(
                k=k,
                t=k * cfg.tau,
                difference=m_norm(semi - implicit, M),
                max_norm=running,
            )
        )
    return rows


def _csv_text(columns, rows):
    """Render dict rows as CSV text with round-trip floats."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(column)) for column in columns])
    return buffer.getvalue()


def _cell(value):
    """Format one CSV cell."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_text(path, text):
    """Write a file atomically through a temporary sibling.

    Args:
        path: destination path.
        text: content.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle, temporary = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.remove(temporary)
        raise


def run_csv(series):
    """Run series as CSV text."""
    return _csv_text(RUN_CSV_COLUMNS, series.rows())


def run_json(series):
    """Run series as a JSON object with config, series and report keys."""
    metadata = series.metadata.as_dict()
    document = {
        "config": metadata.pop("config", {}),
        "metadata": metadata,
        "series": series.rows(),
        "report": series.report.as_dict() if series.report else None,
    }
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def table_csv(rows):
    """Convergence table as CSV text."""
    return _csv_text(TABLE_CSV_COLUMNS, [vars(row) for row in rows])


def table_report(rows, base):
    """Markdown report of a convergence table."""
    return render(
        "table.jinja",
        {
            "example": str(base.example),
            "scheme": str(base.scheme),
            "tau_factor": base.tau_factor,
            "t_end": base.t_end,
            "rows": [
                {
                    "level": row.level,
                    "h": f"{row.h:.6f}",
                    "eps_mode": row.eps_mode,
                    "error": "-"
                    if row.max_l2_error is None
                    else f"{row.max_l2_error:.4f}",
                    "rate": "" if row.rate is None else f"{row.rate:.2f}",
                    "status": row.status,
                }
                for row in rows
            ],
        },
    )


def compare_csv(rows):
    """Scheme comparison as CSV text."""
    return _csv_text(COMPARE_CSV_COLUMNS, [vars(row) for row in rows])


def snapshot_csv(mesh, coeffs):
    """Nodal values with coordinates as CSV text."""
    rows = [
        {"x1": float(x1), "x2": float(x2), "value": float(value)}
        for (x1, x2), value in zip(mesh.vertices, coeffs)
    ]
    return _csv_text(SNAPSHOT_CSV_COLUMNS, rows)


def stability_sweep(cfg, taus, steps):
    """Semi-implicit runs of a fixed number of steps for several tau.

    The time step is taken from ``taus`` instead of the tau factor, and the
    final time is ``steps * tau``.

    Args:
        cfg: semi-implicit configuration.
        taus: positive time steps.
        steps: number of steps per run.

    Returns:
        One dict per tau with the stability CSV columns.

    Raises:
        ValueError: for a non semi-implicit scheme or invalid counts.
    """
    if cfg.scheme != Scheme.semi:
        raise ValueError("stability sweeps need the semi-implicit scheme")
    if steps < 1:
        raise ValueError(f"steps must be positive, got {steps}")
    mesh = build_square_mesh(cfg.level, HALF_WIDTH)
    sol = ExactSolution(cfg.example)
    mask = build_mask(mesh, cfg)
    u0 = initial_state(mesh, mask, cfg, sol)
    density = build_density(cfg)

    rows = []
    for tau in taus:
        flow = FlowConfig(
            density=density,
            tau=tau,
            t_end=steps * tau,
            dirichlet=mask,
            lumped_mass=cfg.lumped_mass,
            cg_tol=cfg.cg_tol,
            keep_history=False,
        )
        row = {"tau": tau, "steps": flow.num_steps}
        try:
            _, report = run_semi_implicit(u0, flow)
        except SolverError as e:
            logger.warning(f"stability run with tau={tau:.6g} failed: {e}")
            row["status"] = STATUS_FAILED
            rows.append(row)
            continue
        stable = report.is_stable() and report.energies_nonincreasing()
        row.update(
            min_relative_slack=report.relative_slack(),
            energy_nonincreasing=report.energies_nonincreasing(),
            status=STATUS_OK if stable else STATUS_UNSTABLE,
        )
        logger.info(
            f"tau={tau:.6g}: relative slack "
            f"{row['min_relative_slack']:.3e} ({row['status']})"
        )
        rows.append(row)
    return rows


def flux_checks(example, times, r_min, r_max, step=1e-3, samples=64):
    """Flux consistency of an exact solution at several times.

    Returns:
        One dict per time with the flux CSV columns.
    """
    sol = ExactSolution(example)
    rows = []
    for t in times:
        report = verify_flux_consistency(sol, t, r_min, r_max, step, samples)
        rows.append(
            {
                "example": str(sol.kind),
                "t": t,
                "max_discrepancy": report.max_discrepancy,
                "max_flux_norm": report.max_flux_norm,
                "samples": report.samples,
            }
        )
    return rows


def stability_csv(rows):
    """Stability sweep as CSV text."""
    return _csv_text(STABILITY_CSV_COLUMNS, rows)


def flux_csv(rows):
    """Flux checks as CSV text."""
    return _csv_text(FLUX_CSV_COLUMNS, rows)
