#!/usr/bin/env python3
# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Implicit scheme unit tests."""

import logging
import math
from unittest import TestCase

import numpy as np
import pytest
from pydantic import ValidationError

from energy import Density, DensityKind, energy
from errors import AdmmConvergenceError, FixedPointError, StepError
from fem import (
    DirichletMask,
    FeFunction,
    assemble_mass,
    m_norm,
    nodal_interpolate,
    total_variation,
)
from implicit import (
    AdmmParams,
    AdmmState,
    AdmmSystem,
    FixedPointInfo,
    admm_solve,
    implicit_step_admm,
    implicit_step_fixedpoint,
    run_implicit,
    shrink,
    tv_history,
    tv_objective,
)
from literals import HALF_WIDTH
from mesh import build_square_mesh, mesh_size
from structured_config import Scheme

logger = logging.getLogger(__name__)

PARAMS = AdmmParams(delta_stop=1e-10)
DOMAIN_AREA = (2 * HALF_WIDTH) ** 2


def disk(points):
    """Closed unit disk indicator."""
    return (np.linalg.norm(points, axis=1) <= 1.0).astype(float)


def disk_datum(level):
    """Disk datum with homogeneous boundary values."""
    m = build_square_mesh(level, 1.5)
    mask = DirichletMask.boundary(m)
    return m, mask, mask.apply(nodal_interpolate(m, disk))


class TestAdmmParams(TestCase):
    """Validation of ADMM parameters."""

    def test_defaults(self):
        self.assertEqual(PARAMS.rho0, 1.0)
        self.assertEqual(PARAMS.mu, 10.0)
        self.assertEqual(PARAMS.scale, 2.0)

    def test_invalid_values(self):
        for values in (
            {"rho0": 1e9},
            {"rho0": 0.0},
            {"mu": 1.0},
            {"scale": 0.5},
            {"delta_stop": 0.0},
            {"maxit": 0},
        ):
            with self.subTest(values=values):
                with self.assertRaises(ValidationError):
                    AdmmParams(**{"delta_stop": 1e-8, **values})


def test_shrink_examples():
    assert np.allclose(shrink(np.array([3.0, 4.0]), 1.0), [2.4, 3.2])
    assert np.array_equal(shrink(np.array([0.3, 0.4]), 1.0), [0.0, 0.0])
    assert np.array_equal(shrink(np.zeros((3, 2)), 0.5), np.zeros((3, 2)))
    rows = shrink(np.array([[3.0, 4.0], [0.0, 0.1]]), 1.0)
    assert np.allclose(rows, [[2.4, 3.2], [0.0, 0.0]])
    with pytest.raises(ValueError):
        shrink(np.ones(2), 0.0)


def test_admm_zero_step():
    m, mask, _ = disk_datum(2)
    system = AdmmSystem.build(m, mask)
    state = admm_solve(np.zeros(m.n_vertices), 0.1, PARAMS, system)
    assert np.all(state.v == 0.0)
    assert state.iterations == 1
    assert state.residual == 0.0


@pytest.mark.parametrize("tau", [0.01, 0.1, 1.0])
def test_admm_single_free_vertex(tau):
    """With one free vertex the step scales the hat function."""
    m, mask, u_prev = disk_datum(1)
    (center,) = mask.free
    assert u_prev.coeffs[center] == 1.0
    M = assemble_mass(m)
    hat = np.zeros(m.n_vertices)
    hat[center] = 1.0
    tv_hat = total_variation(m, hat)
    alpha = max(1.0 - tau * tv_hat / M[center, center], 0.0)

    u = implicit_step_admm(u_prev, tau, PARAMS, mask)
    assert u.coeffs[center] == pytest.approx(alpha, abs=1e-5)
    assert np.all(u.coeffs[mask.constrained] == 0.0)


def test_admm_step_decreases_objective():
    m, mask, u_prev = disk_datum(3)
    tau = 0.05
    M = assemble_mass(m)
    u = implicit_step_admm(u_prev, tau, PARAMS, mask, M=M)
    value = tv_objective(m, u.coeffs, u_prev.coeffs, tau, M)
    assert value <= tv_objective(m, u_prev.coeffs, u_prev.coeffs, tau, M)
    assert value <= tv_objective(
        m, np.zeros(m.n_vertices), u_prev.coeffs, tau, M
    )
    rng = np.random.default_rng(8)
    for _ in range(5):
        trial = u.coeffs.copy()
        trial[mask.free] += 1e-3 * rng.standard_normal(len(mask.free))
        assert value <= tv_objective(
            m, trial, u_prev.coeffs, tau, M
        ) + 1e-7


def test_admm_warm_start_state():
    m, mask, u_prev = disk_datum(2)
    state = AdmmState(
        v=u_prev.coeffs.copy(),
        d=np.zeros((m.n_elements, 2)),
        y=np.zeros((m.n_elements, 2)),
        rho=1.0,
    )
    first = implicit_step_admm(u_prev, 0.05, PARAMS, mask, state=state)
    assert state.iterations >= 1
    assert np.array_equal(state.v, first.coeffs)
    assert state.residual <= PARAMS.delta_stop
    assert 1e-8 <= state.rho <= 1e8


def test_admm_budget_exhausted():
    m, mask, u_prev = disk_datum(3)
    params = AdmmParams(delta_stop=1e-14, maxit=2)
    system = AdmmSystem.build(m, mask)
    with pytest.raises(AdmmConvergenceError) as excinfo:
        admm_solve(u_prev.coeffs, 0.1, params, system)
    assert excinfo.value.iterations == 2


def test_admm_step_rejects_bad_input():
    m, mask, u_prev = disk_datum(1)
    with pytest.raises(ValueError):
        implicit_step_admm(u_prev, 0.0, PARAMS, mask)
    with pytest.raises(ValueError):
        implicit_step_admm(
            FeFunction(m, np.ones(m.n_vertices)), 0.1, PARAMS, mask
        )


def test_fixedpoint_constant_state():
    m = build_square_mesh(2, 1.5)
    density = Density(kind=DensityKind.p_dirichlet_standard, p=1.0, eps=0.1)
    info = FixedPointInfo()
    u = implicit_step_fixedpoint(
        FeFunction(m, np.full(m.n_vertices, 2.0)), 0.5, density, info=info
    )
    assert np.allclose(u.coeffs, 2.0, atol=1e-12)
    assert info.sweeps == 1


def test_fixedpoint_monitor_is_stable():
    m, mask, u_prev = disk_datum(3)
    density = Density(kind=DensityKind.p_dirichlet_standard, p=1.0, eps=0.1)
    u, report = implicit_step_fixedpoint(
        u_prev, 0.5, density, mask=mask, monitor=True, cg_tol=1e-12
    )
    assert u.satisfies(mask)
    assert len(report.slack) >= 2
    assert report.is_stable(1e-9)
    assert report.energies_nonincreasing(1e-9)


def test_fixedpoint_agrees_with_admm():
    """Regularized and total variation steps differ by O(sqrt(eps)).

    The standard density satisfies s - eps <= phi(s) <= s, so the two
    step objectives differ by at most eps |Omega|. Both are 1/tau strongly
    convex in the mass norm, hence ||v_eps - v||_M^2 <= 2 tau eps |Omega|.
    """
    m, mask, u_prev = disk_datum(2)
    tau, eps = 0.1, 0.01
    density = Density(kind=DensityKind.p_dirichlet_standard, p=1.0, eps=eps)
    M = assemble_mass(m)
    regularized = implicit_step_fixedpoint(
        u_prev, tau, density, inner_tol=1e-9, max_inner=5000, mask=mask, M=M
    )
    tv = implicit_step_admm(u_prev, tau, PARAMS, mask, M=M)
    bound = math.sqrt(2 * tau * eps * DOMAIN_AREA)
    assert m_norm(regularized.coeffs - tv.coeffs, M) <= bound + 1e-6


def test_fixedpoint_matches_admm_for_tiny_eps():
    m, mask, u_prev = disk_datum(2)
    tau = mesh_size(m) / 4
    density = Density(kind=DensityKind.p_dirichlet_standard, p=1.0, eps=1e-6)
    M = assemble_mass(m)
    regularized = implicit_step_fixedpoint(
        u_prev,
        tau,
        density,
        inner_tol=1e-10,
        max_inner=5000,
        mask=mask,
        M=M,
    )
    tv = implicit_step_admm(u_prev, tau, PARAMS, mask, M=M)
    assert m_norm(regularized.coeffs - tv.coeffs, M) <= 1e-3


def test_fixedpoint_variational_inequality():
    """The step satisfies (-d_t u, v - u)_M + E[u] <= E[v]."""
    m, mask, u_prev = disk_datum(2)
    tau = mesh_size(m) / 4
    density = Density(kind=DensityKind.p_dirichlet_standard, p=1.0, eps=0.01)
    M = assemble_mass(m)
    u = implicit_step_fixedpoint(
        u_prev,
        tau,
        density,
        inner_tol=1e-10,
        max_inner=5000,
        mask=mask,
        M=M,
    )
    dtu = (u.coeffs - u_prev.coeffs) / tau
    e_u = energy(m, u.coeffs, density)
    rng = np.random.default_rng(2024)
    for _ in range(20):
        noise = 0.5 * rng.standard_normal(m.n_vertices)
        v = mask.apply(FeFunction(m, u.coeffs + noise)).coeffs
        lhs = -(dtu @ (M @ (v - u.coeffs))) + e_u
        assert lhs <= energy(m, v, density) + 1e-8


def test_fixedpoint_failures():
    m, mask, u_prev = disk_datum(3)
    unregularized = Density(kind=DensityKind.p_dirichlet_standard, eps=0.0)
    with pytest.raises(ValueError):
        implicit_step_fixedpoint(u_prev, 0.1, unregularized, mask=mask)
    density = Density(kind=DensityKind.p_dirichlet_standard, p=1.0, eps=1e-3)
    info = FixedPointInfo()
    with pytest.raises(FixedPointError):
        implicit_step_fixedpoint(
            u_prev,
            1.0,
            density,
            inner_tol=1e-14,
            max_inner=1,
            mask=mask,
            info=info,
        )
    assert info.sweeps == 1


def test_run_implicit_zero_datum():
    m = build_square_mesh(2, 1.5)
    trajectory = run_implicit(
        FeFunction.zeros(m), 0.1, 0.3, Scheme.implicit_admm, params=PARAMS
    )
    assert trajectory.steps == [0, 1, 2, 3]
    assert all(np.all(u.coeffs == 0.0) for u in trajectory.states)
    assert all(s["admm_iterations"] == 1 for s in trajectory.stats)


def test_run_implicit_total_variation_decreases():
    m, mask, u0 = disk_datum(3)
    calls = []
    trajectory = run_implicit(
        u0,
        0.05,
        0.25,
        Scheme.implicit_admm,
        params=PARAMS,
        mask=mask,
        on_step=lambda k, t, u: calls.append(k),
    )
    assert calls == [0, 1, 2, 3, 4, 5]
    history = tv_history(trajectory)
    assert all(new <= old + 1e-6 for old, new in zip(history, history[1:]))


def test_run_implicit_fixedpoint():
    m, mask, u0 = disk_datum(2)
    density = Density(kind=DensityKind.p_dirichlet_standard, p=1.0, eps=0.1)
    trajectory = run_implicit(
        u0,
        0.1,
        0.2,
        Scheme.implicit_fp,
        mask=mask,
        density=density,
        keep_history=False,
    )
    assert trajectory.steps == [0, 2]
    assert all(s["sweeps"] >= 1 for s in trajectory.stats)


def test_run_implicit_argument_errors():
    m, mask, u0 = disk_datum(1)
    with pytest.raises(ValueError):
        run_implicit(u0, 0.1, 0.2, Scheme.implicit_admm, mask=mask)
    with pytest.raises(ValueError):
        run_implicit(u0, 0.1, 0.2, Scheme.implicit_fp, mask=mask)
    with pytest.raises(ValueError):
        run_implicit(u0, 0.1, 0.2, Scheme.semi, mask=mask)
    with pytest.raises(ValueError):
        run_implicit(
            u0, 0.0, 0.2, Scheme.implicit_admm, params=PARAMS, mask=mask
        )
    with pytest.raises(ValueError):
        run_implicit(
            FeFunction(m, np.ones(m.n_vertices)),
            0.1,
            0.2,
            Scheme.implicit_admm,
            params=PARAMS,
            mask=mask,
        )


def test_run_implicit_wraps_step_failure():
    m, mask, u0 = disk_datum(3)
    params = AdmmParams(delta_stop=1e-14, maxit=2)
    with pytest.raises(StepError) as excinfo:
        run_implicit(
            u0, 0.1, 0.2, Scheme.implicit_admm, params=params, mask=mask
        )
    assert excinfo.value.step == 1
    assert isinstance(excinfo.value.cause, AdmmConvergenceError)
