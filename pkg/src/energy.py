# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Orlicz densities, regularized lengths, energies and condition checks."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, validator
from scipy import integrate

from fem import element_gradients
from literals import C3_DIFF_STEP, CONDITION_REL_TOL, SAMPLE_REL_TOL
from structured_config import BaseEnumStr, Regularization

logger = logging.getLogger(__name__)


class DensityKind(BaseEnumStr):
    """Families of shipped Orlicz densities."""

    p_dirichlet_standard = "p_dirichlet_standard"
    p_dirichlet_truncated = "p_dirichlet_truncated"
    prandtl_eyring = "prandtl_eyring"


P_DIRICHLET_KINDS = (
    DensityKind.p_dirichlet_standard,
    DensityKind.p_dirichlet_truncated,
)


def _output(values):
    """Return a float for 0-d input and the array otherwise."""
    return float(values) if np.ndim(values) == 0 else values


class Density(BaseModel):
    """Orlicz density phi normalized by phi(0) = 0.

    Attributes:
        kind: density family.
        p: exponent in [1, 2), ignored by the Prandtl-Eyring density.
        eps: nonnegative regularization parameter.
    """

    kind: DensityKind
    p: float = 1.0
    eps: float = 0.0

    class Config:
        """Pydantic options."""

        frozen = True

    @validator("p")
    @classmethod
    def p_validator(cls, value: float) -> float:
        """Check that p lies in [1, 2).

        Args:
            value: exponent

        Returns:
            value: the exponent

        Raises:
            ValueError: in the case when the value is out of range
        """
        if 1.0 <= value < 2.0:
            return value
        raise ValueError("p must lie in [1, 2).")

    @validator("eps")
    @classmethod
    def eps_validator(cls, value: float) -> float:
        """Check that eps is nonnegative.

        Args:
            value: regularization parameter

        Returns:
            value: the regularization parameter

        Raises:
            ValueError: in the case when the value is negative
        """
        if value >= 0:
            return value
        raise ValueError("eps must be nonnegative.")

    @classmethod
    def p_dirichlet(cls, regularization, p, eps):
        """Regularized p-Dirichlet density.

        Args:
            regularization: Regularization (or its value).
            p: exponent.
            eps: regularization parameter.

        Returns:
            The Density.
        """
        kind = {
            Regularization.standard: DensityKind.p_dirichlet_standard,
            Regularization.truncated: DensityKind.p_dirichlet_truncated,
        }[Regularization(regularization)]
        return cls(kind=kind, p=p, eps=eps)

    @property
    def is_p_dirichlet(self):
        """Whether the density belongs to a p-Dirichlet family."""
        return self.kind in P_DIRICHLET_KINDS

    def phi(self, r):
        """Evaluate phi(r) for r >= 0 (scalar or array)."""
        r = np.asarray(r, dtype=float)
        p, eps = self.p, self.eps
        if self.kind == DensityKind.prandtl_eyring:
            return _output(r * np.log(math.e + r))
        if self.kind == DensityKind.p_dirichlet_standard:
            if eps == 0.0:
                return _output(r**p / p)
            # (|r|_eps^p - eps^p) / p without cancellation for r << eps.
            return _output(
                eps**p * np.expm1(0.5 * p * np.log1p((r / eps) ** 2)) / p
            )
        return _output(_truncated_power(r, eps, p) / p)

    def dphi(self, r):
        """Evaluate phi'(r) for r >= 0 (scalar or array)."""
        r = np.asarray(r, dtype=float)
        if self.kind == DensityKind.prandtl_eyring:
            return _output(np.log(math.e + r) + r / (math.e + r))
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.where(r > 0, self._p_weight(r) * r, 0.0)
        return _output(values)

    def weight(self, r):
        """Evaluate phi'(r) / r with its limit at r = 0.

        Args:
            r: nonnegative scalar or array.

        Returns:
            The positive weight.

        Raises:
            ValueError: at r = 0 for the Prandtl-Eyring density, or for a
                p-Dirichlet density with eps = 0.
        """
        r = np.asarray(r, dtype=float)
        if np.any(r == 0) and (
            self.kind == DensityKind.prandtl_eyring or self.eps == 0.0
        ):
            raise ValueError(
                f"weight of the {self.kind} density with eps={self.eps} "
                "is unbounded at r = 0"
            )
        if self.kind == DensityKind.prandtl_eyring:
            return _output(self.dphi(r) / r)
        return _output(self._p_weight(r))

    def _p_weight(self, r):
        """Weight of the p-Dirichlet families, no check at r = 0."""
        p, eps = self.p, self.eps
        if self.kind == DensityKind.p_dirichlet_standard:
            return (r**2 + eps**2) ** (0.5 * (p - 2.0))
        return np.maximum(eps, r) ** (p - 2.0)


def phi(r, d):
    """Evaluate the density d at r."""
    return d.phi(r)


def dphi(r, d):
    """Evaluate the derivative of the density d at r."""
    return d.dphi(r)


def weight(r, d):
    """Evaluate phi'(r) / r for the density d."""
    return d.weight(r)


def reg_length(a, eps, kind, p=1.0):
    """Regularized Euclidean length.

    Args:
        a: vector with trailing dimension 2, or a nonnegative length.
        eps: nonnegative regularization parameter.
        kind: Regularization, standard or truncated.
        p: exponent used by the truncated regularization.

    Returns:
        standard: sqrt(|a|^2 + eps^2).
        truncated: |a|_eps^p, i.e. |a|^p + (p/2 - 1) eps^p if |a| >= eps and
        (p/2) eps^(p-2) |a|^2 otherwise.

    Raises:
        ValueError: for negative eps.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    r = _lengths(a)
    if Regularization(kind) == Regularization.standard:
        return _output(np.hypot(r, eps))
    return _output(_truncated_power(r, eps, p))


def _lengths(a):
    """Euclidean lengths of vectors (trailing dimension 2) or lengths."""
    a = np.asarray(a, dtype=float)
    if a.ndim >= 1 and a.shape[-1] == 2:
        return np.linalg.norm(a, axis=-1)
    return a


def _truncated_power(r, eps, p):
    """|r|_eps^p of the truncated regularization for lengths r."""
    outer = r**p + (0.5 * p - 1.0) * eps**p
    if eps == 0.0:
        return outer
    inner = 0.5 * p * eps ** (p - 2.0) * r**2
    return np.where(r >= eps, outer, inner)


def energy(m, u, d):
    """Energy E_phi[u] = sum_T |T| phi(|grad u_T|).

    Args:
        m: the mesh.
        u: FeFunction or nodal array.
        d: Density.

    Returns:
        Nonnegative energy.
    """
    norms = np.linalg.norm(element_gradients(m, u), axis=1)
    return float(m.areas @ np.asarray(d.phi(norms)))


def orlicz_gap(a, b, d):
    """Defect of the Orlicz stability inequality.

    With w = phi'(|a|)/|a| the returned quantity is
    w b.(b - a) - [phi(|b|) - phi(|a|) + w |b - a|^2 / 2], which is
    nonnegative for densities with nonincreasing weight.

    Args:
        a: vector(s) with trailing dimension 2.
        b: vector(s) of the same shape.
        d: Density.

    Returns:
        The gap, one value per pair.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ra = np.linalg.norm(a, axis=-1)
    rb = np.linalg.norm(b, axis=-1)
    w = np.asarray(d.weight(ra))
    diff = b - a
    lhs = w * np.sum(b * diff, axis=-1)
    rhs = d.phi(rb) - d.phi(ra) + 0.5 * w * np.sum(diff * diff, axis=-1)
    return _output(lhs - rhs)


def a_operator(a, d):
    """Operator A(a) = (phi'(|a|)/|a|) a with A(0) = 0.

    Args:
        a: vector(s) with trailing dimension 2.
        d: Density.

    Returns:
        Array of the shape of a.
    """
    a = np.asarray(a, dtype=float)
    flat = a.reshape(-1, 2)
    r = np.linalg.norm(flat, axis=1)
    nonzero = r > 0
    w = np.zeros_like(r)
    if np.any(nonzero):
        w[nonzero] = d.weight(r[nonzero])
    return (w[:, None] * flat).reshape(a.shape)


def phi_shifted(alpha, s, d):
    """Shifted density phi_alpha(s) = int_0^s phi'(alpha + t) t / (alpha + t).

    Args:
        alpha: nonnegative shift.
        s: nonnegative argument.
        d: Density.

    Returns:
        The value obtained by adaptive quadrature.

    Raises:
        ValueError: for negative alpha or s.
    """
    if alpha < 0 or s < 0:
        raise ValueError(f"alpha and s must be nonnegative: {alpha}, {s}")
    if s == 0:
        return 0.0

    def integrand(t):
        shifted = alpha + t
        if shifted == 0.0:
            return float(d.dphi(0.0))
        return float(d.dphi(shifted)) * t / shifted

    value, _ = integrate.quad(
        integrand, 0.0, s, epsabs=1e-12, epsrel=1e-10, limit=200
    )
    return value


def fv_identity_gap(a, b, eps):
    """Defect of the monotonicity identity of the standard regularization.

    The identity reads
    (a/|a|_e - b/|b|_e).(a - b)
        = |(a,e)/|a|_e - (b,e)/|b|_e|^2 (|a|_e + |b|_e) / 2
    with (a, e) the lifted three dimensional vector.

    Args:
        a: vector(s) with trailing dimension 2.
        b: vector(s) of the same shape.
        eps: positive regularization parameter.

    Returns:
        Left-hand side minus right-hand side.

    Raises:
        ValueError: for nonpositive eps.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    la = np.hypot(np.linalg.norm(a, axis=-1), eps)
    lb = np.hypot(np.linalg.norm(b, axis=-1), eps)
    lhs = np.sum((a / la[..., None] - b / lb[..., None]) * (a - b), axis=-1)
    lifted = np.sum(
        (a / la[..., None] - b / lb[..., None]) ** 2, axis=-1
    ) + (eps / la - eps / lb) ** 2
    rhs = 0.5 * lifted * (la + lb)
    return _output(lhs - rhs)


def approx_mod_gap(a, eps, p, kind):
    """Scaled distance between |a|_eps^p and |a|^p.

    Args:
        a: vector(s) with trailing dimension 2, or nonnegative lengths.
        eps: positive regularization parameter.
        p: exponent.
        kind: Regularization.

    Returns:
        ||a|_eps^p - |a|^p| / eps^p, bounded by 1 (standard) or (2 - p)/2
        (truncated).

    Raises:
        ValueError: for nonpositive eps.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    r = _lengths(a)
    if Regularization(kind) == Regularization.standard:
        powered = np.hypot(r, eps) ** p
    else:
        powered = _truncated_power(r, eps, p)
    return _output(np.abs(powered - r**p) / eps**p)


def regularization_bound_constant(p, kind):
    """Constant c with ||a|_eps^p - |a|^p| <= c eps^p."""
    if Regularization(kind) == Regularization.standard:
        return 1.0
    return 0.5 * (2.0 - p)


def regularization_error_bound(p, eps, t_end, kind):
    """Bound 2 (c T)^(1/2) eps^(p/2) on the regularization error.

    Args:
        p: exponent.
        eps: regularization parameter.
        t_end: final time T.
        kind: Regularization.

    Returns:
        The bound; a diagnostic, not a guarantee for discrete errors.
    """
    c = regularization_bound_constant(p, kind)
    return 2.0 * math.sqrt(c * t_end) * eps ** (0.5 * p)


@dataclass(frozen=True)
class WeightBounds:
    """Sampled equivalence constants of the weight.

    Attributes:
        c1: minimum over the grid of weight(s) max(s, eps)^(2-p).
        c2: maximum over the grid of weight(s) eps^(2-p), None for eps = 0.
    """

    c1: float
    c2: Optional[float]


def weight_bounds(d, grid):
    """Sample the constants relating the weight to max(s, eps)^(p-2).

    Args:
        d: Density.
        grid: positive sample points.

    Returns:
        WeightBounds.
    """
    s = np.asarray(grid, dtype=float)
    w = np.asarray(d.weight(s))
    c1 = float(np.min(w * np.maximum(s, d.eps) ** (2.0 - d.p)))
    c2 = None
    if d.eps > 0:
        c2 = float(np.max(w * d.eps ** (2.0 - d.p)))
    return WeightBounds(c1=c1, c2=c2)


@dataclass
class ConditionReport:
    """Sampled verdicts on the structural conditions of a density.

    Attributes:
        convex: secant test of phi on consecutive grid triples.
        derivative_monotone: phi' nondecreasing on the grid.
        positive: phi and the weight positive on the grid.
        weight_nonincreasing: weight nonincreasing on the grid.
        c3_ratio: (min, max) of phi''(s) s / phi'(s) by central differences.
        c3_within_bounds: ratio range inside the requested bounds, or None.
        delta2_ratio: maximum of phi(2s)/phi(s).
        weight_bounds: sampled c1/c2 constants, p-Dirichlet kinds only.
        rel_tol: relative tolerance of the finite-difference quantities.
    """

    convex: bool
    derivative_monotone: bool
    positive: bool
    weight_nonincreasing: bool
    c3_ratio: Tuple[float, float]
    c3_within_bounds: Optional[bool]
    delta2_ratio: float
    weight_bounds: Optional[WeightBounds] = None
    rel_tol: float = CONDITION_REL_TOL

    @property
    def c1(self):
        """Convex and continuously differentiable, as sampled."""
        return self.convex and self.derivative_monotone

    @property
    def c2(self):
        """Positive, nonincreasing weight, as sampled."""
        return self.positive and self.weight_nonincreasing


def check_conditions(d, grid, c3_bounds=None):
    """Sample the convexity and monotonicity conditions of a density.

    Any object with vectorized ``phi``, ``dphi`` and ``weight`` methods is
    accepted.

    Args:
        d: the density.
        grid: sorted positive sample points.
        c3_bounds: optional (lower, upper) bounds for phi''(s) s / phi'(s).

    Returns:
        ConditionReport.

    Raises:
        ValueError: for an unsorted or nonpositive grid.
    """
    s = np.asarray(grid, dtype=float)
    if s.ndim != 1 or len(s) < 3:
        raise ValueError("grid needs at least three points")
    if np.any(s <= 0) or np.any(np.diff(s) <= 0):
        raise ValueError("grid must be positive and strictly increasing")

    values = np.asarray(d.phi(s))
    derivative = np.asarray(d.dphi(s))
    w = np.asarray(d.weight(s))

    left, mid, right = s[:-2], s[1:-1], s[2:]
    secant = (
        (right - mid) * values[:-2] + (mid - left) * values[2:]
    ) / (right - left)
    convex = bool(
        np.all(values[1:-1] <= secant + SAMPLE_REL_TOL * np.abs(secant))
    )
    derivative_monotone = bool(
        np.all(
            np.diff(derivative)
            >= -SAMPLE_REL_TOL * np.abs(derivative[1:])
        )
    )
    positive = bool(np.all(values > 0) and np.all(w > 0))
    weight_nonincreasing = bool(
        np.all(np.diff(w) <= SAMPLE_REL_TOL * np.abs(w[:-1]))
    )

    step = C3_DIFF_STEP * s
    second = (
        np.asarray(d.dphi(s + step)) - np.asarray(d.dphi(s - step))
    ) / (2.0 * step)
    ratio = second * s / derivative
    c3_ratio = (float(np.min(ratio)), float(np.max(ratio)))
    c3_within_bounds = None
    if c3_bounds is not None:
        lower, upper = c3_bounds
        slack = CONDITION_REL_TOL * max(abs(lower), abs(upper), 1.0)
        c3_within_bounds = bool(
            c3_ratio[0] >= lower - slack and c3_ratio[1] <= upper + slack
        )

    delta2_ratio = float(np.max(np.asarray(d.phi(2.0 * s)) / values))
    bounds = None
    if isinstance(d, Density) and d.is_p_dirichlet:
        bounds = weight_bounds(d, s)

    report = ConditionReport(
        convex=convex,
        derivative_monotone=derivative_monotone,
        positive=positive,
        weight_nonincreasing=weight_nonincreasing,
        c3_ratio=c3_ratio,
        c3_within_bounds=c3_within_bounds,
        delta2_ratio=delta2_ratio,
        weight_bounds=bounds,
    )
    logger.debug(f"condition report for {d!r}: {report}")
    return report
