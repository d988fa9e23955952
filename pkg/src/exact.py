# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Closed-form total variation flows and their flux fields."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from structured_config import Example

logger = logging.getLogger(__name__)


def _points(x):
    """Return (n, 2) points and whether the input was a single point."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


@dataclass(frozen=True)
class ExactSolution:
    """Radially symmetric exact solution of the total variation flow.

    Attributes:
        kind: disk (shrinking indicator) or cone.
        dim: space dimension d entering the formulas.
    """

    kind: Example
    dim: int = 2

    def __post_init__(self):
        """Validate the parameters.

        Raises:
            ValueError: for an unknown kind or dim < 2.
        """
        object.__setattr__(self, "kind", Example(self.kind))
        if self.dim < 2:
            raise ValueError(f"dim must be at least 2, got {self.dim}")

    def extinction_time(self):
        """First time at which the solution vanishes identically."""
        d = self.dim
        if self.kind == Example.disk:
            return 1.0 / d
        return (d + 1.0) / (4.0 * d * d)

    def active_until(self):
        """End of the window in which the branch formulas are used."""
        d = self.dim
        if self.kind == Example.disk:
            return 1.0 / d
        return min((d + 1.0) / (4.0 * d * d), 1.0 / (4.0 * (d - 1.0)))

    def inner_radius(self, t):
        """Cone radius s(t) = sqrt((d + 1) t)."""
        return math.sqrt((self.dim + 1.0) * t)

    def outer_radius(self, t):
        """Cone radius r(t) = (1 + sqrt(1 - 4 t (d - 1))) / 2."""
        argument = max(1.0 - 4.0 * t * (self.dim - 1.0), 0.0)
        return 0.5 * (1.0 + math.sqrt(argument))

    def branch_radii(self, t):
        """Radii across which the formulas switch at time t."""
        if self.kind == Example.disk:
            return (1.0,)
        if t >= self.extinction_time():
            return ()
        return (self.inner_radius(t), self.outer_radius(t))

    def eval(self, t, x):
        """Evaluate u(t, x).

        Args:
            t: nonnegative time.
            x: point (2,) or points (n, 2).

        Returns:
            The value, or an (n,) array of values.

        Raises:
            ValueError: for negative t.
        """
        if t < 0:
            raise ValueError(f"t must be nonnegative, got {t}")
        points, single = _points(x)
        radius = np.linalg.norm(points, axis=1)
        if self.kind == Example.disk:
            values = max(1.0 - t * self.dim, 0.0) * (radius <= 1.0)
        elif t >= self.extinction_time():
            values = np.zeros(len(points))
        elif t == 0.0:
            values = np.maximum(1.0 - radius, 0.0)
        else:
            values = self._cone(t, radius)
        values = np.asarray(values, dtype=float)
        return float(values[0]) if single else values

    def _cone(self, t, radius):
        """Three branch cone profile for 0 < t < extinction."""
        s, r = self.inner_radius(t), self.outer_radius(t)
        bend = t * (self.dim - 1.0)
        safe = np.maximum(radius, s)
        plateau = 1.0 - s - bend / s
        slope = 1.0 - safe - bend / safe
        return np.where(
            radius <= s, plateau, np.where(radius <= r, slope, 0.0)
        )

    def flux(self, t, x):
        """Evaluate the flux field p(t, x) with d_t u = div p.

        Args:
            t: nonnegative time.
            x: point (2,) or points (n, 2).

        Returns:
            The vector (2,), or an (n, 2) array.
        """
        points, single = _points(x)
        radius = np.linalg.norm(points, axis=1)
        d = self.dim
        if t > self.active_until() or (
            self.kind == Example.cone and t >= self.extinction_time()
        ):
            field = np.zeros_like(points)
        elif self.kind == Example.disk:
            outside = np.maximum(radius, 1.0) ** d
            scale = np.where(radius <= 1.0, 1.0, 1.0 / outside)
            field = -scale[:, None] * points
        else:
            s, r = self.inner_radius(t), self.outer_radius(t)
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(
                    radius <= s,
                    1.0 / s if s > 0 else 0.0,
                    np.where(
                        radius <= r,
                        1.0 / radius,
                        r ** (d - 1.0) / radius**d,
                    ),
                )
            field = -np.nan_to_num(scale)[:, None] * points
        return field[0] if single else field

    def field(self, t):
        """Vectorized callable x -> u(t, x)."""
        return lambda points: self.eval(t, points)


@dataclass(frozen=True)
class FluxReport:
    """Finite-difference check of d_t u = div p.

    Attributes:
        max_discrepancy: max |d_t u - div p| over the kept samples.
        max_flux_norm: max |p| over the kept samples.
        samples: number of kept samples.
        step: finite-difference width.
    """

    max_discrepancy: float
    max_flux_norm: float
    samples: int
    step: float


def verify_flux_consistency(sol, t, r_min, r_max, step=1e-3, samples=64):
    """Compare d_t u with div p on a polar grid by central differences.

    Samples within ``step`` of a branch radius, including its motion over
    [t - step, t + step], are dropped.

    Args:
        sol: ExactSolution.
        t: time with step <= t.
        r_min: inner radius of the sampled annulus.
        r_max: outer radius of the sampled annulus.
        step: finite-difference width in t and x.
        samples: number of radii and of angles.

    Returns:
        FluxReport.

    Raises:
        ValueError: for an invalid annulus, step or time.
    """
    if not 0 <= r_min < r_max:
        raise ValueError(f"invalid annulus [{r_min}, {r_max}]")
    if step <= 0 or t - step < 0:
        raise ValueError("need step > 0 and t >= step")

    radii = np.linspace(r_min, r_max, samples)
    angles = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    rr, aa = rr.ravel(), aa.ravel()

    keep = np.ones(len(rr), dtype=bool)
    nearby = [sol.branch_radii(t - step), sol.branch_radii(t + step)]
    for i, radius in enumerate(sol.branch_radii(t)):
        positions = [radius] + [b[i] for b in nearby if len(b) > i]
        low, high = min(positions) - step, max(positions) + step
        keep &= (rr < low) | (rr > high)
    points = np.stack([rr * np.cos(aa), rr * np.sin(aa)], axis=1)[keep]
    if len(points) == 0:
        raise ValueError("no samples left away from the branch radii")

    dt_u = (sol.eval(t + step, points) - sol.eval(t - step, points)) / (
        2.0 * step
    )
    divergence = np.zeros(len(points))
    for axis in range(2):
        offset = np.zeros(2)
        offset[axis] = step
        divergence += (
            sol.flux(t, points + offset)[:, axis]
            - sol.flux(t, points - offset)[:, axis]
        ) / (2.0 * step)

    report = FluxReport(
        max_discrepancy=float(np.max(np.abs(dt_u - divergence))),
        max_flux_norm=float(
            np.max(np.linalg.norm(sol.flux(t, points), axis=1))
        ),
        samples=int(len(points)),
        step=step,
    )
    logger.debug(f"flux check {sol} t={t}: {report}")
    return report
