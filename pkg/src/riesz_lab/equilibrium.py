"""Equilibrium measures for solvable confinements, the confinement-excess
function zeta, and residual checks of the force-balance condition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import CapabilityError, KernelSpec
from .measures import (
    DensityField,
    TorusUniform,
    UniformInterval,
    grad_potential_of_density,
    potential_of_density,
    torus_uniform,
    uniform_interval,
)

__all__ = ["EquilibriumMeasure", "equilibrium_1d_coulomb_quadratic", "torus_uniform_equilibrium", "zeta"]


@dataclass(frozen=True)
class EquilibriumMeasure:
    density: DensityField
    robin_constant: float
    support: tuple  # (lo, hi) interval or ("torus", side)
    spec: KernelSpec
    potential: Callable[[np.ndarray], np.ndarray] | None  # confinement V

    def equilibrium_residual(self, points: np.ndarray) -> np.ndarray:
        """|grad(g * mu + V)| at interior points of the support."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        grad = grad_potential_of_density(self.spec, self.density, pts)
        if self.potential is not None:
            h = 1e-7
            for c in range(pts.shape[1]):
                e = np.zeros(pts.shape[1])
                e[c] = h
                grad[:, c] += (self.potential(pts + e) - self.potential(pts - e)) / (2 * h)
        return np.sqrt((grad**2).sum(axis=1))


def equilibrium_1d_coulomb_quadratic() -> EquilibriumMeasure:
    """Minimizer of the mean-field energy for g = -|x|, V = x^2 in d = 1.

    Force balance on the support: d/dx (g * mu) = -(2 F(x) - 1) must cancel
    V'(x) = 2x, so the CDF is F(x) = x + 1/2: the uniform density of height
    1 on [-1/2, 1/2].  The Robin constant is (g * mu)(0) + V(0) = -1/4.
    """
    spec = KernelSpec(1, -1.0)
    half_width = 0.5
    mu = uniform_interval(0.0, half_width)
    robin = float(potential_of_density(spec, mu, [[0.0]])[0])  # V(0) = 0
    return EquilibriumMeasure(
        density=mu,
        robin_constant=robin,
        support=(-half_width, half_width),
        spec=spec,
        potential=lambda x: (x**2).sum(axis=1),
    )


def torus_uniform_equilibrium(spec: KernelSpec) -> EquilibriumMeasure:
    """With no confinement on the torus the uniform density is stationary:
    g * mu = 0 identically, Robin constant 0, zeta = 0."""
    if not spec.is_torus:
        raise CapabilityError("torus equilibrium requires a torus kernel")
    return EquilibriumMeasure(
        density=torus_uniform(spec.domain.side, spec.d),
        robin_constant=0.0,
        support=("torus", spec.domain.side),
        spec=spec,
        potential=None,
    )


def zeta(points: np.ndarray, eq: EquilibriumMeasure) -> np.ndarray:
    """zeta(x) = (g * mu_V)(x) + V(x) - c: nonnegative, zero on the support."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    vals = potential_of_density(eq.spec, eq.density, pts) - eq.robin_constant
    if eq.potential is not None:
        vals = vals + eq.potential(pts)
    return vals
