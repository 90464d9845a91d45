import numpy as np
import pytest

from riesz_lab.dynamics import FlowParams, Quadratic, coulomb_1d_centers
from riesz_lab.equilibrium import (
    equilibrium_1d_coulomb_quadratic,
    torus_uniform_equilibrium,
    zeta,
)
from riesz_lab.kernels import CapabilityError, KernelSpec, Torus
from riesz_lab.measures import ParticleState, UniformInterval, potential_of_density
from riesz_lab.energy import modulated_energy
from riesz_lab import _accel


class TestCoulombQuadratic:
    def test_density_shape(self):
        eq = equilibrium_1d_coulomb_quadratic()
        kind = eq.density.kind
        assert isinstance(kind, UniformInterval)
        assert kind.center == 0.0  # even
        assert kind.half_width == pytest.approx(0.5)
        assert kind.height == pytest.approx(1.0)
        assert eq.robin_constant == pytest.approx(-0.25, abs=1e-15)

    def test_force_balance_residual(self):
        eq = equilibrium_1d_coulomb_quadratic()
        pts = np.linspace(-0.49, 0.49, 100)[:, None]
        assert float(eq.equilibrium_residual(pts).max()) < 1e-10

    def test_quantiles_stationary_under_newtonian_force(self):
        # net force on midpoint quantiles vanishes identically
        n = 64
        c = coulomb_1d_centers(n)
        spec = KernelSpec(1, -1.0)
        grad_sum = _accel.pair_force_free(np.ascontiguousarray(c[:, None]), -1.0) / n
        force = -(grad_sum[:, 0] + 2.0 * c)
        assert np.abs(force).max() < 1e-6


class TestZeta:
    def test_zero_on_support(self):
        eq = equilibrium_1d_coulomb_quadratic()
        pts = np.linspace(-0.45, 0.45, 100)[:, None]
        assert np.abs(zeta(pts, eq)).max() < 1e-10

    def test_positive_increasing_outside(self):
        eq = equilibrium_1d_coulomb_quadratic()
        ray = np.linspace(0.55, 2.0, 50)[:, None]
        vals = zeta(ray, eq)
        assert np.all(vals > 0)
        assert np.all(np.diff(vals) > 0)
        # closed form off the support: (|x| - 1/2)^2
        assert np.allclose(vals, (ray[:, 0] - 0.5) ** 2, atol=1e-12)

    def test_symmetry(self):
        eq = equilibrium_1d_coulomb_quadratic()
        xs = np.linspace(0.0, 2.0, 40)[:, None]
        assert np.allclose(zeta(xs, eq), zeta(-xs, eq), atol=1e-14)

    def test_nonnegative_on_wide_scan(self):
        eq = equilibrium_1d_coulomb_quadratic()
        # 3x the support diameter on each side
        xs = np.linspace(-3.0, 3.0, 10_000)[:, None]
        assert float(zeta(xs, eq).min()) > -1e-10


class TestTorusEquilibrium:
    def test_uniform_is_stationary(self):
        spec = KernelSpec(1, 0.5, Torus(1.0, 128))
        eq = torus_uniform_equilibrium(spec)
        assert eq.robin_constant == 0.0
        grid = np.linspace(0.01, 0.99, 37)[:, None]
        assert np.abs(potential_of_density(spec, eq.density, grid)).max() < 1e-14
        assert np.abs(zeta(grid, eq)).max() < 1e-14

    def test_requires_torus(self):
        with pytest.raises(CapabilityError):
            torus_uniform_equilibrium(KernelSpec(1, 0.5))

    def test_lattice_energy_recorded(self):
        spec = KernelSpec(1, 0.5, Torus(1.0, 4096))
        eq = torus_uniform_equilibrium(spec)
        n = 64
        X = ParticleState((np.arange(n) / n)[:, None], torus_side=1.0)
        lattice = modulated_energy(X, eq.density, spec).fn
        # any other configuration has larger energy than the near-minimizer
        rng = np.random.default_rng(0)
        Y = ParticleState(np.sort(rng.uniform(0, 1, n))[:, None], torus_side=1.0)
        assert modulated_energy(Y, eq.density, spec).fn >= lattice
