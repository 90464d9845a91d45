import io
import math

import numpy as np
import pytest

from riesz_lab.kernels import KernelDomainError, KernelSpec, Torus
from riesz_lab.measures import (
    InvalidConfigurationError,
    ParticleState,
    double_integral_g,
    grad_potential_of_density,
    gridded_torus,
    kappa_scale,
    lambda_scale,
    nearest_neighbor_radii,
    potential_of_density,
    read_particles_csv,
    sample_iid,
    torus_uniform,
    uniform_interval,
    write_particles_csv,
)


class TestScales:
    def test_lambda_examples(self):
        assert lambda_scale(1, 1.0, 1) == 1.0
        assert lambda_scale(16, 1.0, 2) == 0.25

    def test_kappa_example(self):
        assert kappa_scale(8, 1.0, 1, 1.0) == pytest.approx(8**-0.5, rel=1e-15)

    def test_kappa_needs_s_above_minus_one(self):
        with pytest.raises(KernelDomainError):
            kappa_scale(8, 1.0, 1, -1.0)


class TestParticleState:
    def test_duplicate_rejected(self):
        with pytest.raises(InvalidConfigurationError):
            ParticleState(np.array([[0.0], [0.0], [1.0]]))

    def test_near_collision_rejected(self):
        with pytest.raises(InvalidConfigurationError):
            ParticleState(np.array([[0.0], [1e-14], [1.0]]))

    def test_velocity_shape(self):
        with pytest.raises(InvalidConfigurationError):
            ParticleState(np.array([[0.0], [1.0]]), velocities=np.array([[0.0]]))

    def test_torus_wraparound_distance(self):
        # 0.01 and 0.99 are 0.02 apart on the unit torus
        st = ParticleState(np.array([[0.01], [0.99]]), torus_side=1.0)
        assert st.min_distance == pytest.approx(0.02, rel=1e-12)


class TestNearestNeighbor:
    def test_examples(self):
        X = ParticleState(np.array([[0.0], [1.0]]))
        assert np.allclose(nearest_neighbor_radii(X, 10.0), 0.25)
        assert np.allclose(nearest_neighbor_radii(X, 0.1), 0.025)

    def test_equally_spaced(self):
        h = 0.125
        X = ParticleState((np.arange(8) * h)[:, None])
        assert np.allclose(nearest_neighbor_radii(X, 1.0), h / 4)

    def test_permutation_equivariance_and_scaling(self):
        rng = np.random.default_rng(0)
        pos = rng.uniform(0, 1, (20, 2))
        X = ParticleState(pos)
        lam = 0.07
        r = nearest_neighbor_radii(X, lam)
        perm = rng.permutation(20)
        r_perm = nearest_neighbor_radii(ParticleState(pos[perm]), lam)
        assert np.allclose(r_perm, r[perm])
        alpha = 3.7
        r_scaled = nearest_neighbor_radii(ParticleState(alpha * pos), alpha * lam)
        assert np.allclose(r_scaled, alpha * r)


class TestDensities:
    def test_mass_validation(self):
        with pytest.raises(ValueError):
            gridded_torus(np.ones(16) * 2.0, 1.0)  # mass 2

    def test_negative_cells_rejected(self):
        vals = np.ones(16)
        vals[3] = -0.5
        vals /= vals.mean()
        with pytest.raises(ValueError):
            gridded_torus(vals, 1.0)

    def test_sup_norm(self):
        assert uniform_interval(0.0, 0.5).sup_norm == 1.0
        assert torus_uniform(2.0, 1).sup_norm == 0.5
        xg = np.arange(64) / 64
        mu = gridded_torus(1 + 0.5 * np.cos(2 * np.pi * xg), 1.0)
        assert mu.sup_norm == pytest.approx(1.5, abs=1e-3)

    def test_lp_norm(self):
        mu = uniform_interval(0.0, 0.5)
        assert mu.lp_norm(2.0) == pytest.approx(1.0)
        assert mu.lp_norm(math.inf) == 1.0


class TestSampling:
    def test_determinism(self):
        mu = torus_uniform(1.0, 1)
        a = sample_iid(mu, 500, seed=11)
        b = sample_iid(mu, 500, seed=11)
        assert np.array_equal(a.positions, b.positions)

    def test_mean_and_ks(self):
        mu = uniform_interval(0.0, 1.0)  # uniform on [-1, 1]
        X = sample_iid(mu, 10_000, seed=3)
        assert abs(X.positions.mean()) < 3 / math.sqrt(10_000)
        xs = np.sort(X.positions[:, 0])
        cdf = (xs + 1.0) / 2.0
        ks = np.abs(cdf - np.arange(1, 10_001) / 10_000).max()
        assert ks < 2 / math.sqrt(10_000)

    def test_single_point_in_support(self):
        X = sample_iid(uniform_interval(0.0, 0.5), 1, seed=0)
        assert -0.5 <= X.positions[0, 0] <= 0.5

    def test_gridded_sampler(self):
        xg = np.arange(64) / 64
        mu = gridded_torus(1 + 0.9 * np.cos(2 * np.pi * xg), 1.0)
        X = sample_iid(mu, 20_000, seed=5)
        # empirical mean of cos(2 pi x) should match the density's first moment
        got = np.cos(2 * np.pi * X.positions[:, 0]).mean()
        assert got == pytest.approx(0.45, abs=0.02)


class TestPotentials:
    def test_coulomb_interval_values(self):
        spec = KernelSpec(1, -1.0)
        mu = uniform_interval()
        assert potential_of_density(spec, mu, [[0.0]])[0] == pytest.approx(-0.25, abs=1e-15)
        assert potential_of_density(spec, mu, [[1.0]])[0] == pytest.approx(-1.0, abs=1e-15)
        assert double_integral_g(spec, mu) == pytest.approx(-1.0 / 3.0, rel=1e-14)

    def test_torus_uniform_zero(self):
        spec = KernelSpec(1, 0.5, Torus(1.0, 64))
        mu = torus_uniform(1.0, 1)
        assert np.allclose(potential_of_density(spec, mu, [[0.3]]), 0.0)
        assert double_integral_g(spec, mu) == 0.0

    def test_gradient_matches_fd(self):
        mu = uniform_interval()
        for s in (-1.5, -1.0, -0.3, 0.0, 0.5):
            spec = KernelSpec(1, s)
            for x0 in (0.2, 0.71, -1.3):
                e = 1e-6
                fd = (
                    potential_of_density(spec, mu, [[x0 + e]])
                    - potential_of_density(spec, mu, [[x0 - e]])
                ) / (2 * e)
                an = grad_potential_of_density(spec, mu, [[x0]])
                assert an[0, 0] == pytest.approx(fd[0], rel=2e-6, abs=2e-6)

    def test_gridded_spectral_single_mode(self):
        # mu = 1 + 0.5 cos(2 pi x): mu_hat(+-1) = 0.25, so
        # (g * mu)(x) = 2 ghat(1) 0.25 cos(2 pi x)
        n = 256
        spec = KernelSpec(1, 0.5, Torus(1.0, 64))
        xg = np.arange(n) / n
        mu = gridded_torus(1 + 0.5 * np.cos(2 * np.pi * xg), 1.0)
        pts = np.array([[0.1], [0.37], [0.9]])
        got = potential_of_density(spec, mu, pts)
        ghat1 = spec.c_ds * (2 * math.pi) ** (spec.s - 1)
        expected = 2 * ghat1 * 0.25 * np.cos(2 * math.pi * pts[:, 0])
        assert np.allclose(got, expected, atol=1e-13)
        grad = grad_potential_of_density(spec, mu, pts)
        e = 1e-6
        fd = (potential_of_density(spec, mu, pts + e) - potential_of_density(spec, mu, pts - e)) / (2 * e)
        assert np.allclose(grad[:, 0], fd, atol=1e-6)


class TestSerialization:
    def test_roundtrip_bit_exact(self):
        rng = np.random.default_rng(9)
        X = ParticleState(rng.uniform(0, 1, (17, 2)), rng.standard_normal((17, 2)), time=0.625)
        buf = io.StringIO()
        write_particles_csv(X, buf)
        buf.seek(0)
        Y = read_particles_csv(buf)
        assert np.array_equal(X.positions, Y.positions)
        assert np.array_equal(X.velocities, Y.velocities)
        assert Y.time == 0.625

    def test_header(self):
        X = ParticleState(np.array([[0.1, 0.2]]), np.array([[1.0, 2.0]]))
        buf = io.StringIO()
        write_particles_csv(X, buf)
        assert buf.getvalue().splitlines()[0] == "t,i,x0,x1,v0,v1"
