import math

import numpy as np
import pytest
from scipy import special

from riesz_lab.kernels import (
    BesselProfile,
    GaussianProfile,
    KernelDomainError,
    KernelSpec,
    Torus,
    eval_g,
    eval_g_eta,
    eval_g_eta_diff,
    fundamental_constant,
    g_eta_hat,
    grad_g,
    hess_g,
    mellin_constant,
    torus_g,
    torus_g_many,
)


def gaussian_g_eta_closed(s, eta, r, c):
    """Independent closed form of the Gaussian-profile truncation:
    (c/2) (pi r^2)^(-s/2) * lower_gamma(s/2, pi r^2 / eta^2)."""
    a = math.pi * r * r
    return 0.5 * c * a ** (-s / 2) * special.gammainc(s / 2, a / (eta * eta)) * special.gamma(s / 2)


class TestEvalG:
    def test_examples(self):
        assert eval_g(KernelSpec(3, 2.0), 2.0) == pytest.approx(0.125, abs=1e-15)
        assert eval_g(KernelSpec(1, 0.0), 1.0) == 0.0
        assert eval_g(KernelSpec(1, 0.5), 2.0) == pytest.approx(2 * 2**-0.5, rel=1e-15)

    def test_nonpositive_r_rejected(self):
        with pytest.raises(KernelDomainError):
            eval_g(KernelSpec(1, 0.5), 0.0)
        with pytest.raises(KernelDomainError):
            eval_g(KernelSpec(1, 0.5), -1.0)

    def test_homogeneity_exact(self):
        spec = KernelSpec(2, 0.7)
        rng = np.random.default_rng(0)
        for _ in range(50):
            r = float(rng.uniform(0.1, 10.0))
            alpha = float(rng.uniform(0.5, 2.0))
            assert eval_g(spec, alpha * r) == pytest.approx(
                alpha**-0.7 * eval_g(spec, r), rel=4e-16
            )

    def test_spec_validation(self):
        with pytest.raises(KernelDomainError):
            KernelSpec(1, 1.0)  # s < d required
        with pytest.raises(KernelDomainError):
            KernelSpec(2, -2.0)
        with pytest.raises(KernelDomainError):
            KernelSpec(1, 0.5, Torus(0.0, 8))
        with pytest.raises(KernelDomainError):
            KernelSpec(1, 0.5, Torus(1.0, 0))

    def test_fundamental_constants(self):
        assert fundamental_constant(1, 0.0) == pytest.approx(math.pi, rel=1e-14)
        assert fundamental_constant(2, 0.0) == pytest.approx(2 * math.pi, rel=1e-14)
        assert fundamental_constant(3, 1.0) == pytest.approx(4 * math.pi, rel=1e-14)
        assert fundamental_constant(1, -1.0) == pytest.approx(2.0, rel=1e-14)


class TestDerivatives:
    def test_grad_examples(self):
        assert np.allclose(grad_g(KernelSpec(2, 0.0), [1.0, 0.0]), [-1.0, 0.0])
        # formula -x |x|^(-s-2) at s=1 (d=2 so the spec invariant -2<s<d holds)
        assert grad_g(KernelSpec(2, 1.0), [2.0, 0.0])[0] == pytest.approx(-0.25, abs=1e-16)

    def test_zero_vector_rejected(self):
        with pytest.raises(KernelDomainError):
            grad_g(KernelSpec(2, 0.5), [0.0, 0.0])
        with pytest.raises(KernelDomainError):
            hess_g(KernelSpec(2, 0.5), [0.0, 0.0])

    def test_hess_log_example(self):
        assert np.allclose(hess_g(KernelSpec(2, 0.0), [1.0, 0.0]), [[1.0, 0.0], [0.0, -1.0]])

    def test_grad_matches_finite_difference(self):
        # 10^3 random nonzero points across representative (d, s) pairs
        rng = np.random.default_rng(1)
        for d, s in [(1, 0.5), (1, -0.5), (2, 0.0), (2, 1.3), (3, -1.5), (3, 2.5)]:
            spec = KernelSpec(d, s)
            for _ in range(170):
                x = rng.standard_normal(d)
                x *= rng.uniform(1e-2, 1e2) / np.linalg.norm(x)
                h = 1e-6 * np.linalg.norm(x)
                g = grad_g(spec, x)
                for c in range(d):
                    e = np.zeros(d)
                    e[c] = h
                    fd = (eval_g(spec, np.linalg.norm(x + e)) - eval_g(spec, np.linalg.norm(x - e))) / (2 * h)
                    assert fd == pytest.approx(g[c], rel=1e-6, abs=1e-9 * abs(g).max())

    def test_hess_matches_finite_difference_of_grad(self):
        rng = np.random.default_rng(2)
        for d, s in [(2, 0.0), (2, 0.9), (3, 1.5)]:
            spec = KernelSpec(d, s)
            for _ in range(20):
                x = rng.standard_normal(d)
                x *= rng.uniform(1e-2, 1e2) / np.linalg.norm(x)
                h = 1e-5 * np.linalg.norm(x)
                H = hess_g(spec, x)
                assert np.allclose(H, H.T)
                for c in range(d):
                    e = np.zeros(d)
                    e[c] = h
                    fd = (grad_g(spec, x + e) - grad_g(spec, x - e)) / (2 * h)
                    assert np.allclose(fd, H[:, c], rtol=1e-5, atol=1e-8 * np.abs(H).max())

    def test_hess_trace_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            d = int(rng.integers(1, 4))
            s = float(rng.uniform(-1.9, d - 0.05))
            x = rng.standard_normal(d) * rng.uniform(0.1, 10.0)
            r2 = float((x**2).sum())
            expected = (s + 2 - d) * r2 ** (-(s + 2) / 2)
            assert np.trace(hess_g(KernelSpec(d, s), x)) == pytest.approx(expected, rel=1e-12)


class TestMellinAndTruncation:
    def test_gaussian_mellin_constant(self):
        # closed-form Mellin transform (1/2) pi^(-s/2) Gamma(s/2): s = 1 -> c = 2
        assert mellin_constant(GaussianProfile(), 2, 1.0) == pytest.approx(2.0, rel=1e-12)

    def test_mellin_validity(self):
        with pytest.raises(KernelDomainError):
            mellin_constant(GaussianProfile(), 1, 0.0)
        with pytest.raises(KernelDomainError):
            mellin_constant(GaussianProfile(), 1, 1.5)

    def test_gaussian_reconstruction_quadrature(self):
        # c * integral_0^inf t^(-s) phi(x/t) dt/t == g(|x|), adaptive-check at
        # tiny eta so the missing head is negligible
        spec = KernelSpec(1, 0.5)
        gp = GaussianProfile()
        for r in (0.1, 1.0, 10.0):
            got = eval_g_eta(spec, gp, 1e-8 * max(r, 0.1), r)
            assert got == pytest.approx(eval_g(spec, r), rel=1e-8)

    def test_bessel_reconstruction(self):
        spec = KernelSpec(1, 0.5)
        bp = BesselProfile(a=1.5)
        c = mellin_constant(bp, 1, 0.5)
        assert c > 0
        for r in (0.1, 1.0, 10.0):
            got = eval_g_eta(spec, bp, 1e-6 * max(r, 0.1), r)
            assert got == pytest.approx(eval_g(spec, r), rel=1e-6)

    def test_bessel_constraint(self):
        with pytest.raises(KernelDomainError):
            BesselProfile(a=0.5).phi0(1)
        with pytest.raises(KernelDomainError):
            BesselProfile(a=3.5).phi0(1)

    def test_g_eta_limit_monotone(self):
        # |g_eta(r) - g(r)| -> 0 as eta -> 0 at fixed r = 1; the Gaussian
        # tail is e^(-pi r^2/eta^2), already below rounding by eta = 0.1
        spec = KernelSpec(1, 0.5)
        gp = GaussianProfile()
        gaps = [abs(eval_g_eta(spec, gp, eta, 1.0) - eval_g(spec, 1.0)) for eta in (1.0, 0.6, 0.35, 0.1)]
        assert gaps[0] > gaps[1] > gaps[2] > gaps[3]
        assert gaps[3] < 1e-12

    def test_g_eta_at_zero(self):
        # g_eta(0) = c phi(0) eta^(-s)/s: Gaussian s=1 -> 2/eta
        spec = KernelSpec(2, 1.0)
        assert eval_g_eta(spec, GaussianProfile(), 0.1, 0.0) == pytest.approx(20.0, rel=1e-12)

    def test_gaussian_tail(self):
        # (g - g_eta)(r) < 1e-12 g(r) at r = 10 eta
        spec = KernelSpec(1, 0.5)
        gp = GaussianProfile()
        eta = 0.05
        r = 10 * eta
        assert eval_g(spec, r) - eval_g_eta(spec, gp, eta, r) < 1e-12 * eval_g(spec, r)

    def test_g_eta_below_g_and_monotone_in_eta(self):
        spec = KernelSpec(1, 0.5)
        gp = GaussianProfile()
        rs = np.logspace(-3, 3, 61)
        prev = None
        for eta in (1e-2, 1e-1, 1.0):
            vals = eval_g_eta(spec, gp, eta, rs)
            assert np.all(vals <= eval_g(spec, rs) * (1 + 1e-12) + 1e-12)
            if prev is not None:
                assert np.all(vals <= prev + 1e-12)  # nonincreasing in eta
            prev = vals

    def test_quadratic_form_positivity(self):
        # sum w_i w_j g_eta(|x_i - x_j|) >= -1e-9 ||w||^2 (positive definite kernel)
        spec = KernelSpec(1, 0.5)
        gp = GaussianProfile()
        rng = np.random.default_rng(4)
        for trial in range(30):
            n = int(rng.integers(2, 65))
            pts = rng.uniform(-1, 1, n)
            eta = float(rng.uniform(0.01, 0.5))
            dist = np.abs(pts[:, None] - pts[None, :])
            vals = eval_g_eta(spec, gp, eta, dist.ravel()).reshape(n, n)
            for _ in range(5):
                w = rng.standard_normal(n)
                assert w @ vals @ w >= -1e-9 * (w @ w)

    def test_reconstruction_identity_small_eta(self):
        spec = KernelSpec(1, 0.5)
        gp = GaussianProfile()
        for r in (0.05, 0.7, 3.0):
            assert eval_g_eta(spec, gp, 1e-4, r) == pytest.approx(eval_g(spec, r), rel=1e-6)

    def test_log_case_differences(self):
        spec = KernelSpec(2, 0.0)
        gp = GaussianProfile()
        for eta in (1e-2, 1e-4):
            got = eval_g_eta_diff(spec, gp, eta, 0.5, 2.0)
            assert got == pytest.approx(math.log(2.0 / 0.5), rel=1e-9)

    def test_g_eta_hat_matches_riesz_multiplier(self):
        d, s = 2, 0.5
        xi = np.array([0.25, 1.0, 4.0])
        got = g_eta_hat(GaussianProfile(), d, s, 1e-7, xi)
        expected = fundamental_constant(d, s) * (2 * math.pi * xi) ** (s - d)
        assert np.allclose(got, expected, rtol=1e-7)
        assert np.all(got >= 0)

    def test_g_eta_hat_bessel_positive(self):
        got = g_eta_hat(BesselProfile(2.5), 2, 0.3, 0.05, np.array([0.5, 2.0]))
        assert np.all(got > 0)


class TestTorusKernel:
    def test_log_gas_closed_form(self):
        # exact periodic log kernel: -log(2 |sin(pi x)|); the truncated series
        # converges like 1/(K |sin(pi x)|)
        x = 0.25
        target = -math.log(2 * abs(math.sin(math.pi * x)))
        spec4 = KernelSpec(1, 0.0, Torus(1.0, 10**4))
        assert abs(torus_g(spec4, x) - target) < 1e-4
        spec6 = KernelSpec(1, 0.0, Torus(1.0, 10**6))
        assert abs(torus_g(spec6, x) - target) < 1e-6

    def test_mean_zero(self):
        spec = KernelSpec(1, 0.5, Torus(1.0, 256))
        grid = (np.arange(512) + 0.31) / 512
        vals = torus_g_many(spec, grid[:, None])
        assert abs(vals.mean()) < 1e-10

    def test_symmetry(self):
        spec = KernelSpec(1, 0.5, Torus(1.0, 128))
        rng = np.random.default_rng(5)
        for _ in range(100):
            x = float(rng.uniform(0.01, 0.99))
            assert torus_g(spec, x) == pytest.approx(torus_g(spec, -x), rel=1e-14, abs=1e-14)

    def test_lattice_point_rejected(self):
        spec = KernelSpec(1, 0.5, Torus(1.0, 16))
        with pytest.raises(KernelDomainError):
            torus_g(spec, 0.0)
        with pytest.raises(KernelDomainError):
            torus_g(spec, 1.0)

    def test_d2_mode_table(self):
        spec = KernelSpec(2, 0.5, Torus(1.0, 4))
        modes = spec.modes
        # half-space: no mode and its negation both present
        keys = {tuple(m) for m in modes.astype(int)}
        assert all((-a, -b) not in keys for (a, b) in keys)
        assert all(0 < a * a + b * b <= 16 for (a, b) in keys)
        val = torus_g(spec, [0.3, 0.4])
        assert val == pytest.approx(torus_g(spec, [-0.3, -0.4]), rel=1e-12)
