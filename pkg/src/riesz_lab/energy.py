"""Modulated energy F_N, transport commutator functionals, functional-
inequality right-hand sides, the small-scale energy splitting, truncated
electric potentials, and Sobolev/commutator bilinear forms on the torus.

Conventions
-----------
* F_N(X, mu) = (1/2) * double integral of g over the off-diagonal against
  (mu_N - mu)^(x2), mu_N the empirical measure of X.
* A_1[X, mu, v] = double integral of grad g(x-y).(v(x)-v(y)) against
  (mu_N - mu)^(x2) off the diagonal (no 1/2 factor); A_2 is the analogue
  with the kernel Hessian contracted against (v(x)-v(y))^(x2).
* On the torus every quadratic form is evaluated through the kernel's own
  truncated mode set, so pairwise sums, cross terms, and double integrals
  are mutually consistent by construction.

Pairwise accumulations are per-outer-index with fixed-order reduction; all
operations are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import special

from . import _accel
from .kernels import (
    CapabilityError,
    GaussianProfile,
    KernelDomainError,
    KernelSpec,
    TruncationProfile,
    g_eta_hat,
    hess_g,
)
from .measures import (
    DensityField,
    GriddedTorus,
    ParticleState,
    TorusUniform,
    UniformInterval,
    _torus_mode_coeffs,
    double_integral_g,
    lambda_scale,
    kappa_scale,
    potential_of_density,
)

__all__ = [
    "ModulatedEnergyReport",
    "VectorField",
    "modulated_energy",
    "commutator_a1",
    "commutator_a2",
    "commutator_bound_rhs",
    "energy_split",
    "truncated_electric_potential",
    "local_electric_energy",
    "sobolev_seminorm",
    "commutator_bilinear",
    "write_energy_csv",
]


@dataclass(frozen=True)
class ModulatedEnergyReport:
    fn: float
    log_offset: float  # log(N ||mu||_inf) / (2 d N), nonzero only at s = 0
    additive_scale: float  # ||mu||_inf^(s/d) N^(s/d-1)

    @property
    def shifted(self) -> float:
        return self.fn + self.log_offset


# ---------------------------------------------------------------------------
# vector fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VectorField:
    """A transport field with analytic gradient, or a gridded torus field.

    Exactly one of (func, grad) / (grid, side) representations must allow
    each requested operation; gridded fields are evaluated off-grid by
    trigonometric interpolation.
    """

    d: int
    func: Optional[Callable] = None
    grad_func: Optional[Callable] = None
    grid: Optional[np.ndarray] = None  # shape (d, n) or (d, n, n)
    side: Optional[float] = None

    @staticmethod
    def from_callable(d: int, func, grad_func=None, side: float | None = None) -> "VectorField":
        return VectorField(d=d, func=func, grad_func=grad_func, side=side)

    @staticmethod
    def from_grid(components: np.ndarray, side: float) -> "VectorField":
        comps = np.atleast_2d(np.asarray(components, dtype=np.float64))
        return VectorField(d=comps.shape[0], grid=comps, side=side)

    @staticmethod
    def constant(d: int, value) -> "VectorField":
        vec = np.broadcast_to(np.asarray(value, dtype=np.float64), (d,))

        def f(x):
            return np.broadcast_to(vec, x.shape).copy()

        def gf(x):
            return np.zeros((x.shape[0], d, d))

        return VectorField(d=d, func=f, grad_func=gf)

    @staticmethod
    def identity(d: int) -> "VectorField":
        def f(x):
            return x.copy()

        def gf(x):
            return np.broadcast_to(np.eye(d), (x.shape[0], d, d)).copy()

        return VectorField(d=d, func=f, grad_func=gf)

    # -- evaluation ----------------------------------------------------------

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.func is not None:
            return np.asarray(self.func(x), dtype=np.float64).reshape(x.shape[0], self.d)
        n = self.grid.shape[1]
        out = np.empty((x.shape[0], self.d))
        for c in range(self.d):
            out[:, c] = _trig_interp(self.grid[c], self.side, x)
        return out

    def grad(self, x: np.ndarray) -> np.ndarray:
        """Jacobian at each row of x, shape (N, d, d); entry [., i, j] = d_j v_i."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.grad_func is not None:
            return np.asarray(self.grad_func(x), dtype=np.float64).reshape(
                x.shape[0], self.d, self.d
            )
        if self.func is not None:
            h = 1e-6
            out = np.empty((x.shape[0], self.d, self.d))
            for j in range(self.d):
                e = np.zeros(self.d)
                e[j] = h
                out[:, :, j] = (self(x + e) - self(x - e)) / (2 * h)
            return out
        n = self.grid.shape[1]
        out = np.empty((x.shape[0], self.d, self.d))
        for c in range(self.d):
            for j in range(self.d):
                dg = _spectral_derivative(self.grid[c], self.side, axis=j)
                out[:, c, j] = _trig_interp(dg, self.side, x)
        return out

    # -- grid representation and norms ----------------------------------------

    def sampled_grid(self, n: int, side: float | None = None) -> np.ndarray:
        if self.grid is not None:
            if self.grid.shape[1] == n:
                return self.grid
            return np.stack(
                [_resample_grid(self.grid[c], n) for c in range(self.d)], axis=0
            )
        side = side if side is not None else self.side
        if side is None:
            raise CapabilityError("grid sampling of a callable field needs a torus side")
        ax = np.arange(n) * (side / n)
        if self.d == 1:
            pts = ax[:, None]
            vals = self(pts)
            return vals.T.reshape(1, n)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        vals = self(pts)
        return np.stack([vals[:, c].reshape(n, n) for c in range(self.d)], axis=0)

    def grad_inf_norm(self, n: int = 512, side: float | None = None) -> float:
        """sup |grad v| (Frobenius), from the analytic gradient on a sample
        grid or by spectral differentiation of the grid values."""
        side = side if side is not None else self.side
        if self.grad_func is not None and side is not None:
            ax = np.arange(n) * (side / n)
            pts = ax[:, None] if self.d == 1 else _mesh_points(ax)
            g = self.grad(pts)
            return float(np.sqrt((g**2).sum(axis=(1, 2))).max())
        comps = self.sampled_grid(n, side)
        total = np.zeros(comps.shape[1:])
        for c in range(self.d):
            for j in range(self.d):
                total += _spectral_derivative(comps[c], side, axis=j) ** 2
        return float(np.sqrt(total).max())

    def frac_norm(self, order: float, q: float, n: int = 512, side: float | None = None) -> float:
        """|| |grad|^order v ||_{L^q} on the torus, via Fourier multipliers."""
        side = side if side is not None else self.side
        if side is None:
            raise CapabilityError("fractional norms need a torus side")
        comps = self.sampled_grid(n, side)
        mag2 = np.zeros(comps.shape[1:])
        for c in range(self.d):
            fhat = np.fft.fftn(comps[c])
            mult = _abs_freq_multiplier(comps[c].shape, side) ** order
            w = np.fft.ifftn(fhat * mult).real
            mag2 += w**2
        mag = np.sqrt(mag2)
        if q == math.inf:
            return float(mag.max())
        cell = (side / n) ** self.d
        return float((mag**q).sum() * cell) ** (1.0 / q)


def _mesh_points(ax: np.ndarray) -> np.ndarray:
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def _abs_freq_multiplier(shape, side: float) -> np.ndarray:
    freqs = [np.fft.fftfreq(m, d=1.0 / m) for m in shape]
    if len(shape) == 1:
        k2 = freqs[0] ** 2
    else:
        k2 = freqs[0][:, None] ** 2 + freqs[1][None, :] ** 2
    out = np.sqrt(k2) * (2.0 * math.pi / side)
    return out


def _spectral_derivative(grid: np.ndarray, side: float, axis: int) -> np.ndarray:
    fhat = np.fft.fftn(grid)
    m = grid.shape[axis]
    freq = np.fft.fftfreq(m, d=1.0 / m) * (2j * math.pi / side)
    shape = [1] * grid.ndim
    shape[axis] = m
    return np.fft.ifftn(fhat * freq.reshape(shape)).real


def _resample_grid(grid: np.ndarray, n: int) -> np.ndarray:
    """Band-limited resampling of a periodic grid to size n per axis."""
    fhat = np.fft.fftn(grid)
    m = grid.shape[0]
    if n == m:
        return grid.copy()
    out = np.zeros((n,) * grid.ndim, dtype=np.complex128)
    half = min(m, n) // 2
    sl = list(range(half + 1)) + list(range(-half + 1, 0))
    if grid.ndim == 1:
        for a in sl:
            out[a] = fhat[a]
    else:
        for a in sl:
            for b in sl:
                out[a, b] = fhat[a, b]
    return np.fft.ifftn(out).real * (n / m) ** grid.ndim


def _trig_interp(grid: np.ndarray, side: float, x: np.ndarray) -> np.ndarray:
    """Evaluate the band-limited interpolant of periodic grid data at x."""
    n = grid.shape[0]
    d = grid.ndim
    fhat = np.fft.fftn(grid) / n**d
    if d == 1:
        ks = np.arange(1, (n + 1) // 2)
        coef = fhat[ks.astype(int)]
        base = float(fhat[0].real)
        vals = _accel.eval_modes_1d(
            np.ascontiguousarray(coef), np.ascontiguousarray(x[:, 0]), side
        )
        if n % 2 == 0:
            # interpolate the Nyquist mode symmetrically (real data)
            nyq_val = fhat[n // 2].real
            vals = vals + nyq_val * np.cos(2 * math.pi * (n // 2) * x[:, 0] / side)
        return base + vals
    # d == 2: direct half-space mode sum, skipping near-Nyquist rows
    half = n // 2
    modes = []
    coefs = []
    for k1 in range(-half + 1, half):
        for k2 in range(-half + 1, half):
            if (k1, k2) == (0, 0) or k1 < 0 or (k1 == 0 and k2 < 0):
                continue
            modes.append((k1, k2))
            coefs.append(fhat[k1 % n, k2 % n])
    modes = np.array(modes, dtype=np.float64)
    coefs = np.array(coefs, dtype=np.complex128)
    base = float(fhat[0, 0].real)
    return base + _accel.eval_modes_nd(coefs, modes, np.ascontiguousarray(x), side)


# ---------------------------------------------------------------------------
# modulated energy
# ---------------------------------------------------------------------------


def _empirical_mode_coeffs(spec: KernelSpec, X: ParticleState) -> np.ndarray:
    """mu_N_hat(k) = (1/N) sum_i exp(-2 pi i k.x_i / L) at spec.modes."""
    L = spec.domain.side
    if spec.d == 1:
        S = _accel.sf_1d(np.ascontiguousarray(X.positions[:, 0]), L, spec.domain.cutoff)
    else:
        S = _accel.sf_nd(np.ascontiguousarray(X.positions), np.ascontiguousarray(spec.modes), L)
    return S / X.n


def _torus_g0(spec: KernelSpec) -> float:
    return 2.0 * float(spec.ghat.sum()) / spec.domain.side**spec.d


def _nu_hat(spec: KernelSpec, X: ParticleState, mu: DensityField) -> np.ndarray:
    return _empirical_mode_coeffs(spec, X) - _torus_mode_coeffs(spec, mu)


def modulated_energy(X: ParticleState, mu: DensityField, spec: KernelSpec) -> ModulatedEnergyReport:
    """F_N(X, mu) plus its log offset and additive reference scale.

    Torus: single Plancherel sum over the kernel's modes,
    F_N = sum_k ghat(k) |nu_hat(k)|^2 / L^d - g_T(0) / (2N), which agrees
    with the pairwise double sum of the truncated kernel exactly.
    Free space: direct pairwise sum + closed-form cross/double terms.
    """
    n, d, s = X.n, spec.d, spec.s
    if X.d != d:
        raise KernelDomainError(f"state dimension {X.d} != kernel dimension {d}")
    if spec.is_torus:
        nu = _nu_hat(spec, X, mu)
        quad = 2.0 * float(np.sum(spec.ghat * np.abs(nu) ** 2)) / spec.domain.side**d
        fn = 0.5 * quad - _torus_g0(spec) / (2.0 * n)
    else:
        if not isinstance(mu.kind, UniformInterval):
            raise CapabilityError("free-space modulated energy needs the analytic 1D density")
        pp = _accel.pair_sum_g_free(np.ascontiguousarray(X.positions), s)
        cross = float(potential_of_density(spec, mu, X.positions).sum())
        dd = double_integral_g(spec, mu)
        fn = 0.5 * (pp / n**2 - 2.0 * cross / n + dd)
    log_offset = math.log(n * mu.sup_norm) / (2.0 * d * n) if s == 0.0 else 0.0
    return ModulatedEnergyReport(
        fn=fn,
        log_offset=log_offset,
        additive_scale=mu.sup_norm ** (s / d) * n ** (s / d - 1.0),
    )


# ---------------------------------------------------------------------------
# commutator functionals
# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _jacobi_rule(nn: int, beta: float):
    # weight (1+t)^beta on [-1, 1]; beta = 0 is Gauss-Legendre.  The computed
    # weights carry O(1e-12) moment errors for strongly singular beta, which
    # would leak into exact-cancellation identities; a rank-two correction
    # restores the first two moments to rounding.
    t, w = special.roots_jacobi(nn, 0.0, beta)
    m0 = 2.0 ** (beta + 1.0) / (beta + 1.0)
    m1 = 2.0 ** (beta + 2.0) / (beta + 2.0) - m0
    e0 = m0 - w.sum()
    e1 = m1 - (w * t).sum()
    t1, t2 = t.sum(), (t * t).sum()
    det = nn * t2 - t1 * t1
    alpha = (e0 * t2 - e1 * t1) / det
    gamma = (nn * e1 - t1 * e0) / det
    return t, w + alpha + gamma * t


def _endpoint_power_quad(psi, delta: float, s: float, nn: int = 96) -> float:
    """integral_0^delta u^(-s) psi(u) du for smooth psi, -2 < s < 1."""
    t, w = _jacobi_rule(nn, -s)
    u = 0.5 * delta * (1.0 + t)
    return (0.5 * delta) ** (1.0 - s) * float(np.sum(w * psi(u)))


def _endpoint_log_quad(psi, delta: float, nn: int = 64) -> float:
    """integral_0^delta (-log u) psi(u) du for smooth psi."""
    lo = delta * 1e-20
    xs, ws = np.polynomial.legendre.leggauss(nn)
    t0, t1 = math.log(lo), math.log(delta)
    edges = np.linspace(t0, t1, 21)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        u = np.exp(mid + half * xs)
        total += half * float(np.sum(ws * u * (-np.log(u)) * psi(u)))
    # analytic head below lo
    total += float(psi(np.array([lo]))[0]) * lo * (1.0 - math.log(lo))
    return total


def _pd_integral_a1(spec: KernelSpec, mu_k: UniformInterval, v: VectorField, xi: float) -> float:
    """integral grad g(xi - y).(v(xi) - v(y)) dmu(y) for the 1D interval."""
    s = spec.s
    a = mu_k.center - mu_k.half_width
    b = mu_k.center + mu_k.half_width
    h = mu_k.height
    vxi = float(v(np.array([[xi]]))[0, 0])

    def leg_segment(lo, hi):
        # no singularity inside [lo, hi]
        t, w = _jacobi_rule(160, 0.0)
        y = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        z = xi - y
        vals = -z * np.abs(z) ** (-(s + 2.0)) * (vxi - v(y[:, None])[:, 0]) * h
        return 0.5 * (hi - lo) * float(np.sum(w * vals))

    if xi <= a or xi >= b:
        return leg_segment(a, b)
    out = 0.0
    # left side y = xi - u: grad g = -u^(-s-1); factor u from v differences
    delta = xi - a
    if delta > 0:

        def psi_left(u):
            return -(vxi - v((xi - u)[:, None])[:, 0]) / u * h

        out += _endpoint_power_quad(psi_left, delta, s)
    delta = b - xi
    if delta > 0:

        def psi_right(u):
            return (vxi - v((xi + u)[:, None])[:, 0]) / u * h

        out += _endpoint_power_quad(psi_right, delta, s)
    return out


def _dd_integral_a1(spec: KernelSpec, mu_k: UniformInterval, v: VectorField) -> float:
    """double integral grad g(x-y).(v(x)-v(y)) dmu dmu = 2 int v.(grad g * mu) dmu."""
    s = spec.s
    a = mu_k.center - mu_k.half_width
    b = mu_k.center + mu_k.half_width
    h = mu_k.height
    length = b - a

    def vfun(y):
        return v(y[:, None])[:, 0]

    if s == 0.0:
        # grad(g*mu)(x) = -h[log(x-a) - log(b-x)]
        left = _endpoint_log_quad(lambda u: vfun(a + u) * h * h, length)
        right = _endpoint_log_quad(lambda u: vfun(b - u) * h * h, length)
        return 2.0 * (left - right)
    # grad(g*mu)(x) = h/s [(x-a)^(-s) - (b-x)^(-s)] inside
    left = _endpoint_power_quad(lambda u: vfun(a + u) * h * h / s, length, s)
    right = _endpoint_power_quad(lambda u: vfun(b - u) * h * h / s, length, s)
    return 2.0 * (left - right)


def commutator_a1(
    X: ParticleState, mu: DensityField, v: VectorField, spec: KernelSpec
) -> float:
    """First transport commutator A_1[X, mu, v].

    Torus: A_1 = 2 int v.(grad g * nu) d nu with nu = mu_N - mu, evaluated
    through the kernel mode set (particle part by nonuniform mode sums, mean
    part by grid quadrature).  Free space (analytic 1D density): pairwise
    sum plus endpoint-weighted Gauss-Jacobi quadratures.
    """
    if spec.is_torus:
        return _torus_commutator(X, mu, v, spec, order=1)
    if not isinstance(mu.kind, UniformInterval):
        raise CapabilityError("free-space A_1 needs the analytic 1D density")
    n = X.n
    pos = X.positions
    vvals = v(pos)
    pp = _accel.pair_a1_free(np.ascontiguousarray(pos), np.ascontiguousarray(vvals), spec.s)
    pd = sum(_pd_integral_a1(spec, mu.kind, v, float(xi)) for xi in pos[:, 0])
    dd = _dd_integral_a1(spec, mu.kind, v)
    return pp / n**2 - 2.0 * pd / n + dd


def _grid_quad_weights(mu: DensityField, n_grid: int, side: float) -> np.ndarray:
    """Quadrature weights for integrating against mu on a torus grid."""
    k = mu.kind
    if isinstance(k, TorusUniform):
        return np.full((n_grid,) * k.d, side ** (-k.d) * (side / n_grid) ** k.d)
    if isinstance(k, GriddedTorus):
        vals = k.values
        if vals.shape[0] != n_grid:
            vals = _resample_grid(vals, n_grid)
        return vals * (side / n_grid) ** vals.ndim
    raise CapabilityError("torus quadrature needs a torus density")


def _torus_conv_at(
    spec: KernelSpec, coef_by_component: list[np.ndarray], pts: np.ndarray
) -> np.ndarray:
    """Evaluate sum_k coef_c(k) e^(2 pi i k.x / L) (+c.c.) at pts, per component."""
    L = spec.domain.side
    out = np.empty((pts.shape[0], len(coef_by_component)))
    for c, coef in enumerate(coef_by_component):
        if spec.d == 1:
            out[:, c] = _accel.eval_modes_1d(coef, np.ascontiguousarray(pts[:, 0]), L)
        else:
            out[:, c] = _accel.eval_modes_nd(
                coef, np.ascontiguousarray(spec.modes), np.ascontiguousarray(pts), L
            )
    return out


def _torus_conv_grid(spec: KernelSpec, coef: np.ndarray, n_grid: int) -> np.ndarray:
    """Same field on the uniform n_grid: inverse FFT of the padded mode array."""
    arr_shape = (n_grid,) * spec.d
    full = np.zeros(arr_shape, dtype=np.complex128)
    idx = np.mod(spec.modes.astype(np.int64), n_grid)
    if spec.d == 1:
        np.add.at(full, idx[:, 0], coef)
        np.add.at(full, np.mod(-spec.modes.astype(np.int64), n_grid)[:, 0], np.conj(coef))
    else:
        np.add.at(full, (idx[:, 0], idx[:, 1]), coef)
        neg = np.mod(-spec.modes.astype(np.int64), n_grid)
        np.add.at(full, (neg[:, 0], neg[:, 1]), np.conj(coef))
    return np.fft.ifftn(full).real * n_grid**spec.d


def _default_grid(spec: KernelSpec) -> int:
    K = spec.domain.cutoff
    n = 1
    while n < 4 * K + 4 or n < 64:
        n *= 2
    return n


def _torus_commutator(
    X: ParticleState, mu: DensityField, v: VectorField, spec: KernelSpec, order: int
) -> float:
    L = spec.domain.side
    d = spec.d
    nu = _nu_hat(spec, X, mu)
    if isinstance(mu.kind, GriddedTorus):
        n_grid = mu.kind.values.shape[0]
    else:
        n_grid = min(_default_grid(spec), 4096 if d == 1 else 512)
    ax = np.arange(n_grid) * (L / n_grid)
    grid_pts = ax[:, None] if d == 1 else _mesh_points(ax)
    weights = _grid_quad_weights(mu, n_grid, L).ravel()
    v_pts = v(X.positions)
    v_grid = v(grid_pts)

    if order == 1:
        # w = grad g * nu; A_1 = 2 [ <v.w>_{mu_N} - <v.w>_{mu} ]
        coefs = [
            spec.ghat * nu * (2j * math.pi * spec.modes[:, c] / L) / L**d for c in range(d)
        ]
        w_pts = _torus_conv_at(spec, coefs, X.positions)
        w_grid = np.stack([_torus_conv_grid(spec, coefs[c], n_grid).ravel() for c in range(d)], axis=1)
        part = float((v_pts * w_pts).sum()) / X.n
        mean = float((weights[:, None] * v_grid.reshape(-1, d) * w_grid).sum())
        return 2.0 * (part - mean)

    # order == 2: A_2 = 2 int (v x v) : (H * nu) d nu - 2 int v . (H * (v nu)) d nu
    kk = spec.modes * (2.0 * math.pi / L)
    total = 0.0
    # first piece: components (a,b) of H*nu, contracted with v_a v_b
    for aa in range(d):
        for bb in range(d):
            coef = [-spec.ghat * nu * kk[:, aa] * kk[:, bb] / L**d]
            h_pts = _torus_conv_at(spec, coef, X.positions)[:, 0]
            h_grid = _torus_conv_grid(spec, coef[0], n_grid).ravel()
            part = float((v_pts[:, aa] * v_pts[:, bb] * h_pts).sum()) / X.n
            mean = float(
                (weights * v_grid.reshape(-1, d)[:, aa] * v_grid.reshape(-1, d)[:, bb] * h_grid).sum()
            )
            total += 2.0 * (part - mean)
    # second piece: nu-weighted field (v nu)_b -> H_{ab} * (v_b nu), dotted with v_a
    # (v nu)_hat requires mode coefficients of v_b d nu
    if d == 1:
        vb_part = _accel.sf_weighted_1d(
            np.ascontiguousarray(X.positions[:, 0]),
            np.ascontiguousarray(v_pts[:, 0]),
            L,
            spec.domain.cutoff,
        ) / X.n
        vb_mean = _grid_mode_coeffs(v_grid[:, 0] * weights.reshape(v_grid[:, 0].shape) / (L / n_grid) ** d, spec, n_grid, L)
        vnu = [vb_part - vb_mean]
    else:
        vnu = []
        for bb in range(d):
            phase = np.exp(-2j * math.pi * (X.positions @ spec.modes.T) / L)
            vb_part = (v_pts[:, bb][:, None] * phase).sum(axis=0) / X.n
            dens = v_grid[:, bb].reshape((n_grid,) * d) * _grid_quad_weights(mu, n_grid, L) / (
                L / n_grid
            ) ** d
            vb_mean = _grid_mode_coeffs(dens, spec, n_grid, L)
            vnu.append(vb_part - vb_mean)
    for aa in range(d):
        coef_sum = np.zeros(spec.modes.shape[0], dtype=np.complex128)
        for bb in range(d):
            coef_sum += -spec.ghat * vnu[bb] * kk[:, aa] * kk[:, bb] / L**d
        h_pts = _torus_conv_at(spec, [coef_sum], X.positions)[:, 0]
        h_grid = _torus_conv_grid(spec, coef_sum, n_grid).ravel()
        part = float((v_pts[:, aa] * h_pts).sum()) / X.n
        mean = float((weights * v_grid.reshape(-1, d)[:, aa] * h_grid).sum())
        total -= 2.0 * (part - mean)
    return total


def _grid_mode_coeffs(density: np.ndarray, spec: KernelSpec, n_grid: int, L: float) -> np.ndarray:
    """Fourier coefficients integral e^(-2 pi i k.x/L) f(x) dx at spec.modes."""
    density = density.reshape((n_grid,) * spec.d)
    fhat = np.fft.fftn(density) * (L / n_grid) ** spec.d
    idx = np.mod(spec.modes.astype(np.int64), n_grid)
    if spec.d == 1:
        return fhat[idx[:, 0]]
    return fhat[idx[:, 0], idx[:, 1]]


def commutator_a2(
    X: ParticleState, mu: DensityField, v: VectorField, spec: KernelSpec
) -> float:
    """Second transport commutator (Hessian form), matching A_1's convention."""
    if spec.is_torus:
        return _torus_commutator(X, mu, v, spec, order=2)
    if not isinstance(mu.kind, UniformInterval):
        raise CapabilityError("free-space A_2 needs the analytic 1D density")
    n = X.n
    pos = X.positions
    vv = v(pos)
    s = spec.s
    pp = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            z = pos[i] - pos[j]
            dv = vv[i] - vv[j]
            pp += float(dv @ hess_g(spec, z) @ dv)
    mu_k = mu.kind
    pd = sum(_pd_integral_a2(spec, mu_k, v, float(xi)) for xi in pos[:, 0])
    dd = _dd_integral_a2(spec, mu_k, v)
    return pp / n**2 - 2.0 * pd / n + dd


def _hess_g_1d(s: float, z: np.ndarray) -> np.ndarray:
    return (s + 1.0) * np.abs(z) ** (-(s + 2.0))


def _pd_integral_a2(spec: KernelSpec, mu_k: UniformInterval, v: VectorField, xi: float) -> float:
    s = spec.s
    a, b = mu_k.center - mu_k.half_width, mu_k.center + mu_k.half_width
    h = mu_k.height
    vxi = float(v(np.array([[xi]]))[0, 0])

    def vfun(y):
        return v(y[:, None])[:, 0]

    def seg(lo, hi):
        t, w = _jacobi_rule(160, 0.0)
        y = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        vals = _hess_g_1d(s, xi - y) * (vxi - vfun(y)) ** 2 * h
        return 0.5 * (hi - lo) * float(np.sum(w * vals))

    if xi <= a or xi >= b:
        return seg(a, b)
    out = 0.0
    for sign, delta in ((-1.0, xi - a), (1.0, b - xi)):
        if delta <= 0:
            continue

        def psi(u):
            y = xi + sign * u
            return (s + 1.0) * ((vxi - vfun(y)) / u) ** 2 * h

        out += _endpoint_power_quad(psi, delta, s)
    return out


def _dd_integral_a2(spec: KernelSpec, mu_k: UniformInterval, v: VectorField) -> float:
    # symmetric double quadrature of |x-y|^(-s-2)(s+1)(v(x)-v(y))^2 over the square
    s = spec.s
    a, b = mu_k.center - mu_k.half_width, mu_k.center + mu_k.half_width
    h = mu_k.height

    def vfun(y):
        return v(y[:, None])[:, 0]

    t, w = _jacobi_rule(128, 0.0)
    xs = 0.5 * (a + b) + 0.5 * (b - a) * t
    wx = 0.5 * (b - a) * w
    total = 0.0
    for x0, w0 in zip(xs, wx):
        vx = float(v(np.array([[x0]]))[0, 0])
        inner = 0.0
        for sign, delta in ((-1.0, x0 - a), (1.0, b - x0)):
            if delta <= 0:
                continue

            def psi(u):
                y = x0 + sign * u
                return (s + 1.0) * ((vx - vfun(y)) / u) ** 2 * h

            inner += _endpoint_power_quad(psi, delta, s, nn=128)
        total += w0 * inner * h
    return total


# ---------------------------------------------------------------------------
# functional-inequality right-hand sides
# ---------------------------------------------------------------------------

_VARIANTS = ("sup_c", "sub_c1", "sub_c2", "nonsing")


def commutator_bound_rhs(
    X: ParticleState,
    mu: DensityField,
    v: VectorField,
    spec: KernelSpec,
    variant: str,
    p: float = math.inf,
    a: float | None = None,
    norm_grid: int = 512,
) -> float:
    """Right-hand side of the first-order functional inequality, without the
    unknown universal constants; |A_1| / rhs is the measured constant.

    sup_c    : s >= max(0, d-2);  ||grad v||_inf * (F_N + log-offset(s=0)
               + ||mu||_p lambda^(d(p-1)/p - s))
    sub_c1   : 0 <= s < d-2, a in (d, d+2); same bracket, norm factor
               ||grad v||_inf + 1_{a>2} || |grad|^(a/2) v ||_{L^(2d/(a-2))}
    sub_c2   : 0 <= s < d-2; kappa-based additive term,
               norm factor with |grad|^((d-s)/2) at L^(2d/(d-s-2))
    nonsing  : -2 < s < 0; no additive term.
    """
    report = modulated_energy(X, mu, spec)
    return bound_rhs_from_report(
        report, X.n, mu, v, spec, variant, p=p, a=a, norm_grid=norm_grid
    )


def bound_rhs_from_report(
    report: ModulatedEnergyReport,
    n: int,
    mu: DensityField,
    v: VectorField,
    spec: KernelSpec,
    variant: str,
    p: float = math.inf,
    a: float | None = None,
    norm_grid: int = 512,
) -> float:
    d, s = spec.d, spec.s
    if variant not in _VARIANTS:
        raise KernelDomainError(f"unknown variant {variant!r}")
    side = spec.domain.side if spec.is_torus else None
    grad_inf = v.grad_inf_norm(n=norm_grid, side=side)
    mu_p = mu.lp_norm(p)

    if variant == "sup_c":
        if not s >= max(0.0, d - 2.0):
            raise KernelDomainError("sup_c requires s >= max(0, d-2)")
        lam = lambda_scale(n, mu_p, d)
        extra = -math.log(lam) / (2.0 * n) if s == 0.0 else 0.0
        add = mu_p * lam ** (_lp_exponent(d, p) - s)
        return grad_inf * (report.fn + extra + add)

    if variant == "sub_c1":
        if not (0.0 <= s < d - 2.0):
            raise KernelDomainError("sub_c1 requires 0 <= s < d-2")
        if a is None or not (d < a < d + 2):
            raise KernelDomainError("sub_c1 requires a in (d, d+2)")
        lam = lambda_scale(n, mu_p, d)
        extra = -math.log(lam) / (2.0 * n) if s == 0.0 else 0.0
        add = mu_p * lam ** (_lp_exponent(d, p) - s)
        factor = grad_inf
        if a > 2.0:
            factor += v.frac_norm(a / 2.0, 2.0 * d / (a - 2.0), n=norm_grid, side=side)
        return factor * (report.fn + extra + add)

    if variant == "sub_c2":
        if not (0.0 <= s < d - 2.0):
            raise KernelDomainError("sub_c2 requires 0 <= s < d-2")
        kap = kappa_scale(n, mu_p, d, s)
        add = mu_p * kap ** (_lp_exponent(d, p) - s)
        if s == 0.0:
            add *= 1.0 - math.log(kap)
        factor = grad_inf + v.frac_norm(
            (d - s) / 2.0, 2.0 * d / (d - s - 2.0), n=norm_grid, side=side
        )
        return factor * (report.fn + add)

    # nonsing
    if not (-2.0 < s < 0.0):
        raise KernelDomainError("nonsing requires -2 < s < 0")
    factor = grad_inf
    if s < d - 2.0:
        factor += v.frac_norm((d - s) / 2.0, 2.0 * d / (d - s - 2.0), n=norm_grid, side=side)
    return factor * report.fn


def _lp_exponent(d: int, p: float) -> float:
    if p == math.inf:
        return float(d)
    return d * (p - 1.0) / p


# ---------------------------------------------------------------------------
# small-scale energy splitting
# ---------------------------------------------------------------------------


def energy_split(
    X: ParticleState,
    mu: DensityField,
    spec: KernelSpec,
    profile: TruncationProfile | None = None,
    eta: float = 1e-2,
) -> tuple[float, float, float]:
    """Split F_N into (truncated quadratic form, small-scale remainder,
    self-interaction term):

      F_N = (1/2) Q_{g_eta}[nu] (diagonal reinserted)
          + (1/2) Q_{g - g_eta}[nu] (off-diagonal)
          - g_eta(0) / (2N).

    The first term is >= 0 because g_eta has nonnegative Fourier transform;
    the three terms sum to F_N exactly by construction (torus domain).
    """
    if profile is None:
        profile = GaussianProfile()
    if not spec.is_torus:
        raise CapabilityError("energy_split is implemented on the torus")
    if spec.s < 0:
        raise KernelDomainError("energy_split requires s >= 0")
    if eta <= 0:
        raise KernelDomainError("energy_split requires eta > 0")
    L = spec.domain.side
    d = spec.d
    n = X.n
    knorm = np.sqrt((spec.modes**2).sum(axis=1)) / L
    ghat_eta = g_eta_hat(profile, d, spec.s, eta, knorm)
    ghat_eta = np.minimum(ghat_eta, spec.ghat)  # guards rounding at tiny eta
    nu = _nu_hat(spec, X, mu)
    quad_eta = 2.0 * float(np.sum(ghat_eta * np.abs(nu) ** 2)) / L**d
    quad_rest = 2.0 * float(np.sum((spec.ghat - ghat_eta) * np.abs(nu) ** 2)) / L**d
    g_eta_0 = 2.0 * float(ghat_eta.sum()) / L**d
    g_rest_0 = _torus_g0(spec) - g_eta_0
    truncated = 0.5 * quad_eta
    remainder = 0.5 * quad_rest - g_rest_0 / (2.0 * n)
    self_term = -g_eta_0 / (2.0 * n)
    return truncated, remainder, self_term


# ---------------------------------------------------------------------------
# truncated electric potential (Coulomb case d=2, s=0, torus grid)
# ---------------------------------------------------------------------------


def truncated_electric_potential(
    X: ParticleState,
    mu: DensityField,
    spec: KernelSpec,
    radii: np.ndarray,
    grid_n: int = 128,
) -> np.ndarray:
    """h_{N,r} = (1/N) sum_i min(g, g(r_i))(. - x_i) - g * mu on the grid.

    Coulomb case only (s = d - 2; implemented for d = 2, s = 0 on the
    torus).  The kernel is the band-limited periodic g of the grid modes.
    """
    if not (spec.is_torus and spec.d == 2 and spec.s == float(spec.d - 2)):
        raise CapabilityError("truncated electric potential: torus, d = 2, s = 0 only")
    L = spec.domain.side
    ghat_arr = spec.grid_multiplier(grid_n)
    # band-limited periodic kernel on the grid and its value at radius r
    kernel_grid = np.fft.ifft2(ghat_arr).real * grid_n**2 / L**2
    freq = np.fft.fftfreq(grid_n, d=1.0 / grid_n)
    acc = np.zeros((grid_n, grid_n))
    for i in range(X.n):
        x0, y0 = X.positions[i]
        shift = np.exp(-2j * math.pi * (freq[:, None] * x0 + freq[None, :] * y0) / L)
        gi = np.fft.ifft2(ghat_arr * shift).real * grid_n**2 / L**2
        cap = _torus_kernel_at_radius(ghat_arr, L, float(radii[i]))
        acc += np.minimum(gi, cap)
    acc /= X.n
    if isinstance(mu.kind, GriddedTorus):
        vals = mu.kind.values
        if vals.shape[0] != grid_n:
            vals = _resample_grid(vals, grid_n)
        conv = np.fft.ifft2(ghat_arr * np.fft.fft2(vals)).real
    elif isinstance(mu.kind, TorusUniform):
        conv = np.zeros((grid_n, grid_n))
    else:
        raise CapabilityError("truncated electric potential needs a torus density")
    return acc - conv


def _torus_kernel_at_radius(ghat_arr: np.ndarray, L: float, r: float) -> float:
    n = ghat_arr.shape[0]
    freq = np.fft.fftfreq(n, d=1.0 / n)
    phase = np.exp(2j * math.pi * freq * r / L)
    return float((ghat_arr * phase[:, None]).sum().real) * 1.0 / L**2 * 1.0


def local_electric_energy(h: np.ndarray, side: float, region: np.ndarray | None = None) -> float:
    """Cell sum of |grad h|^2 over the region (centered differences)."""
    n = h.shape[0]
    dx = side / n
    gx = (np.roll(h, -1, axis=0) - np.roll(h, 1, axis=0)) / (2 * dx)
    gy = (np.roll(h, -1, axis=1) - np.roll(h, 1, axis=1)) / (2 * dx)
    dens = gx**2 + gy**2
    if region is not None:
        dens = dens * region
    return float(dens.sum() * dx * dx)


# ---------------------------------------------------------------------------
# Sobolev seminorms and the smooth commutator bilinear form
# ---------------------------------------------------------------------------


def sobolev_seminorm(f: np.ndarray, order: float, side: float) -> float:
    """(sum_k |2 pi k/L|^(2 order) |f_hat(k)|^2)^(1/2), zero-mean gridded f."""
    fhat = np.fft.fftn(f) / f.size
    if abs(fhat.flat[0]) > 1e-10:
        raise KernelDomainError("sobolev_seminorm requires a zero-mean field")
    mult = _abs_freq_multiplier(f.shape, side)
    with np.errstate(divide="ignore"):
        w = np.where(mult > 0, mult ** (2.0 * order), 0.0)
    return float(np.sqrt((w * np.abs(fhat) ** 2).sum()))


def commutator_bilinear(
    f: np.ndarray, g: np.ndarray, v: VectorField, spec: KernelSpec
) -> float:
    """Smooth-commutator pairing
    B(f, g) = double integral (v(x)-v(y)) . grad g_ker(x-y) f(x) g(y) dx dy
    = int f v.(grad g_ker * g) + int g v.(grad g_ker * f), gridded torus."""
    if not spec.is_torus:
        raise CapabilityError("commutator_bilinear is a torus-grid operation")
    L = spec.domain.side
    n = f.shape[0]
    if abs(f.mean()) > 1e-10 or abs(g.mean()) > 1e-10:
        raise KernelDomainError("commutator_bilinear requires zero-mean fields")
    ghat_arr = spec.grid_multiplier(n)
    cell = (L / n) ** spec.d
    ax = np.arange(n) * (L / n)
    pts = ax[:, None] if spec.d == 1 else _mesh_points(ax)
    vg = v(pts)

    def grad_conv(field):
        fhat = np.fft.fftn(field)
        out = []
        freqs = np.fft.fftfreq(n, d=1.0 / n) * (2j * math.pi / L)
        for c in range(spec.d):
            shape = [1] * spec.d
            shape[c] = n
            out.append(np.fft.ifftn(fhat * ghat_arr * freqs.reshape(shape)).real)
        return np.stack([o.ravel() for o in out], axis=1)

    t1 = float((f.ravel() * (vg * grad_conv(g)).sum(axis=1)).sum() * cell)
    t2 = float((g.ravel() * (vg * grad_conv(f)).sum(axis=1)).sum() * cell)
    return t1 + t2


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def write_energy_csv(rows: list[dict], fh) -> None:
    cols = ["N", "s", "d", "fN", "logOffset", "shifted", "additiveScale", "ratioA1"]
    fh.write(",".join(cols) + "\n")
    for r in rows:
        fh.write(
            ",".join(
                [str(r["N"]), f"{r['s']:.17g}", str(r["d"])]
                + [f"{r[c]:.17g}" for c in ("fN", "logOffset", "shifted", "additiveScale", "ratioA1")]
            )
            + "\n"
        )
