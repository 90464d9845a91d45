"""Log/Riesz interaction kernels, their derivatives, periodic versions, and
scale-truncated potentials.

The interaction is g(r) = r^(-s)/s for s != 0 and g(r) = -log r for s = 0,
with dimension d >= 1 and exponent -2 < s < d.  Up to the constant returned
by :func:`fundamental_constant`, g is the fundamental solution of the
fractional Laplacian of order (d - s)/2.

All objects here are immutable after construction; cached tables are built
once and never mutated, so every operation is safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import special

from . import _accel

__all__ = [
    "FreeSpace",
    "Torus",
    "KernelSpec",
    "GaussianProfile",
    "BesselProfile",
    "fundamental_constant",
    "eval_g",
    "grad_g",
    "hess_g",
    "mellin_constant",
    "eval_g_eta",
    "eval_g_eta_diff",
    "g_eta_hat",
    "torus_g",
]


class KernelDomainError(ValueError):
    """Raised when an operation is called outside its domain of validity."""


class CapabilityError(NotImplementedError):
    """Raised for (kernel, measure) pairs the library does not support."""


# ---------------------------------------------------------------------------
# domains and kernel spec
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FreeSpace:
    pass


@dataclass(frozen=True)
class Torus:
    side: float
    cutoff: int  # Fourier modes 0 < |k| <= cutoff

    def __post_init__(self):
        if not self.side > 0:
            raise KernelDomainError(f"torus side must be positive, got {self.side}")
        if self.cutoff < 1:
            raise KernelDomainError(f"fourier cutoff must be >= 1, got {self.cutoff}")


def fundamental_constant(d: int, s: float) -> float:
    """Constant c with |grad|^(d-s) g = c * delta_0 in free space.

    c = 2^(d-s) pi^(d/2) Gamma((d-s)/2) / (s Gamma(s/2)), continued to
    2^(d-1) pi^(d/2) Gamma(d/2) at s = 0.  Checks: d=2,s=0 -> 2*pi;
    d=3,s=1 -> 4*pi; d=1,s=-1 -> 2 (so that -(d/dx)^2 (-|x|) = 2 delta).
    """
    if s == 0.0:
        return 2.0 ** (d - 1) * math.pi ** (d / 2.0) * special.gamma(d / 2.0)
    return (
        2.0 ** (d - s)
        * math.pi ** (d / 2.0)
        * special.gamma((d - s) / 2.0)
        / (s * special.gamma(s / 2.0))
    )


@dataclass(frozen=True)
class KernelSpec:
    """Dimension, Riesz exponent, and domain of the interaction kernel."""

    d: int
    s: float
    domain: FreeSpace | Torus = FreeSpace()

    def __post_init__(self):
        if self.d < 1:
            raise KernelDomainError(f"dimension must be >= 1, got {self.d}")
        if not (-2.0 < self.s < self.d):
            raise KernelDomainError(
                f"exponent must satisfy -2 < s < d, got s={self.s}, d={self.d}"
            )

    @property
    def is_torus(self) -> bool:
        return isinstance(self.domain, Torus)

    @cached_property
    def c_ds(self) -> float:
        return fundamental_constant(self.d, self.s)

    # -- periodic mode tables ------------------------------------------------

    @cached_property
    def modes(self) -> np.ndarray:
        """Half-space integer modes (M, d) with 0 < |k| <= cutoff.

        Conjugate pairs are folded: every sum over modes carries a factor 2
        on the real part.
        """
        if not self.is_torus:
            raise KernelDomainError("mode table requires a torus domain")
        K = self.domain.cutoff
        if self.d == 1:
            return np.arange(1, K + 1, dtype=np.float64)[:, None]
        if self.d == 2:
            ks = []
            for k1 in range(0, K + 1):
                lo = 1 if k1 == 0 else -K
                for k2 in range(lo, K + 1):
                    if 0 < k1 * k1 + k2 * k2 <= K * K and (k1 > 0 or k2 > 0):
                        ks.append((k1, k2))
            return np.array(ks, dtype=np.float64)
        raise CapabilityError("torus mode tables implemented for d <= 2")

    @cached_property
    def ghat(self) -> np.ndarray:
        """Fourier coefficients ghat(k) = c_ds |2 pi k / L|^(s-d) on the modes."""
        L = self.domain.side
        knorm = np.sqrt((self.modes**2).sum(axis=1))
        return self.c_ds * (2.0 * math.pi * knorm / L) ** (self.s - self.d)

    def grid_multiplier(self, n: int) -> np.ndarray:
        """ghat on the full FFT mode grid of size n per axis (zero mode = 0)."""
        if not self.is_torus:
            raise KernelDomainError("grid multiplier requires a torus domain")
        L = self.domain.side
        freq = np.fft.fftfreq(n, d=1.0 / n)  # integer modes
        if self.d == 1:
            k2 = freq**2
        else:
            k2 = freq[:, None] ** 2 + freq[None, :] ** 2
        out = np.zeros_like(k2)
        nz = k2 > 0
        out[nz] = self.c_ds * (2.0 * math.pi * np.sqrt(k2[nz]) / L) ** (self.s - self.d)
        return out


# ---------------------------------------------------------------------------
# free-space kernel and derivatives
# ---------------------------------------------------------------------------


def eval_g(spec: KernelSpec, r) -> np.ndarray | float:
    """g(r) = r^(-s)/s (s != 0) or -log r (s = 0), r > 0, free space."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r <= 0):
        raise KernelDomainError("eval_g requires r > 0")
    if spec.s == 0.0:
        out = -np.log(r)
    else:
        out = r ** (-spec.s) / spec.s
    return out if out.ndim else float(out)


def grad_g(spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    """grad g(x) = -x |x|^(-s-2), valid for every s in (-2, d) incl. s = 0."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    r2 = float(np.dot(x, x))
    if r2 == 0.0:
        raise KernelDomainError("grad_g requires a nonzero vector")
    return -x * r2 ** (-(spec.s + 2.0) / 2.0)


def hess_g(spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    """Hessian of g: -I |x|^(-s-2) + (s+2) x x^T |x|^(-s-4).

    Symmetric, with trace (s + 2 - d) |x|^(-s-2).
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    r2 = float(np.dot(x, x))
    if r2 == 0.0:
        raise KernelDomainError("hess_g requires a nonzero vector")
    s = spec.s
    eye = np.eye(x.shape[0])
    return -eye * r2 ** (-(s + 2.0) / 2.0) + (s + 2.0) * np.outer(x, x) * r2 ** (
        -(s + 4.0) / 2.0
    )


# ---------------------------------------------------------------------------
# truncation profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianProfile:
    """phi(x) = exp(-pi |x|^2); its Fourier transform is itself (nonnegative)."""

    def phi(self, u, d: int):
        u = np.asarray(u, dtype=np.float64)
        return np.exp(-math.pi * u * u)

    def phi0(self, d: int) -> float:
        return 1.0

    def mellin(self, s: float, d: int) -> float:
        # integral_0^inf u^(s-1) exp(-pi u^2) du, closed form
        return 0.5 * math.pi ** (-s / 2.0) * special.gamma(s / 2.0)

    # scale beyond which the analytic tail formula takes over
    def tail_start(self, eta: float, r: float) -> float:
        return max(10.0 * eta, 10.0 * r, 1e-300)

    def tail_integral(self, s: float, d: int, r: float, R: float) -> float:
        """integral_R^inf t^(-s-1) phi(r/t) dt in closed form."""
        if r == 0.0:
            return R ** (-s) / s
        a = math.pi * r * r
        # substitute u = r^2 pi / t^2: (1/2) a^(-s/2) * lower_gamma(s/2, a/R^2)
        return 0.5 * a ** (-s / 2.0) * special.gammainc(s / 2.0, a / (R * R)) * special.gamma(s / 2.0)


@dataclass(frozen=True)
class BesselProfile:
    """Kernel of (1 + |2 pi xi|^2)^(-a/2); requires d < a < d + 2.

    Radial closed form: phi(r) = r^((a-d)/2) K_((d-a)/2)(r)
    / (2^((d+a-2)/2) pi^(d/2) Gamma(a/2)).
    """

    a: float

    def _check(self, d: int):
        if not (d < self.a < d + 2):
            raise KernelDomainError(
                f"Bessel exponent must satisfy d < a < d+2, got a={self.a}, d={d}"
            )

    def phi(self, u, d: int):
        self._check(d)
        u = np.asarray(u, dtype=np.float64)
        out = np.empty_like(u)
        norm = 2.0 ** ((d + self.a - 2.0) / 2.0) * math.pi ** (d / 2.0) * special.gamma(self.a / 2.0)
        small = u < 1e-8
        nu = (self.a - d) / 2.0
        if np.any(~small):
            us = u[~small]
            out[~small] = us**nu * special.kv(nu, us) / norm
        if np.any(small):
            out[small] = self.phi0(d)
        return out

    def phi0(self, d: int) -> float:
        self._check(d)
        return (
            (4.0 * math.pi) ** (-d / 2.0)
            * special.gamma((self.a - d) / 2.0)
            / special.gamma(self.a / 2.0)
        )

    def mellin(self, s: float, d: int) -> float:
        # integral_0^inf u^(s-1) phi(u) du by log-panel quadrature; the
        # integrand decays like e^(-u), so panels up to u ~ 700 suffice.
        # Below lo the integrand is phi(0) u^(s-1) up to O(u^(a-d)); that
        # head is added in closed form.
        self._check(d)
        lo = 1e-12
        head = self.phi0(d) * lo**s / s
        return head + _log_panel_quad(lambda u: u**s * self.phi(u, d), lo, 800.0, nodes_per_decade=96)

    def tail_start(self, eta: float, r: float) -> float:
        return 1e8 * max(eta, r, 1.0)

    def tail_integral(self, s: float, d: int, r: float, R: float) -> float:
        # phi(r/t) ~ phi(0) for t >> r; relative error O((r/R)^(a-d))
        return self.phi0(d) * R ** (-s) / s


TruncationProfile = GaussianProfile | BesselProfile


@lru_cache(maxsize=64)
def _gl_nodes(n: int):
    return np.polynomial.legendre.leggauss(n)


def _log_panel_quad(f, lo: float, hi: float, nodes_per_decade: int = 64) -> float:
    """Gauss-Legendre in log space, one panel per decade of (lo, hi)."""
    if hi <= lo:
        return 0.0
    t0, t1 = math.log(lo), math.log(hi)
    ndec = max(1, int(math.ceil((t1 - t0) / math.log(10.0))))
    edges = np.linspace(t0, t1, ndec + 1)
    xs, ws = _gl_nodes(nodes_per_decade)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        tau = mid + half * xs
        t = np.exp(tau)
        total += half * float(np.sum(ws * f(t)))
    return total


def mellin_constant(profile: TruncationProfile, d: int, s: float) -> float:
    """Normalization c with c * integral_0^inf t^(d-s) phi_t(x) dt/t = g(x).

    Equals 1/(s M(s)) where M(s) = integral_0^inf u^(s-1) phi(u) du; requires
    s > 0 for convergence (the s = 0 log case uses renormalized differences).
    """
    if s <= 0:
        raise KernelDomainError("mellin_constant requires s > 0; use the renormalized log form")
    if s >= d:
        raise KernelDomainError("mellin_constant requires s < d")
    m = profile.mellin(s, d)
    if not np.isfinite(m) or m <= 0:
        raise KernelDomainError(f"divergent Mellin integral for s={s}")
    return 1.0 / (s * m)


def _c_profile(profile: TruncationProfile, d: int, s: float) -> float:
    # s = 0 limit of 1/(s M(s)) is 1/phi(0)
    if s == 0.0:
        return 1.0 / profile.phi0(d)
    return mellin_constant(profile, d, s)


def eval_g_eta(spec: KernelSpec, profile: TruncationProfile, eta: float, r):
    """Truncated potential g_eta(r) = c * integral_eta^inf t^(-s) phi(r/t) dt/t.

    Finite at r = 0, bounded by g pointwise, positive definite (phi has
    nonnegative Fourier transform).  Quadrature: log-spaced Gauss-Legendre
    panels on (eta, R) plus the profile's analytic tail beyond R.
    Accepts a scalar or an array of radii (one shared panel range).
    """
    if eta <= 0:
        raise KernelDomainError("eval_g_eta requires eta > 0")
    if spec.s <= 0:
        raise KernelDomainError("plain g_eta requires s > 0; use eval_g_eta_diff for s = 0")
    r_arr = np.atleast_1d(np.asarray(r, dtype=np.float64))
    if np.any(r_arr < 0):
        raise KernelDomainError("eval_g_eta requires r >= 0")
    s, d = spec.s, spec.d
    c = _c_profile(profile, d, s)
    R = profile.tail_start(eta, float(r_arr.max()))
    t0, t1 = math.log(eta), math.log(R)
    ndec = max(1, int(math.ceil((t1 - t0) / math.log(10.0))))
    edges = np.linspace(t0, t1, ndec + 1)
    xs, ws = _gl_nodes(64)
    body = np.zeros_like(r_arr)
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        t = np.exp(mid + half * xs)
        vals = profile.phi(r_arr[:, None] / t[None, :], d) * t[None, :] ** (-s)
        body += half * (vals @ ws)
    tail = np.array([profile.tail_integral(s, d, float(rv), R) for rv in r_arr])
    out = c * (body + tail)
    return out if np.ndim(r) else float(out[0])


def eval_g_eta_diff(
    spec: KernelSpec, profile: TruncationProfile, eta: float, r: float, r_ref: float
) -> float:
    """Renormalized truncation for the log case: g_eta(r) - g_eta(r_ref).

    The s = 0 scale integral diverges at large scales; differences of the
    integrand are integrable, and as eta -> 0 the value tends to
    g(r) - g(r_ref) = log(r_ref / r).  Also valid for s > 0.
    """
    if eta <= 0:
        raise KernelDomainError("eval_g_eta_diff requires eta > 0")
    s, d = spec.s, spec.d
    if s > 0:
        return eval_g_eta(spec, profile, eta, r) - eval_g_eta(spec, profile, eta, r_ref)
    if s != 0.0:
        raise KernelDomainError("renormalized form applies to 0 <= s < d")
    c = 1.0 / profile.phi0(d)
    R = 1e9 * max(r, r_ref, eta, 1.0)
    body = _log_panel_quad(lambda t: profile.phi(r / t, d) - profile.phi(r_ref / t, d), eta, R)
    # dropped tail is O((r^2 + r_ref^2) / R^2)
    return c * body


def g_eta_hat(profile: TruncationProfile, d: int, s: float, eta: float, xi) -> np.ndarray:
    """Fourier transform of g_eta at frequencies xi (> 0), elementwise.

    Nonnegative for every profile used here; tends to the Riesz multiplier
    c_ds |2 pi xi|^(s-d) as eta -> 0.  Gaussian: closed form via the upper
    incomplete gamma function.  Bessel: log-panel quadrature with an
    algebraic tail.
    """
    xi = np.asarray(xi, dtype=np.float64)
    if np.any(xi <= 0):
        raise KernelDomainError("g_eta_hat requires xi > 0")
    if s < 0:
        raise KernelDomainError("g_eta_hat requires s >= 0")
    c = _c_profile(profile, d, s)
    a_half = (d - s) / 2.0
    if isinstance(profile, GaussianProfile):
        z = math.pi * eta * eta * xi * xi
        return (
            0.5
            * c
            * (math.pi * xi * xi) ** ((s - d) / 2.0)
            * special.gamma(a_half)
            * special.gammaincc(a_half, z)
        )
    out = np.empty_like(xi)
    aa = profile.a
    for i, x in np.ndenumerate(xi):
        R = 1e6 / x + 1e6 * eta
        body = _log_panel_quad(
            lambda t: t ** (d - s) * (1.0 + (2.0 * math.pi * t * x) ** 2) ** (-aa / 2.0),
            eta,
            R,
        )
        tail = (2.0 * math.pi * x) ** (-aa) * R ** (d - s - aa) / (aa + s - d)
        out[i] = c * (body + tail)
    return out


# ---------------------------------------------------------------------------
# periodic kernel
# ---------------------------------------------------------------------------


def torus_g(spec: KernelSpec, x) -> float:
    """Zero-mean periodic kernel: truncated Fourier series
    sum_{0<|k|<=K} ghat(k) exp(2 pi i k.x / L) / L^d with
    ghat(k) = c_ds |2 pi k / L|^(s-d).

    Real by conjugate symmetry; evaluating on the image lattice of 0 is
    rejected (the true kernel is singular there).
    """
    if not spec.is_torus:
        raise KernelDomainError("torus_g requires a torus domain")
    L = spec.domain.side
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    red = x - L * np.round(x / L)
    if math.sqrt(float((red**2).sum())) < 1e-14 * L:
        raise KernelDomainError("torus_g is singular on the lattice of images of 0")
    phases = 2.0 * math.pi * (spec.modes @ red) / L
    return 2.0 * float(np.sum(spec.ghat * np.cos(phases))) / L**spec.d


def torus_g_many(spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    """Vectorized torus_g over rows of x (shape (N, d))."""
    if not spec.is_torus:
        raise KernelDomainError("torus_g requires a torus domain")
    L = spec.domain.side
    x = np.asarray(x, dtype=np.float64).reshape(-1, spec.d)
    coef = (spec.ghat / L**spec.d).astype(np.complex128)
    if spec.d == 1:
        return _accel.eval_modes_1d(coef, np.ascontiguousarray(x[:, 0]), L)
    return _accel.eval_modes_nd(coef, np.ascontiguousarray(spec.modes), np.ascontiguousarray(x), L)
