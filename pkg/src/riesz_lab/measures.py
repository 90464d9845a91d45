"""Particle configurations, reference densities, length scales, sampling,
and potentials g * mu of densities.

ParticleState and DensityField are immutable after construction; all
operations here are reentrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import IO, Optional

import numpy as np

from . import _accel
from .kernels import CapabilityError, KernelDomainError, KernelSpec

__all__ = [
    "ParticleState",
    "UniformInterval",
    "TorusUniform",
    "GriddedTorus",
    "DensityField",
    "lambda_scale",
    "kappa_scale",
    "nearest_neighbor_radii",
    "sample_iid",
    "potential_of_density",
    "grad_potential_of_density",
    "double_integral_g",
    "write_particles_csv",
    "read_particles_csv",
]


class InvalidConfigurationError(ValueError):
    """Positions that are not pairwise distinct (or nearly collide)."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# particle states
# ---------------------------------------------------------------------------


def _min_distance(pos: np.ndarray, torus_side: float | None) -> float:
    n, d = pos.shape
    if n < 2:
        return math.inf
    if torus_side is None:
        if d == 1:
            srt = np.sort(pos[:, 0])
            return float(np.diff(srt).min())
        return float(_accel.min_pairwise_distance(np.ascontiguousarray(pos)))
    L = torus_side
    red = pos - L * np.floor(pos / L)
    if d == 1:
        srt = np.sort(red[:, 0])
        gaps = np.diff(srt)
        wrap = srt[0] + L - srt[-1]
        return float(min(gaps.min() if gaps.size else math.inf, wrap))
    best = math.inf
    step = max(1, 2_000_000 // max(n, 1))
    for a in range(0, n - 1, step):
        b = min(a + step, n - 1)
        diff = red[a:b, None, :] - red[None, a + 1 :, :]
        diff -= L * np.round(diff / L)
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        rows = np.arange(a, b)[:, None]
        cols = np.arange(a + 1, n)[None, :]
        d2[cols <= rows] = math.inf
        best = min(best, float(d2.min()))
    return math.sqrt(best)


@dataclass(frozen=True)
class ParticleState:
    """N pairwise-distinct positions (and optional velocities) at a time stamp."""

    positions: np.ndarray
    velocities: Optional[np.ndarray] = None
    time: float = 0.0
    torus_side: Optional[float] = None  # set for periodic configurations

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        object.__setattr__(self, "positions", pos)
        pos.setflags(write=False)
        n, d = pos.shape
        if n < 1:
            raise InvalidConfigurationError("need at least one particle")
        if self.velocities is not None:
            vel = np.atleast_2d(np.asarray(self.velocities, dtype=np.float64))
            if vel.shape != pos.shape:
                raise InvalidConfigurationError(
                    f"velocities shape {vel.shape} != positions shape {pos.shape}"
                )
            object.__setattr__(self, "velocities", vel)
            vel.setflags(write=False)
        if n >= 2:
            span = pos.max(axis=0) - pos.min(axis=0)
            diam = math.sqrt(float((span**2).sum()))
            if self.torus_side is not None:
                diam = max(diam, self.torus_side)
            dmin = _min_distance(pos, self.torus_side)
            # forces blow up below this; downstream errors become meaningless
            if dmin <= 1e-12 * max(diam, 1e-300):
                raise InvalidConfigurationError(
                    f"minimum pairwise distance {dmin:.3e} below separation guard"
                )

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @cached_property
    def min_distance(self) -> float:
        return _min_distance(self.positions, self.torus_side)

    def with_time(self, t: float) -> "ParticleState":
        return ParticleState(self.positions, self.velocities, t, self.torus_side)


def lambda_scale(n: int, sup_norm: float, d: int) -> float:
    """Typical inter-particle length (N ||mu||)^(-1/d)."""
    if n < 1 or sup_norm <= 0:
        raise KernelDomainError("lambda_scale requires n >= 1 and sup_norm > 0")
    return (n * sup_norm) ** (-1.0 / d)


def kappa_scale(n: int, sup_norm: float, d: int, s: float) -> float:
    """Secondary length (N^(1/(s+1)) ||mu||)^(-1/d); requires s > -1."""
    if s <= -1.0:
        raise KernelDomainError("kappa_scale requires s > -1")
    if n < 1 or sup_norm <= 0:
        raise KernelDomainError("kappa_scale requires n >= 1 and sup_norm > 0")
    return (n ** (1.0 / (s + 1.0)) * sup_norm) ** (-1.0 / d)


def nearest_neighbor_radii(state: ParticleState, lam: float) -> np.ndarray:
    """r_i = (1/4) min(min_{j != i} |x_i - x_j|, lambda), all > 0."""
    pos = state.positions
    if state.n == 1:
        return np.array([0.25 * lam])
    if state.torus_side is not None:
        L = state.torus_side
        red = pos - L * np.floor(pos / L)
        if state.d == 1:
            order = np.argsort(red[:, 0])
            srt = red[order, 0]
            nn = np.empty(state.n)
            left = np.roll(srt, 1).copy()
            left[0] -= L
            right = np.roll(srt, -1).copy()
            right[-1] += L
            nn_sorted = np.minimum(srt - left, right - srt)
            nn[order] = nn_sorted
        else:
            nn = np.empty(state.n)
            for i in range(state.n):
                diff = red - red[i]
                diff -= L * np.round(diff / L)
                d2 = (diff**2).sum(axis=1)
                d2[i] = math.inf
                nn[i] = math.sqrt(d2.min())
    else:
        nn = _accel.nearest_neighbor_distances(np.ascontiguousarray(pos))
    r = 0.25 * np.minimum(nn, lam)
    if np.any(r <= 0):
        raise InvalidConfigurationError("duplicate points in nearest_neighbor_radii")
    return r


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformInterval:
    """Uniform probability density on [center - half_width, center + half_width]."""

    center: float
    half_width: float

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")

    @property
    def height(self) -> float:
        return 1.0 / (2.0 * self.half_width)


@dataclass(frozen=True)
class TorusUniform:
    side: float
    d: int


@dataclass(frozen=True)
class GriddedTorus:
    """Nonnegative cell values on a uniform torus grid, mass-1 normalized."""

    values: np.ndarray
    side: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        vals.setflags(write=False)


@dataclass(frozen=True)
class DensityField:
    kind: UniformInterval | TorusUniform | GriddedTorus

    def __post_init__(self):
        k = self.kind
        if isinstance(k, GriddedTorus):
            if np.any(k.values < 0):
                raise ValueError("gridded density has negative cells")
            if abs(self.mass - 1.0) > 1e-10:
                raise ValueError(f"gridded density mass {self.mass} != 1")

    @property
    def d(self) -> int:
        k = self.kind
        if isinstance(k, UniformInterval):
            return 1
        if isinstance(k, TorusUniform):
            return k.d
        return k.values.ndim

    @property
    def mass(self) -> float:
        k = self.kind
        if isinstance(k, GriddedTorus):
            n = k.values.shape[0]
            return float(k.values.sum() * (k.side / n) ** k.values.ndim)
        return 1.0

    @cached_property
    def sup_norm(self) -> float:
        k = self.kind
        if isinstance(k, UniformInterval):
            return k.height
        if isinstance(k, TorusUniform):
            return k.side ** (-k.d)
        return float(k.values.max())

    def lp_norm(self, p: float) -> float:
        """L^p norm; cell-sum approximation for gridded densities."""
        if p == math.inf:
            return self.sup_norm
        k = self.kind
        if isinstance(k, UniformInterval):
            return (k.height**p * 2.0 * k.half_width) ** (1.0 / p)
        if isinstance(k, TorusUniform):
            return (k.side ** (-k.d * p) * k.side**k.d) ** (1.0 / p)
        n = k.values.shape[0]
        cell = (k.side / n) ** k.values.ndim
        return float((k.values**p).sum() * cell) ** (1.0 / p)


def uniform_interval(center: float = 0.0, half_width: float = 0.5) -> DensityField:
    return DensityField(UniformInterval(center, half_width))


def torus_uniform(side: float, d: int = 1) -> DensityField:
    return DensityField(TorusUniform(side, d))


def gridded_torus(values: np.ndarray, side: float, normalize: bool = False) -> DensityField:
    vals = np.asarray(values, dtype=np.float64)
    if normalize:
        n = vals.shape[0]
        vals = vals / (vals.sum() * (side / n) ** vals.ndim)
    return DensityField(GriddedTorus(vals, side))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_iid(mu: DensityField, n: int, seed: int, time: float = 0.0) -> ParticleState:
    """N independent draws from mu; deterministic given seed.

    Inverse-CDF for the analytic 1D family, cell-weighted sampling with a
    uniform draw inside the cell for gridded densities.  Exact duplicate
    pairs are redrawn.
    """
    if n < 1:
        raise ValueError("sample_iid requires n >= 1")
    rng = np.random.default_rng(seed)
    k = mu.kind

    def draw(m: int) -> np.ndarray:
        if isinstance(k, UniformInterval):
            u = rng.random(m)
            return (k.center + (2.0 * u - 1.0) * k.half_width)[:, None]
        if isinstance(k, TorusUniform):
            return rng.random((m, k.d)) * k.side
        nv = k.values.shape[0]
        dd = k.values.ndim
        flat = k.values.reshape(-1)
        p = flat / flat.sum()
        cells = rng.choice(flat.size, size=m, p=p)
        idx = np.stack(np.unravel_index(cells, k.values.shape), axis=1).astype(np.float64)
        return (idx + rng.random((m, dd))) * (k.side / nv)

    pts = draw(n)
    for _ in range(100):
        if n == 1:
            break
        order = np.lexsort(pts.T)
        srt = pts[order]
        dup = np.all(srt[1:] == srt[:-1], axis=1)
        if not dup.any():
            break
        bad = order[1:][dup]
        pts[bad] = draw(bad.size)
    side = k.side if isinstance(k, (TorusUniform, GriddedTorus)) else None
    return ParticleState(pts, time=time, torus_side=side)


# ---------------------------------------------------------------------------
# potentials of densities
# ---------------------------------------------------------------------------


def _interval_potential(s: float, a: float, b: float, h: float, x: np.ndarray):
    """(g * mu)(x) for mu = h on [a, b], d = 1; closed form, any -2 < s < 1."""
    xa = x - a
    bx = b - x
    inside = (xa >= 0) & (bx >= 0)
    right = xa > 0
    out = np.empty_like(x)
    if s == 0.0:

        def plogp(u):
            u = np.abs(u)
            return np.where(u > 0, u * (np.log(np.maximum(u, 1e-300)) - 1.0), 0.0)

        val_in = plogp(xa) + plogp(bx)
        val_right = plogp(xa) - plogp(xa - (b - a))
        val_left = plogp(bx) - plogp(bx - (b - a))
        out = -h * np.where(inside, val_in, np.where(right, val_right, val_left))
    else:
        p = 1.0 - s

        def pw(u):
            return np.abs(u) ** p

        val_in = pw(xa) + pw(bx)
        val_right = pw(xa) - pw(xa - (b - a))
        val_left = pw(bx) - pw(bx - (b - a))
        out = h / (s * p) * np.where(inside, val_in, np.where(right, val_right, val_left))
    return out


def _interval_potential_grad(s: float, a: float, b: float, h: float, x: np.ndarray):
    xa = x - a
    bx = b - x
    inside = (xa > 0) & (bx > 0)
    right = xa > 0
    if s == 0.0:
        with np.errstate(divide="ignore"):
            val_in = -h * (np.log(np.abs(xa)) - np.log(np.abs(bx)))
            val_right = -h * (np.log(np.abs(xa)) - np.log(np.abs(xa - (b - a))))
            val_left = -h * (-np.log(np.abs(bx)) + np.log(np.abs(bx - (b - a))))
        return np.where(inside, val_in, np.where(right, val_right, val_left))

    def pw(u):
        return np.abs(u) ** (-s)

    val_in = h / s * (pw(xa) - pw(bx))
    val_right = h / s * (pw(xa) - pw(xa - (b - a)))
    val_left = h / s * (-pw(bx) + pw(bx - (b - a)))
    return np.where(inside, val_in, np.where(right, val_right, val_left))


def _torus_mode_coeffs(spec: KernelSpec, mu: DensityField) -> np.ndarray:
    """mu_hat(k) = integral e^(-2 pi i k.x / L) mu(x) dx at spec.modes."""
    k = mu.kind
    if isinstance(k, TorusUniform):
        return np.zeros(spec.modes.shape[0], dtype=np.complex128)
    if not isinstance(k, GriddedTorus):
        raise CapabilityError("torus mode coefficients need a torus density")
    vals = k.values
    n = vals.shape[0]
    K = spec.domain.cutoff
    if K > (n - 1) // 2:
        raise CapabilityError(
            f"kernel cutoff {K} exceeds grid Nyquist range for n={n}; refine the grid"
        )
    fhat = np.fft.fftn(vals) * (k.side / n) ** vals.ndim
    idx = np.mod(spec.modes.astype(np.int64), n)
    if vals.ndim == 1:
        return fhat[idx[:, 0]]
    return fhat[idx[:, 0], idx[:, 1]]


def potential_of_density(spec: KernelSpec, mu: DensityField, x: np.ndarray) -> np.ndarray:
    """(g * mu)(x) at the rows of x.

    Closed form for the analytic 1D interval in free space; truncated
    spectral sum ghat(k) mu_hat(k) on the torus.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    k = mu.kind
    if isinstance(k, UniformInterval):
        if spec.is_torus or spec.d != 1:
            raise CapabilityError("interval density requires free space, d = 1")
        a, b = k.center - k.half_width, k.center + k.half_width
        return _interval_potential(spec.s, a, b, k.height, x[:, 0])
    if not spec.is_torus:
        raise CapabilityError("free-space potentials need an analytic density")
    if isinstance(k, TorusUniform):
        return np.zeros(x.shape[0])
    coefs = spec.ghat * _torus_mode_coeffs(spec, mu) / spec.domain.side**spec.d
    if spec.d == 1:
        return _accel.eval_modes_1d(coefs, np.ascontiguousarray(x[:, 0]), spec.domain.side)
    return _accel.eval_modes_nd(
        coefs, np.ascontiguousarray(spec.modes), np.ascontiguousarray(x), spec.domain.side
    )


def grad_potential_of_density(spec: KernelSpec, mu: DensityField, x: np.ndarray) -> np.ndarray:
    """Gradient of (g * mu) at the rows of x, shape (N, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    k = mu.kind
    if isinstance(k, UniformInterval):
        if spec.is_torus or spec.d != 1:
            raise CapabilityError("interval density requires free space, d = 1")
        a, b = k.center - k.half_width, k.center + k.half_width
        return _interval_potential_grad(spec.s, a, b, k.height, x[:, 0])[:, None]
    if not spec.is_torus:
        raise CapabilityError("free-space potentials need an analytic density")
    if isinstance(k, TorusUniform):
        return np.zeros_like(x)
    L = spec.domain.side
    mu_hat = _torus_mode_coeffs(spec, mu)
    out = np.empty_like(x)
    for c in range(spec.d):
        coefs = spec.ghat * mu_hat * (2j * math.pi * spec.modes[:, c] / L) / L**spec.d
        if spec.d == 1:
            out[:, c] = _accel.eval_modes_1d(coefs, np.ascontiguousarray(x[:, 0]), L)
        else:
            out[:, c] = _accel.eval_modes_nd(
                coefs, np.ascontiguousarray(spec.modes), np.ascontiguousarray(x), L
            )
    return out


def double_integral_g(spec: KernelSpec, mu: DensityField) -> float:
    """integral integral g(x - y) dmu(x) dmu(y)."""
    k = mu.kind
    if isinstance(k, UniformInterval):
        if spec.is_torus or spec.d != 1:
            raise CapabilityError("interval density requires free space, d = 1")
        h, length = k.height, 2.0 * k.half_width
        s = spec.s
        if s == 0.0:
            return 2.0 * h * h * (0.75 * length**2 - 0.5 * length**2 * math.log(length))
        return 2.0 * h * h / s * length ** (2.0 - s) / ((1.0 - s) * (2.0 - s))
    if not spec.is_torus:
        raise CapabilityError("free-space potentials need an analytic density")
    if isinstance(k, TorusUniform):
        return 0.0
    mu_hat = _torus_mode_coeffs(spec, mu)
    return 2.0 * float(np.sum(spec.ghat * np.abs(mu_hat) ** 2)) / spec.domain.side**spec.d


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def write_particles_csv(state: ParticleState, fh: IO[str]) -> None:
    d = state.d
    cols = ["t", "i"] + [f"x{c}" for c in range(d)]
    if state.velocities is not None:
        cols += [f"v{c}" for c in range(d)]
    fh.write(",".join(cols) + "\n")
    for i in range(state.n):
        row = [_fmt(state.time), str(i)]
        row += [_fmt(v) for v in state.positions[i]]
        if state.velocities is not None:
            row += [_fmt(v) for v in state.velocities[i]]
        fh.write(",".join(row) + "\n")


def read_particles_csv(fh: IO[str], torus_side: float | None = None) -> ParticleState:
    header = fh.readline().strip().split(",")
    xcols = [j for j, c in enumerate(header) if c.startswith("x")]
    vcols = [j for j, c in enumerate(header) if c.startswith("v")]
    rows = [line.strip().split(",") for line in fh if line.strip()]
    t = float(rows[0][0]) if rows else 0.0
    pos = np.array([[float(r[j]) for j in xcols] for r in rows])
    vel = np.array([[float(r[j]) for j in vcols] for r in rows]) if vcols else None
    return ParticleState(pos, vel, t, torus_side)
