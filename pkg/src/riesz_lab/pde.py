"""Pseudo-spectral solver for the mean-field equation on the torus
(d = 1, 2), the mean-field velocity, the macroscopic energy, and
dissipation diagnostics.

    d/dt mu = div((Vf - M grad g * mu) mu) + (1/beta) Laplacian mu

advanced by RK4 with spectral evaluation of grad g * mu and 2/3-rule
dealiasing of the transport product.  Mass (the zero mode) is conserved
exactly by the divergence form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ConfigurationError, FlowParams
from .energy import VectorField, _mesh_points
from .kernels import CapabilityError, KernelSpec
from .measures import DensityField, GriddedTorus, TorusUniform, UniformInterval, gridded_torus

__all__ = ["MeanFieldRun", "solve_mf_pde", "mf_velocity", "mean_field_energy"]


class InstabilityError(RuntimeError):
    pass


@dataclass
class MeanFieldRun:
    grid_n: int
    dt: float
    final_time: float
    times: list
    snapshots: list  # DensityField per time
    velocities: list  # VectorField per time
    beta: float
    m_matrix: np.ndarray


def _fft_freqs(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0 / n)


class _Spectral:
    """Cached multiplier tables for one (spec, grid) pair."""

    def __init__(self, spec: KernelSpec, n: int, mode_cutoff: int | None):
        if not spec.is_torus:
            raise CapabilityError("mean-field solver runs on the torus")
        if spec.d not in (1, 2):
            raise CapabilityError("mean-field solver supports d = 1, 2")
        self.spec = spec
        self.n = n
        self.L = spec.domain.side
        self.d = spec.d
        freq = _fft_freqs(n)
        if self.d == 1:
            kk = freq
            k2 = freq**2
            self.ik = [2j * math.pi * kk / self.L]
        else:
            k2 = freq[:, None] ** 2 + freq[None, :] ** 2
            self.ik = [
                2j * math.pi * freq[:, None] * np.ones((1, n)) / self.L,
                2j * math.pi * np.ones((n, 1)) * freq[None, :] / self.L,
            ]
        self.ghat = spec.grid_multiplier(n)
        if mode_cutoff is not None:
            self.ghat = np.where(np.sqrt(k2) <= mode_cutoff, self.ghat, 0.0)
        self.lap = -((2.0 * math.pi / self.L) ** 2) * k2
        # 2/3-rule mask for the quadratic transport product
        self.dealias = np.sqrt(k2) <= (n / 3.0)
        # stiffest linearized interaction rate per unit density: the term
        # div((grad g * mu) mu_bar) damps mode k at mu_bar ghat(k) |2 pi k/L|^2
        active = np.where(self.dealias, self.ghat * (2.0 * math.pi / self.L) ** 2 * k2, 0.0)
        self.stiffness_per_density = float(active.max())

    def velocity(self, mu_hat: np.ndarray, m: np.ndarray, ext_force) -> list[np.ndarray]:
        """u = -M grad g * mu + Vf on the grid (list of d components)."""
        gradpot = [np.fft.ifftn(self.ghat * ik * mu_hat).real for ik in self.ik]
        comps = []
        for a in range(self.d):
            acc = np.zeros_like(gradpot[0])
            for b in range(self.d):
                acc -= m[a, b] * gradpot[b]
            comps.append(acc)
        if ext_force is not None:
            pts = self._grid_points()
            f = ext_force(pts)
            for a in range(self.d):
                comps[a] = comps[a] + f[:, a].reshape(comps[a].shape)
        return comps

    def _grid_points(self) -> np.ndarray:
        ax = np.arange(self.n) * (self.L / self.n)
        return ax[:, None] if self.d == 1 else _mesh_points(ax)

    def rhs(self, mu: np.ndarray, m: np.ndarray, beta: float, ext_force) -> np.ndarray:
        mu_hat = np.fft.fftn(mu)
        u = self.velocity(mu_hat, m, ext_force)
        div_hat = np.zeros_like(mu_hat)
        for a in range(self.d):
            prod_hat = np.fft.fftn(u[a] * mu) * self.dealias
            div_hat += self.ik[a] * prod_hat
        if beta != math.inf:
            div_hat = div_hat + self.lap * mu_hat / beta
        return np.fft.ifftn(div_hat).real


def solve_mf_pde(
    mu0: DensityField,
    params: FlowParams,
    spec: KernelSpec,
    t_final: float,
    snapshot_every: int = 0,
    mode_cutoff: int | None = None,
    cfl: float = 0.8,
) -> MeanFieldRun:
    """Advance the mean-field equation to t_final; snapshots carry both the
    density and the transport field u = -M grad g * mu + Vf.

    Negative excursions below -1e-9 raise; smaller ones are clipped with
    mass renormalization.  The advective CFL number is checked each step.
    """
    if not isinstance(mu0.kind, GriddedTorus):
        raise CapabilityError("solver needs a gridded initial density")
    n = mu0.kind.values.shape[0]
    if n & (n - 1) != 0:
        raise ConfigurationError("grid size must be a power of two")
    sp = _Spectral(spec, n, mode_cutoff)
    m = params.m_array(spec.d)
    dt = params.dt
    n_steps = int(round(t_final / dt))
    ext = params.external.force if params.external is not None else None
    mu = mu0.kind.values.copy()
    dx = sp.L / n
    # explicit RK4 stability for the stiff interaction and diffusion parts
    stiff = sp.stiffness_per_density * float(mu.max())
    if params.beta != math.inf:
        stiff += (math.pi * n / sp.L) ** 2 / params.beta
    if stiff * dt > 2.5:
        raise ConfigurationError(
            f"dt={dt:.3e} unstable for the interaction stiffness: need dt <= {2.5 / stiff:.3e}"
        )

    def snap(t, mu_arr):
        mu_hat = np.fft.fftn(mu_arr)
        u = sp.velocity(mu_hat, m, ext)
        dens = gridded_torus(mu_arr.copy(), sp.L)
        field = VectorField.from_grid(np.stack(u, axis=0), sp.L)
        return t, dens, field

    times, snaps, vels = [], [], []
    t0, d0, v0 = snap(0.0, mu)
    times.append(t0), snaps.append(d0), vels.append(v0)
    for step in range(n_steps):
        u = sp.velocity(np.fft.fftn(mu), m, ext)
        umax = max(float(np.abs(c).max()) for c in u)
        if umax * dt > cfl * dx:
            raise ConfigurationError(
                f"CFL violation at step {step}: |u| dt = {umax * dt:.3e} > {cfl} dx = {cfl * dx:.3e}"
            )
        k1 = sp.rhs(mu, m, params.beta, ext)
        k2 = sp.rhs(mu + 0.5 * dt * k1, m, params.beta, ext)
        k3 = sp.rhs(mu + 0.5 * dt * k2, m, params.beta, ext)
        k4 = sp.rhs(mu + dt * k3, m, params.beta, ext)
        mu = mu + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        mn = float(mu.min())
        if mn < -1e-9:
            raise InstabilityError(f"density reached {mn:.3e} at step {step}")
        if mn < 0.0:
            mu = np.clip(mu, 0.0, None)
            mu *= 1.0 / (mu.sum() * dx**sp.d)
        t = (step + 1) * dt
        if (snapshot_every and (step + 1) % snapshot_every == 0) or step + 1 == n_steps:
            tt, dd, vv = snap(t, mu)
            times.append(tt), snaps.append(dd), vels.append(vv)
    return MeanFieldRun(
        grid_n=n,
        dt=dt,
        final_time=n_steps * dt,
        times=times,
        snapshots=snaps,
        velocities=vels,
        beta=params.beta,
        m_matrix=m,
    )


def mf_velocity(mu: DensityField, params: FlowParams, spec: KernelSpec, mode_cutoff: int | None = None) -> VectorField:
    """u = -M grad g * mu + Vf on the density's grid."""
    if not isinstance(mu.kind, GriddedTorus):
        if isinstance(mu.kind, TorusUniform) and params.external is None:
            n = 64
            z = np.zeros((spec.d,) + (n,) * spec.d)
            return VectorField.from_grid(z, mu.kind.side)
        raise CapabilityError("mf_velocity needs a gridded torus density")
    n = mu.kind.values.shape[0]
    sp = _Spectral(spec, n, mode_cutoff)
    ext = params.external.force if params.external is not None else None
    u = sp.velocity(np.fft.fftn(mu.kind.values), params.m_array(spec.d), ext)
    return VectorField.from_grid(np.stack(u, axis=0), spec.domain.side)


def mean_field_energy(mu: DensityField, external, spec: KernelSpec, mode_cutoff: int | None = None) -> float:
    """E(mu) = integral V dmu + (1/2) double integral g dmu dmu."""
    k = mu.kind
    if isinstance(k, (TorusUniform, GriddedTorus)):
        if isinstance(k, TorusUniform):
            if external is not None:
                raise CapabilityError("uniform-density energy with confinement not supported")
            return 0.0
        n = k.values.shape[0]
        sp = _Spectral(spec, n, mode_cutoff)
        mu_hat = np.fft.fftn(k.values) * (k.side / n) ** sp.d
        pair = 0.5 * float(np.sum(sp.ghat * np.abs(mu_hat) ** 2)) / k.side**sp.d
        pot = 0.0
        if external is not None:
            pts = sp._grid_points()
            pot = float(
                (external.potential(pts) * k.values.ravel()).sum() * (k.side / n) ** sp.d
            )
        return pot + pair
    if isinstance(k, UniformInterval):
        from .measures import double_integral_g

        pair = 0.5 * double_integral_g(spec, mu)
        pot = 0.0
        if external is not None:
            # quadrature against the interval density
            xs = np.linspace(k.center - k.half_width, k.center + k.half_width, 4097)[:, None]
            vals = external.potential(xs)
            pot = float(np.trapezoid(vals, xs[:, 0]) * k.height)
        return pot + pair
    raise CapabilityError("unsupported density for mean_field_energy")
