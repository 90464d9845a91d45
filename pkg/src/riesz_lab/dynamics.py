"""Time integration of the first-order interacting system and the
confined Newtonian system, the exactly solvable 1D Coulomb oracle,
microscopic and total modulated energies, and the empirical current.

First-order:  dx_i = [ (1/N) sum_{j!=i} M grad g(x_i - x_j) - Vf(x_i) ] dt
              (+ sqrt(2/beta) dW_i at finite inverse temperature beta),
with M repulsive (symmetric part negative semidefinite).

Newtonian:    dx_i = v_i dt,
              dv_i = [ -gamma v_i - (1/eps^2) ( (1/N) sum grad g + grad V ) ] dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _accel
from .energy import VectorField, modulated_energy
from .kernels import KernelDomainError, KernelSpec
from .measures import DensityField, ParticleState

__all__ = [
    "Quadratic",
    "GriddedField",
    "FlowParams",
    "ConfigurationError",
    "IntegrationError",
    "first_order_drift",
    "step_first_order",
    "integrate_first_order",
    "step_newtonian",
    "integrate_newtonian",
    "coulomb_1d_centers",
    "exact_1d_coulomb",
    "microscopic_energy",
    "interaction_energy",
    "total_modulated_energy",
    "empirical_current",
    "current_amplitude",
]


class ConfigurationError(ValueError):
    pass


class IntegrationError(RuntimeError):
    def __init__(self, msg: str, pair: tuple[int, int] | None = None, time: float | None = None):
        super().__init__(msg)
        self.pair = pair
        self.time = time


@dataclass(frozen=True)
class Quadratic:
    """Confinement V(x) = (coefficient/2) |x|^2, force field grad V = coefficient x."""

    coefficient: float

    def force(self, x: np.ndarray) -> np.ndarray:
        return self.coefficient * x

    def potential(self, x: np.ndarray) -> np.ndarray:
        return 0.5 * self.coefficient * (x**2).sum(axis=1)


@dataclass(frozen=True)
class GriddedField:
    """Force-field values on a torus grid, one component per leading index."""

    components: np.ndarray
    side: float

    def force(self, x: np.ndarray) -> np.ndarray:
        vf = VectorField.from_grid(self.components, self.side)
        return vf(x)

    def potential(self, x: np.ndarray) -> np.ndarray:
        raise ConfigurationError("gridded external fields carry forces, not potentials")


ExternalField = Optional[Quadratic | GriddedField]

_SCHEMES = ("rk4", "euler_maruyama", "leapfrog")


@dataclass(frozen=True)
class FlowParams:
    m_matrix: np.ndarray | float
    beta: float = math.inf
    gamma: float = 0.0
    epsilon: float = 1.0
    external: ExternalField = None
    dt: float = 1e-3
    scheme: str = "rk4"

    def __post_init__(self):
        if self.scheme not in _SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.gamma < 0:
            raise ConfigurationError("gamma must be >= 0")
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")
        if not self.beta > 0:
            raise ConfigurationError("beta must be positive (use math.inf for zero temperature)")
        if self.beta == math.inf and self.scheme == "euler_maruyama":
            raise ConfigurationError("euler_maruyama requires finite beta")
        if self.beta < math.inf and self.scheme in ("rk4", "leapfrog"):
            raise ConfigurationError("finite beta requires the euler_maruyama scheme")

    def m_array(self, d: int) -> np.ndarray:
        m = np.atleast_2d(np.asarray(self.m_matrix, dtype=np.float64))
        if m.shape == (1, 1) and d > 1:
            m = m[0, 0] * np.eye(d)
        if m.shape != (d, d):
            raise ConfigurationError(f"interaction matrix shape {m.shape} != ({d},{d})")
        sym = 0.5 * (m + m.T)
        if np.linalg.eigvalsh(sym).max() > 1e-12:
            raise ConfigurationError("interaction matrix must have negative semidefinite symmetric part")
        return m


# ---------------------------------------------------------------------------
# forces
# ---------------------------------------------------------------------------


def _interaction_gradient_sum(state_pos: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """(1/N) sum_{j != i} grad g(x_i - x_j), rows indexed by i."""
    n = state_pos.shape[0]
    if spec.is_torus:
        L = spec.domain.side
        if spec.d == 1:
            S = _accel.sf_1d(np.ascontiguousarray(state_pos[:, 0]), L, spec.domain.cutoff)
        else:
            S = _accel.sf_nd(np.ascontiguousarray(state_pos), np.ascontiguousarray(spec.modes), L)
        out = np.empty_like(state_pos)
        for c in range(spec.d):
            coef = spec.ghat * (S / n) * (2j * math.pi * spec.modes[:, c] / L) / L**spec.d
            if spec.d == 1:
                out[:, c] = _accel.eval_modes_1d(coef, np.ascontiguousarray(state_pos[:, 0]), L)
            else:
                out[:, c] = _accel.eval_modes_nd(
                    coef, np.ascontiguousarray(spec.modes), np.ascontiguousarray(state_pos), L
                )
        return out
    return _accel.pair_force_free(np.ascontiguousarray(state_pos), spec.s) / n


def first_order_drift(pos: np.ndarray, params: FlowParams, spec: KernelSpec) -> np.ndarray:
    m = params.m_array(spec.d)
    drift = _interaction_gradient_sum(pos, spec) @ m.T
    if params.external is not None:
        drift = drift - params.external.force(pos)
    return drift


def _noise(n: int, d: int, seed: int, step: int) -> np.ndarray:
    # counter-based generator keyed by (seed, step): reproducible regardless
    # of thread schedule; one d-vector per particle in index order
    bitgen = np.random.Philox(key=np.uint64(seed) + (np.uint64(step) << np.uint64(20)))
    return np.random.Generator(bitgen).standard_normal((n, d))


def _collision_check(state: ParticleState, guard: float, t: float) -> None:
    if state.n < 2 or guard <= 0:
        return
    if state.min_distance < guard:
        pos = state.positions
        n = state.n
        worst = (0, 1)
        best = math.inf
        for i in range(n - 1):
            diff = pos[i + 1 :] - pos[i]
            if state.torus_side is not None:
                diff -= state.torus_side * np.round(diff / state.torus_side)
            d2 = (diff**2).sum(axis=1)
            j = int(np.argmin(d2))
            if d2[j] < best:
                best = float(d2[j])
                worst = (i, i + 1 + j)
        raise IntegrationError(
            f"particles {worst} collided (distance {math.sqrt(best):.3e}) at t={t:.6g}",
            pair=worst,
            time=t,
        )


def step_first_order(
    state: ParticleState,
    params: FlowParams,
    spec: KernelSpec,
    seed: int = 0,
    step_index: int = 0,
    collision_guard: float = 0.0,
) -> ParticleState:
    """One step of the first-order dynamics (RK4 when beta = inf,
    Euler-Maruyama otherwise)."""
    dt = params.dt
    pos = state.positions

    if params.scheme == "euler_maruyama":
        drift = first_order_drift(pos, params, spec)
        noise = _noise(state.n, state.d, seed, step_index)
        new = pos + dt * drift + math.sqrt(2.0 * dt / params.beta) * noise
    else:
        k1 = first_order_drift(pos, params, spec)
        k2 = first_order_drift(pos + 0.5 * dt * k1, params, spec)
        k3 = first_order_drift(pos + 0.5 * dt * k2, params, spec)
        k4 = first_order_drift(pos + dt * k3, params, spec)
        new = pos + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if state.torus_side is not None:
        new = np.mod(new, state.torus_side)
    out = ParticleState(new, None, state.time + dt, state.torus_side)
    _collision_check(out, collision_guard, out.time)
    return out


def integrate_first_order(
    state: ParticleState,
    params: FlowParams,
    spec: KernelSpec,
    n_steps: int,
    seed: int = 0,
    snapshot_every: int = 0,
    collision_guard: float = 0.0,
) -> list[ParticleState]:
    """Advance n_steps; returns snapshots (always includes first and last)."""
    snaps = [state]
    cur = state
    for step in range(n_steps):
        cur = step_first_order(cur, params, spec, seed, step, collision_guard)
        if snapshot_every and (step + 1) % snapshot_every == 0 and step + 1 < n_steps:
            snaps.append(cur)
    snaps.append(cur)
    return snaps


# ---------------------------------------------------------------------------
# Newtonian dynamics
# ---------------------------------------------------------------------------


def _newton_interaction_accel(pos: np.ndarray, params: FlowParams, spec: KernelSpec) -> np.ndarray:
    acc = _interaction_gradient_sum(pos, spec)
    if params.external is not None:
        acc = acc + params.external.force(pos)
    return -acc / params.epsilon**2


def step_newtonian(
    state: ParticleState,
    params: FlowParams,
    spec: KernelSpec,
    collision_guard: float = 0.0,
) -> ParticleState:
    """One Newtonian step: leapfrog (gamma = 0) or semi-implicit Euler with
    exact exponential damping (gamma > 0).  Requires dt <= eps/20."""
    if state.velocities is None:
        raise ConfigurationError("newtonian step requires velocities")
    dt = params.dt
    if dt > params.epsilon / 20.0:
        raise ConfigurationError(
            f"dt={dt} too large for the fast scale: need dt <= eps/20 = {params.epsilon / 20.0:.3e}"
        )
    pos, vel = state.positions, state.velocities
    if params.gamma == 0.0:
        a0 = _newton_interaction_accel(pos, params, spec)
        vh = vel + 0.5 * dt * a0
        new_pos = pos + dt * vh
        a1 = _newton_interaction_accel(new_pos, params, spec)
        new_vel = vh + 0.5 * dt * a1
    else:
        a0 = _newton_interaction_accel(pos, params, spec)
        new_vel = (vel + dt * a0) * math.exp(-params.gamma * dt)
        new_pos = pos + dt * new_vel
    if state.torus_side is not None:
        new_pos = np.mod(new_pos, state.torus_side)
    out = ParticleState(new_pos, new_vel, state.time + dt, state.torus_side)
    _collision_check(out, collision_guard, out.time)
    return out


def integrate_newtonian(
    state: ParticleState,
    params: FlowParams,
    spec: KernelSpec,
    n_steps: int,
    snapshot_every: int = 0,
    collision_guard: float = 0.0,
) -> list[ParticleState]:
    snaps = [state]
    cur = state
    for step in range(n_steps):
        cur = step_newtonian(cur, params, spec, collision_guard)
        if snapshot_every and (step + 1) % snapshot_every == 0 and step + 1 < n_steps:
            snaps.append(cur)
    snaps.append(cur)
    return snaps


# ---------------------------------------------------------------------------
# exactly solvable 1D Coulomb gas with quadratic confinement
# ---------------------------------------------------------------------------


def coulomb_1d_centers(n: int) -> np.ndarray:
    """Stationary points of the confined 1D Coulomb gas: c_i = (2i-1-N)/(2N).

    Derived by setting the net force of g = -|x|, V = x^2 to zero for an
    ordered configuration: the interaction force on particle i is
    (2i-1-N)/N, so c_i solves 2 c_i = (2i-1-N)/N.  These are the midpoint
    quantiles of the uniform equilibrium density on [-1/2, 1/2].
    """
    i = np.arange(1, n + 1, dtype=np.float64)
    return (2.0 * i - 1.0 - n) / (2.0 * n)


def exact_1d_coulomb(
    x0: np.ndarray, v0: np.ndarray, eps: float, t: float
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Closed-form solution of the Newtonian 1D Coulomb gas (g = -|x|,
    V = x^2, gamma = 0) from strictly ordered initial positions.

    While the order is preserved the interaction force on each particle is
    constant, so eps^2 x_i'' = -2 x_i + (2i-1-N)/N: harmonic motion about
    the rank-determined center c_i with frequency omega = sqrt(2)/eps.
    Returns (positions, velocities, order_ok); order_ok is False when the
    ordering fails somewhere in [0, t], in which case the returned state is
    the formula's continuation and not the true dynamics.
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    v0 = np.asarray(v0, dtype=np.float64).reshape(-1)
    n = x0.size
    if n > 1 and not np.all(np.diff(x0) > 0):
        raise KernelDomainError("exact_1d_coulomb requires strictly increasing positions")
    omega = math.sqrt(2.0) / eps
    c = coulomb_1d_centers(n)
    y0 = x0 - c
    x = c + y0 * math.cos(omega * t) + (v0 / omega) * math.sin(omega * t)
    v = -y0 * omega * math.sin(omega * t) + v0 * math.cos(omega * t)
    order_ok = True
    if n > 1:
        dc = np.diff(c)
        dy = np.diff(y0)
        dv = np.diff(v0) / omega
        amp = np.sqrt(dy**2 + dv**2)
        if t * omega >= 2.0 * math.pi:
            order_ok = bool(np.all(dc - amp > 0))
        else:
            phases = np.linspace(0.0, omega * t, 512)
            gaps = dc[:, None] + dy[:, None] * np.cos(phases) + dv[:, None] * np.sin(phases)
            order_ok = bool(gaps.min() > 0)
    return x, v, order_ok


# ---------------------------------------------------------------------------
# energies and currents
# ---------------------------------------------------------------------------


def microscopic_energy(state: ParticleState, spec: KernelSpec, external: ExternalField) -> float:
    """H_N = (2N)^(-1) sum_{i != j} g(x_i - x_j) + sum_i V(x_i)."""
    n = state.n
    if spec.is_torus:
        raise KernelDomainError("microscopic energy is a free-space diagnostic")
    pair = _accel.pair_sum_g_free(np.ascontiguousarray(state.positions), spec.s)
    total = pair / (2.0 * n)
    if external is not None:
        total += float(external.potential(state.positions).sum())
    return total


def interaction_energy(state: ParticleState, spec: KernelSpec) -> float:
    """(1/(2 N^2)) sum_{i != j} g(x_i - x_j) (free space)."""
    if spec.is_torus:
        raise KernelDomainError("interaction_energy is a free-space diagnostic")
    return _accel.pair_sum_g_free(np.ascontiguousarray(state.positions), spec.s) / (
        2.0 * state.n**2
    )


def total_modulated_energy(
    state: ParticleState,
    u: VectorField | None,
    mu_v: DensityField,
    zeta: Callable[[np.ndarray], np.ndarray],
    eps: float,
    spec: KernelSpec,
) -> dict:
    """Kinetic + rescaled potential + confinement-excess parts:

    (1/2N) sum |v_i - u(x_i)|^2 + eps^(-2) F_N(X, mu_V)
                                + (eps^2 N)^(-1) sum zeta(x_i).

    The flat-limit corrector is taken to vanish, so this is exact only in
    regimes with stationary transport (u = 0) or the 1D oracle.
    """
    if state.velocities is None:
        raise ConfigurationError("total modulated energy requires velocities")
    vel = state.velocities
    if u is not None:
        vel = vel - u(state.positions)
    kinetic = 0.5 * float((vel**2).sum()) / state.n
    potential = modulated_energy(state, mu_v, spec).fn / eps**2
    zeta_vals = np.asarray(zeta(state.positions), dtype=np.float64).reshape(-1)
    zeta_term = float(zeta_vals.sum()) / (eps**2 * state.n)
    return {
        "kinetic": kinetic,
        "potential": potential,
        "zeta": zeta_term,
        "total": kinetic + potential + zeta_term,
    }


def empirical_current(state: ParticleState) -> tuple[np.ndarray, np.ndarray]:
    """J_N = (1/N) sum v_i delta_{x_i}: returns (positions, weights)."""
    if state.velocities is None:
        raise ConfigurationError("empirical current requires velocities")
    return state.positions.copy(), state.velocities / state.n


def current_amplitude(state: ParticleState) -> float:
    """Total-variation mass of J_N against 1: (1/N) sum |v_i|."""
    if state.velocities is None:
        raise ConfigurationError("empirical current requires velocities")
    return float(np.sqrt((state.velocities**2).sum(axis=1)).sum()) / state.n
