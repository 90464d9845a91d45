"""Numerical laboratory for Coulomb/Riesz interaction kernels, modulated
energies, transport commutators, interacting-particle dynamics, and the
mean-field equation on the torus."""

from ._accel import USING_NUMBA, set_threads
from .kernels import (
    BesselProfile,
    FreeSpace,
    GaussianProfile,
    KernelSpec,
    Torus,
    eval_g,
    eval_g_eta,
    eval_g_eta_diff,
    fundamental_constant,
    grad_g,
    hess_g,
    mellin_constant,
    torus_g,
)
from .measures import (
    DensityField,
    ParticleState,
    gridded_torus,
    kappa_scale,
    lambda_scale,
    nearest_neighbor_radii,
    potential_of_density,
    sample_iid,
    torus_uniform,
    uniform_interval,
)
from .energy import (
    ModulatedEnergyReport,
    VectorField,
    commutator_a1,
    commutator_a2,
    commutator_bound_rhs,
    energy_split,
    modulated_energy,
    sobolev_seminorm,
)
from .dynamics import (
    FlowParams,
    Quadratic,
    coulomb_1d_centers,
    exact_1d_coulomb,
    integrate_first_order,
    integrate_newtonian,
    microscopic_energy,
    total_modulated_energy,
)
from .equilibrium import equilibrium_1d_coulomb_quadratic, torus_uniform_equilibrium, zeta
from .pde import mean_field_energy, mf_velocity, solve_mf_pde

__version__ = "0.1.0"
