"""Diffusions with quantum drifts: spectra, Fokker-Planck evolution, controlling potentials.

Subpackages
-----------
core       units, grids, oscillator closed forms, HJM residual
kummer     confluent hypergeometric function M(a, b; z)
spectral   self-adjoint reduction and eigen-expansion on inter-node intervals
fpsolver   conservative Fokker-Planck time integration
oracles    closed-form transition densities
control    phases and potentials realising prescribed evolutions
sde        Euler-Maruyama particle ensembles
io, config plain-text formats and run configuration
cli        command-line front end
"""
from .core import (
    UNIT_PARAMS,
    DomainError,
    GridFunction,
    PhysicalParams,
    VelocityField,
    derive_params,
    hjm_residual,
    ho_eigenfunction,
    ho_velocity,
    make_grid,
)
from .kummer import confluent_M
from .spectral import ho_decomposition, ho_interval_eigenvalues, solve_sturm_liouville
from .fpsolver import FPProblem, evolve_fp
from .oracles import n1_transition, ou_transition
from .control import build_scenario
from .sde import simulate

__version__ = "0.1.0"

__all__ = [
    "UNIT_PARAMS",
    "DomainError",
    "GridFunction",
    "PhysicalParams",
    "VelocityField",
    "derive_params",
    "hjm_residual",
    "ho_eigenfunction",
    "ho_velocity",
    "make_grid",
    "confluent_M",
    "ho_decomposition",
    "ho_interval_eigenvalues",
    "solve_sturm_liouville",
    "FPProblem",
    "evolve_fp",
    "n1_transition",
    "ou_transition",
    "build_scenario",
    "simulate",
]
