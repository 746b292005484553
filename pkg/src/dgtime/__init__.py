"""Discontinuous Galerkin time integration for ``P u'' + L u' + K u = f``."""
from .analysis import (
    ConditionEstimate,
    ConvergenceReport,
    EnergyBreakdown,
    ErrorFunction,
    ExactSolution,
    StabilityReport,
    apply_bilinear_form,
    apply_linear_functional,
    condition_estimate,
    convergence_study,
    energy_error,
    energy_norm,
    stability_monitor,
)
from .basis import (
    LEGENDRE,
    LOBATTO,
    QuadratureRule,
    ReferenceBasis,
    TimeMatrixSet,
    TimeMesh,
    assemble_time_matrices,
    build_basis,
    gauss_rule,
    time_matrices,
)
from .errors import (
    AssemblyError,
    ConfigurationError,
    DGTimeError,
    MatrixMarketError,
    SolverError,
    ValidationError,
)
from .mmio import load_matrix_market, write_matrix_market
from .slab import SlabOperators, SlabRhs, assemble_slab_operators, assemble_slab_rhs
from .solver import SlabSolution, SolverOptions, Trajectory, evaluate, march, solve_slab
from .system import BlockSystemView, ForcingSpec, SecondOrderSystem, build_system, first_order_view
from .wave1d import ManufacturedCase1D, WaveModel1D, assemble_wave_1d, manufactured_case

__version__ = "0.1.0"
