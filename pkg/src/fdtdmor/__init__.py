"""Yee FDTD in matrix form, structure-preserving Krylov reduction, and
stability enforcement for timesteps beyond the CFL limit."""

__version__ = "0.1.0"

from .assembly import SystemMatrices, UpdatePair, assemble, build_update_pair, full_stability_check
from .errors import (
    AliasingError,
    ComparisonError,
    ConfigError,
    DegenerateReferenceError,
    DegenerateSourceError,
    DivergenceError,
    FdtdMorError,
    InvalidGridError,
    InvalidParameterError,
    InvariantViolation,
    SingularOperatorError,
    SolverFailure,
    StampError,
)
from .fdtd import StateVector, TimeSeries, run_full, step_full
from .grid import (
    BoundarySpec,
    GaussianPulse,
    GridSpec,
    MatchedAbsorber,
    MaterialMap,
    PEC,
    ProbeSpec,
    Sinusoid,
    SourceSpec,
    UserSamples,
    absorber_conductivity,
    absorber_profile,
    cfl_max_timestep,
)
from .post import (
    ResonanceList,
    SParameters,
    Spectrum,
    analytical_cavity_modes,
    extract_s_params,
    find_resonances,
    frequency_response,
)
from .reduced import ReducedState, reconstruct_probes, run_reduced, step_reduced
from .reduction import (
    ExpansionPointSet,
    ProjectionBasis,
    ReducedModel,
    build_basis,
    load_reduced_model,
    make_expansion_points,
    project,
)
from .solver import SchurSolver, ShiftedOperator, make_shifted, schur_solve
from .stability import (
    StabilityReport,
    enforce_stability,
    reduced_stability_check,
    update_eigenvalues,
)
