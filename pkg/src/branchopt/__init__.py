"""Compliance-based shape optimization on decomposed rectangular domains.

The package computes optimal material layouts for linearly elastic plane
stress problems where the domain is tiled by rectangular subdomains that
share reference patterns (periodic and branching-periodic layouts).  The
state equation is a stress-based finite-volume force balance; the design
variable is a per-cell phase field driven by an alternating descent.
"""

from .assembly import (
    ConstraintSystem,
    DofLayout,
    StressClass,
    VClass,
    assemble_system,
    check_load_compatibility,
    index_dofs,
    initial_phase,
    reduce_rank,
)
from .config import (
    BoundaryLoad,
    LoadCase,
    RunConfig,
    compression_load,
    load_run_config,
    parse_decomposition,
    parse_loads,
    shear_load,
)
from .decomp import (
    Decomposition,
    FacetRecord,
    Rect,
    SubdomainSpec,
    periodic_lineups,
    reference_classes,
    validate_decomposition,
)
from .driver import (
    DescentReport,
    IterationRecord,
    alternate_descent,
    default_epsilon,
    total_objective,
)
from .equilibrium import (
    ComplianceWeights,
    ForceField,
    SolverCache,
    build_weights,
    cell_stress,
    elastic_energy,
    solve_state,
    stress_tensors,
    vclass_stress_magnitudes,
)
from .errors import (
    BranchoptError,
    DomainError,
    FactorizationFailure,
    GapError,
    GridMismatchError,
    IncompatibleFacetError,
    IncompatibleLoadError,
    IncongruentReferenceError,
    InconsistentSystemError,
    NoConvergenceError,
    NonMonotoneWarning,
    OverlapError,
    PhaseOutOfRangeError,
)
from .fieldsio import (
    GlobalRaster,
    assemble_mosaic,
    read_field_csv,
    render_report,
    von_mises,
    write_outputs,
)
from .phasefield import (
    CellState,
    PhaseParams,
    cell_objective,
    gauss_seidel_sweep,
    newton_cell,
    sweep_fields,
    two_well_init,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryLoad",
    "BranchoptError",
    "CellState",
    "ComplianceWeights",
    "ConstraintSystem",
    "Decomposition",
    "DescentReport",
    "DofLayout",
    "DomainError",
    "FacetRecord",
    "FactorizationFailure",
    "ForceField",
    "GapError",
    "GlobalRaster",
    "GridMismatchError",
    "IncompatibleFacetError",
    "IncompatibleLoadError",
    "IncongruentReferenceError",
    "InconsistentSystemError",
    "IterationRecord",
    "LoadCase",
    "NoConvergenceError",
    "NonMonotoneWarning",
    "OverlapError",
    "PhaseOutOfRangeError",
    "PhaseParams",
    "Rect",
    "RunConfig",
    "SolverCache",
    "StressClass",
    "SubdomainSpec",
    "VClass",
    "alternate_descent",
    "assemble_mosaic",
    "assemble_system",
    "build_weights",
    "cell_objective",
    "cell_stress",
    "check_load_compatibility",
    "compression_load",
    "default_epsilon",
    "elastic_energy",
    "gauss_seidel_sweep",
    "index_dofs",
    "initial_phase",
    "load_run_config",
    "newton_cell",
    "parse_decomposition",
    "parse_loads",
    "periodic_lineups",
    "read_field_csv",
    "reduce_rank",
    "reference_classes",
    "render_report",
    "shear_load",
    "solve_state",
    "stress_tensors",
    "sweep_fields",
    "total_objective",
    "two_well_init",
    "validate_decomposition",
    "vclass_stress_magnitudes",
    "von_mises",
    "write_outputs",
]
