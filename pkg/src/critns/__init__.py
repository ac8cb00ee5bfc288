"""Pseudo-spectral laboratory for mild Navier-Stokes solutions on a periodic box."""

__version__ = "0.1.0"

from .contraction import BilinearFixedPointProblem, FixedPointResult, estimate_eta, radius_bound, solve_fixed_point
from .criticality import (
    CutoffSpec,
    NormRecord,
    bilinear_constants,
    blowup_monitor,
    decay_audit,
    e_norm,
    energy_audit,
    f_norm,
    l5_spacetime,
    local_energy_balance,
    local_smallness,
    weighted_sup,
)
from .errors import (
    ConfigError,
    CoverageError,
    CritnsError,
    DomainError,
    IncomparableError,
    MalformedFieldError,
    OutOfRegimeError,
    ProfileError,
    SnapshotFormatError,
    StepFailure,
)
from .mild_solver import SolverConfig, cross_check_uniqueness, integrate_interval, solve, step
from .operators import (
    QuadratureRule,
    duhamel_bilinear,
    heat_semigroup,
    leray_project,
    nonlinear_term,
    nse_residual,
    oseen_apply,
    pressure_from_velocity,
)
from .snapshot_io import export_field, ingest_field
from .spectral_field import (
    GridSpec,
    PhysicalField,
    SpectralField,
    lebesgue_norm,
    sobolev_norm,
    to_physical,
    to_spectral,
)
from .symmetry_profiles import (
    AnalyticDatum,
    ProfileSpec,
    SimilarityFrame,
    compactness_diagnostic,
    place_profile,
    sample_datum,
    scale_solution,
    similarity_frame_track,
)
from .trajectory import Trajectory
