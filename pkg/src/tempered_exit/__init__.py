"""Simulation of nonisotropic tempered stable processes, their first exits from
bounded domains, and Monte Carlo solution of the associated Dirichlet problem."""

from .bounds import SuiteConfig, TheoremCheck, run_suite
from .dirichlet import BoundaryData, SolveReport, error_model, solve
from .errors import (
    AttemptLimitError,
    ConfigError,
    EmptySampleError,
    EvalDomainError,
    ExcessCensoringError,
    InsufficientTailError,
    ParseError,
    TemperedExitError,
)
from .expr import Expr, parse
from .paths import ExitRecord, ExitRecords, run_ensemble, simulate_cp_event, simulate_free, simulate_timestep
from .process_model import (
    AngularDensity,
    Ball,
    JumpLaw,
    LevelSetDomain,
    ModelParams,
    SimulationMode,
    direction_mean,
    drift_vector,
    radial_moment,
    radial_tail,
    renewal_intensity,
)
from .rng import RngStream
from .statistics import EstimateWithError, Histogram, estimate_pdf, mean_with_ci, tail_fit

__version__ = "0.1.0"
