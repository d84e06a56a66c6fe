"""BFGS with adaptive, self-concordance based step sizes (no line search)."""

from .errors import (CurvatureBreakdown, InconsistentConstants, LineSearchFailure, ParseError,
                     ReferenceNotReached, SolverError)
from .estimator import HessianEstimate, potential
from .objective import (CountingObjective, LogisticObjective, QuadraticObjective,
                        SmoothnessConstants, logistic_constants)
from .solver import METHODS, IterationRecord, RunConfig, RunResult, run, solve_reference
from .stepsize import StepContext, StepDecision, adaptive_step, sa2_step

__version__ = "0.1.0"
