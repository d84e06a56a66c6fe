"""Exceptions raised by the solvers and data layer."""


class SolverError(RuntimeError):
    """Base class for failures that abort a run.

    ``result`` holds the partial :class:`~adabfgs.solver.RunResult` when the
    error is raised from inside :func:`~adabfgs.solver.run`.
    """

    termination = "Error"

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class CurvatureBreakdown(SolverError):
    termination = "CurvatureBreakdown"


class LineSearchFailure(SolverError):
    termination = "LineSearchFailure"


class InconsistentConstants(SolverError):
    termination = "InconsistentConstants"


class ReferenceNotReached(SolverError):
    """The reference solve stopped short of its gradient tolerance."""

    termination = "ReferenceNotReached"

    def __init__(self, message, x_best, f_best, result=None):
        super().__init__(message, result)
        self.x_best = x_best
        self.f_best = f_best


class ParseError(ValueError):
    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line
