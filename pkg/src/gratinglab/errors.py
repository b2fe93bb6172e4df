"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` (bad input or
configuration, CLI exit code 1) and :class:`SolverError` (a numerical
failure, CLI exit code 2).
"""


class GratingError(Exception):
    """Base class for all package errors."""


class ValidationError(GratingError, ValueError):
    pass


class SolverError(GratingError, RuntimeError):
    pass


# profile_geometry
class EmptyProfile(ValidationError):
    pass


class NonIncreasingBreakpoints(ValidationError):
    pass


class NonPositiveHeight(ValidationError):
    pass


# quasiperiodic_modes
class RayleighAnomaly(ValidationError):
    """Some beta_n is (numerically) zero; perturb k1 or theta."""


class GridTooCoarse(ValidationError):
    pass


# forward_solver
class HTooLow(ValidationError):
    pass


class InsufficientLevels(ValidationError):
    pass


class SingularSystem(SolverError):
    pass


# corner_analysis
class EtaZeroWrongBranch(ValidationError):
    pass


# inverse_solver
class DegenerateData(ValidationError):
    pass


class CandidateCapExceeded(ValidationError):
    pass


class EmptySearchSpace(ValidationError):
    pass
