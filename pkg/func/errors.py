"""Exception types shared by the pipeline steps.

Every error carries the process exit code the command line reports for it.
"""


class PistressError(Exception):
    exitCode = 1


class ConfigError(PistressError):
    exitCode = 1


class DataError(PistressError):
    exitCode = 2


class MeshError(DataError, ValueError):
    """Invalid geometry parameters or a mesh that fails validation."""


class NumericalError(PistressError):
    exitCode = 3


class SolverError(NumericalError):
    """Singular or non-finite finite-element system."""


class DivergenceError(NumericalError):
    """Training produced a non-finite loss."""
