"""Exception hierarchy shared by all modules.

Each class carries an ``exit_code`` so the command line layer can map
failures onto process exit codes without inspecting messages.
"""


class ThinFilmError(Exception):
    exit_code = 3


class ConfigError(ThinFilmError):
    exit_code = 2


class InvalidResolution(ConfigError):
    pass


class OutputError(ThinFilmError):
    exit_code = 4


class GeometryError(ThinFilmError):
    """Raised when a boundary deviation does not define a diffeomorphism."""


class SolverError(ThinFilmError):
    pass


class SingularSystem(SolverError):
    pass


class StagnationError(SolverError):
    pass


class ContractionError(SolverError):
    """Fixed-point iteration with a measured factor >= 1."""


class DivergenceError(SolverError):
    pass


class BallExitError(SolverError):
    pass


class DegeneracyError(SolverError):
    pass


class InfeasibleBackground(SolverError):
    pass
