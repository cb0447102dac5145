"""Numerical toolkit for a thin-film free boundary problem with a moving
contact line: graded collar meshes, weighted Holder norms, the model
fourth-order operator, the linearized coupled system and a chord Newton
driver for the nonlinear problem."""

from .errors import ConfigError, OutputError, SolverError, ThinFilmError

__version__ = "0.1.0"

__all__ = ["ConfigError", "OutputError", "SolverError", "ThinFilmError", "__version__"]
