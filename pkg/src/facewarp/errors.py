"""Exception types shared across the package.

The command-line front-end maps these onto exit codes: ``FormatError`` is an
I/O or parse problem (1), ``ShapeError`` a broken shape contract (2) and
``NumericalError`` a failed solve or diverged fit (3).
"""


class FacewarpError(Exception):
    """Base class for all package errors."""


class FormatError(FacewarpError, ValueError):
    """A file or serialized value could not be parsed."""


class ShapeError(FacewarpError, ValueError):
    """Array shapes, counts or channel layouts do not agree."""


class NumericalError(FacewarpError, ArithmeticError):
    """A numerical procedure failed."""


class SingularSystemError(NumericalError):
    """A linear system is singular, usually due to degenerate control points."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap."""


class DivergenceError(NumericalError):
    """An optimization produced a non-finite loss."""
