"""Exception hierarchy shared by all modules.

Each class carries a distinct CLI exit code so scripted pipelines can tell
failure modes apart.
"""


class NvLacError(Exception):
    exit_code = 10


class ValidationError(NvLacError, ValueError):
    """Invalid physical parameters or malformed inputs."""

    exit_code = 11


class TrackingError(NvLacError):
    """Level continuity tracking lost a level; the grid is too coarse."""

    exit_code = 12

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(NvLacError):
    """A numerical procedure failed its convergence check."""

    exit_code = 13

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class LineExtractionError(NvLacError):
    """Spectral lines could not be resolved or the band is empty."""

    exit_code = 14


class InconsistentInputError(NvLacError, ValueError):
    """Measured inputs contradict the inversion model."""

    exit_code = 15
