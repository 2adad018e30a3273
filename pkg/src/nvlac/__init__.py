"""NV centre with a first-shell 13C and the host 14N: level anti-crossings,
Ramsey spectra, quasi-static noise and MW field-vector reconstruction."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConvergenceError,
    InconsistentInputError,
    LineExtractionError,
    NvLacError,
    TrackingError,
    ValidationError,
)
from .hamiltonian import (  # noqa: E402
    DriveField,
    FieldVector,
    SpinSystemParams,
    build_static_hamiltonian,
    load_params,
)
from .kernels import BACKEND  # noqa: E402
from .levels import Sweep, diagonalize, find_lac, sweep_levels  # noqa: E402

__all__ = [
    "__version__", "BACKEND",
    "NvLacError", "ValidationError", "TrackingError", "ConvergenceError",
    "LineExtractionError", "InconsistentInputError",
    "SpinSystemParams", "FieldVector", "DriveField", "build_static_hamiltonian", "load_params",
    "Sweep", "diagonalize", "sweep_levels", "find_lac",
]
