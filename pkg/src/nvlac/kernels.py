"""Kernel backend selection.

The compiled extension is used when it imports; set ``NVLAC_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("NVLAC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on build
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "compiled"

greedy_assign = _impl.greedy_assign
split_step = _impl.split_step
prefix_propagators = _impl.prefix_propagators
lorentz_magnitude = _impl.lorentz_magnitude


def get_backend(name):
    """Return the kernel namespace for ``"python"`` or ``"compiled"``."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
