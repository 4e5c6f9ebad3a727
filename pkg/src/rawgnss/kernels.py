"""Kernel backend selection.

The compiled extension ``_ckernels`` is preferred; when it is missing, or the
environment variable ``RAWGNSS_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the pure-Python implementations are used instead.
"""
import os

from . import _kernels_py

_force_pure = os.environ.get("RAWGNSS_PURE_PYTHON", "") not in ("", "0")

if _force_pure:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

kepler_solve = _impl.kepler_solve
gps_orbit = _impl.gps_orbit
glonass_propagate = _impl.glonass_propagate
joseph_update = _impl.joseph_update


def available_backends():
    """Mapping of backend name to module for every importable backend."""
    backends = {"python": _kernels_py}
    try:
        from . import _ckernels
        backends["cython"] = _ckernels
    except ImportError:
        pass
    return backends
