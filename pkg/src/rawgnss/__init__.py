"""Raw GNSS processing: broadcast orbits, corrections, WLS/Kalman positioning,
and pose-accuracy validation tools."""
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
