"""Position, velocity and time estimation."""
from .kalman import FilterConfig, FilterState, init_from_wls, kf_predict, kf_update
from .pipeline import RunReport, solve_epoch_wls, solve_epochs, solve_file
from .wls import Dop, PvtSolution, dop_of, geometry_rows, wls_solve

__all__ = [
    "Dop", "FilterConfig", "FilterState", "PvtSolution", "RunReport", "dop_of",
    "geometry_rows", "init_from_wls", "kf_predict", "kf_update", "solve_epoch_wls",
    "solve_epochs", "solve_file", "wls_solve",
]
