"""Per-epoch weighted least squares with dilution of precision."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NoConvergence, SingularGeometry, Underdetermined
from ..frames import Geodetic, GnssTime, ecef_to_geodetic, ned_matrix

MAX_CONDITION = 1e10


@dataclass(frozen=True)
class Dop:
    gdop: float
    pdop: float
    hdop: float
    vdop: float
    tdop: float


@dataclass
class PvtSolution:
    time: GnssTime
    position: np.ndarray
    velocity: np.ndarray | None
    clock_bias: float                 # meters
    clock_drift: float | None         # m/s
    glonass_bias: float = 0.0         # meters
    covariance: np.ndarray | None = None
    dop: Dop | None = None
    n_sats_used: int = 0
    mode: str = "wls"
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0


def geometry_rows(measurements, position, with_glonass: bool) -> np.ndarray:
    """Design matrix rows ``[-los, 1, (is_glonass)]`` at ``position``."""
    n = len(measurements)
    g = np.zeros((n, 5 if with_glonass else 4))
    for i, m in enumerate(measurements):
        d = m.sat_state.position - position
        g[i, :3] = -d / np.linalg.norm(d)
        g[i, 3] = 1.0
        if with_glonass and m.is_glonass:
            g[i, 4] = 1.0
    return g


def dop_of(rows, receiver: Geodetic | np.ndarray) -> Dop:
    """Dilution of precision from unweighted geometry rows (``-los`` + clock columns)."""
    g = np.asarray(rows, dtype=float)
    if g.ndim != 2 or g.shape[0] < 4 or g.shape[0] < g.shape[1]:
        raise Underdetermined(f"{g.shape[0]} rows for {g.shape[1] if g.ndim == 2 else '?'} unknowns")
    if np.linalg.cond(g) > MAX_CONDITION:
        raise SingularGeometry("geometry matrix is rank deficient")
    q = np.linalg.inv(g.T @ g)
    if not isinstance(receiver, Geodetic):
        receiver = ecef_to_geodetic(receiver)
    c = ned_matrix(receiver)
    q_ned = c @ q[:3, :3] @ c.T
    pos_var = float(np.trace(q[:3, :3]))
    return Dop(
        gdop=math.sqrt(pos_var + q[3, 3]),
        pdop=math.sqrt(pos_var),
        hdop=math.sqrt(q_ned[0, 0] + q_ned[1, 1]),
        vdop=math.sqrt(q_ned[2, 2]),
        tdop=math.sqrt(q[3, 3]),
    )


def _min_sats(measurements):
    kinds = {m.is_glonass for m in measurements}
    return 5 if len(kinds) == 2 else 4


def wls_solve(measurements, initial_guess=None, max_iter: int = 10, tol: float = 1e-4) -> PvtSolution:
    """Gauss-Newton weighted least squares on corrected pseudoranges.

    Unknowns are ECEF position, receiver clock bias and, when both GPS and
    GLONASS are present, the GLONASS inter-system bias. Velocity and clock
    drift follow from a linear least squares on the pseudorange rates at the
    converged geometry. The covariance is ``(G^T W G)^-1``; DOP uses the
    unweighted geometry.
    """
    meas = list(measurements)
    x, it = solve_position(meas, initial_guess, max_iter, tol)
    return finish_solution(meas, x, it)


def _setup(meas):
    needed = _min_sats(meas)
    if len(meas) < needed:
        raise Underdetermined(f"{len(meas)} measurements, {needed} needed")
    z = np.array([m.corrected_pseudorange - m.iono_delay - m.tropo_delay for m in meas])
    sqrt_w = np.sqrt(np.array([m.weight for m in meas]))
    sat_pos = np.array([m.sat_state.position for m in meas])
    glo = np.array([m.is_glonass for m in meas], dtype=float)
    return needed == 5, z, sqrt_w, sat_pos, glo


def solve_position(measurements, initial_guess=None, max_iter: int = 10, tol: float = 1e-4):
    """Gauss-Newton iterations only; returns ``(state vector, iterations)``."""
    meas = list(measurements)
    with_glo, z, sqrt_w, sat_pos, glo = _setup(meas)
    # solve for the bias relative to the smallest pseudorange; the subtraction is
    # exact, so a common offset on every input leaves the iterations bit-identical
    ref = float(z.min())
    z = z - ref
    nx = 5 if with_glo else 4
    x = np.zeros(nx)
    if initial_guess is not None:
        x[:3] = initial_guess
    for it in range(1, max_iter + 1):
        d = sat_pos - x[:3]
        ranges = np.sqrt(np.einsum("ij,ij->i", d, d))
        g = np.empty((len(meas), nx))
        g[:, :3] = -d / ranges[:, None]
        g[:, 3] = 1.0
        pred = ranges + x[3]
        if with_glo:
            g[:, 4] = glo
            pred = pred + x[4] * glo
        a = g * sqrt_w[:, None]
        if it == 1 and np.linalg.cond(a) > MAX_CONDITION:
            raise SingularGeometry("weighted geometry matrix is ill-conditioned")
        dx = np.linalg.lstsq(a, (z - pred) * sqrt_w, rcond=None)[0]
        x += dx
        if np.linalg.norm(dx) < tol:
            x[3] += ref
            return x, it
    raise NoConvergence(f"WLS did not converge in {max_iter} iterations")


def finish_solution(measurements, x, iterations: int = 0) -> PvtSolution:
    """Covariance, DOP, residuals and velocity at a converged state vector."""
    meas = list(measurements)
    with_glo, z, sqrt_w, sat_pos, glo = _setup(meas)
    if len(x) != (5 if with_glo else 4):
        raise ValueError("state vector does not match the measurement set")
    d = sat_pos - x[:3]
    ranges = np.sqrt(np.einsum("ij,ij->i", d, d))
    los = d / ranges[:, None]
    g = geometry_rows(meas, x[:3], with_glo)
    residuals = z - ranges - x[3] - (x[4] * glo if with_glo else 0.0)
    a = g * sqrt_w[:, None]
    cov = np.linalg.inv(a.T @ a)
    dop = dop_of(g, ecef_to_geodetic(x[:3]))
    velocity, drift = _velocity(meas, los, x[:3])
    return PvtSolution(
        time=meas[0].time, position=x[:3].copy(), velocity=velocity,
        clock_bias=float(x[3]), clock_drift=drift,
        glonass_bias=float(x[4]) if with_glo else 0.0,
        covariance=cov, dop=dop, n_sats_used=len(meas), mode="wls",
        residuals=residuals, iterations=iterations,
    )


def _velocity(meas, los, position):
    rows = [(i, m) for i, m in enumerate(meas) if m.corrected_rate is not None and m.rate_weight > 0.0]
    if len(rows) < 4:
        return None, None
    idx = [i for i, _ in rows]
    e = los[idx]
    sat_vel = np.array([m.sat_state.velocity for _, m in rows])
    y = np.array([m.corrected_rate for _, m in rows]) - np.einsum("ij,ij->i", e, sat_vel)
    h = np.hstack([-e, np.ones((len(rows), 1))])
    sw = np.sqrt(np.array([m.rate_weight for _, m in rows]))
    sol = np.linalg.lstsq(h * sw[:, None], y * sw, rcond=None)[0]
    return sol[:3], float(sol[3])
