"""Tightly coupled GNSS Kalman filter over pseudoranges and pseudorange rates.

State vector (11)::

    0:3   ECEF position (m)
    3:6   ECEF velocity (m/s)
    6     receiver clock bias (m)
    7     receiver clock drift (m/s)
    8     GLONASS inter-system bias (m)
    9:11  north/east first-order Gauss-Markov acceleration (m/s^2)

The horizontal axes are those of the NED frame at filter initialisation, which
keeps the dynamics linear and time invariant between resets.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from .. import kernels
from ..errors import TimeReversal
from ..frames import GnssTime, ecef_to_geodetic, ned_matrix
from .wls import PvtSolution

N_STATE = 11
POS, VEL = slice(0, 3), slice(3, 6)
CB, CD, GB, AN, AE = 6, 7, 8, 9, 10


@dataclass(frozen=True)
class FilterConfig:
    sigma_accel_h: float = 2.0      # m/s^2, Gauss-Markov steady state
    tau_accel: float = 10.0         # s
    sigma_accel_v: float = 0.5      # m/s^2, white vertical acceleration (PSD sigma^2 * 1 s)
    q_clock_bias: float = 0.1       # m^2/s
    q_clock_drift: float = 0.01     # m^2/s^3
    q_glonass_bias: float = 1e-4    # m^2/s
    gate_sigma: float = 5.0
    max_gap: float = 2.0            # s; longer gaps reinitialise from WLS
    max_speed: float = 100.0        # m/s plausibility gate
    max_all_gated: int = 10


@dataclass
class FilterState:
    x: np.ndarray
    P: np.ndarray
    last_time: GnssTime
    frame: np.ndarray = field(default_factory=lambda: np.eye(3))  # NED rows at initialisation
    gated_epochs: int = 0

    def copy(self) -> "FilterState":
        return FilterState(self.x.copy(), self.P.copy(), self.last_time, self.frame, self.gated_epochs)


@dataclass
class Innovation:
    sat: object
    kind: str          # "pr" or "rate"
    value: float
    variance: float
    gated: bool

    @property
    def normalized(self) -> float:
        return self.value / math.sqrt(self.variance)


@dataclass
class UpdateResult:
    state: FilterState
    innovations: list
    all_gated: bool


def init_from_wls(sol: PvtSolution, config: FilterConfig | None = None) -> FilterState:
    config = config or FilterConfig()
    x = np.zeros(N_STATE)
    x[POS] = sol.position
    x[CB] = sol.clock_bias
    x[GB] = sol.glonass_bias
    p = np.diag([100.0] * 3 + [25.0] * 3 + [100.0, 25.0, 100.0] + [config.sigma_accel_h ** 2] * 2)
    if sol.velocity is not None:
        x[VEL] = sol.velocity
        p[VEL, VEL] = np.eye(3) * 1.0
    if sol.clock_drift is not None:
        x[CD] = sol.clock_drift
        p[CD, CD] = 1.0
    if sol.covariance is not None:
        idx = [0, 1, 2, CB] + ([GB] if sol.covariance.shape[0] == 5 else [])
        p[np.ix_(idx, idx)] = sol.covariance
    frame = ned_matrix(ecef_to_geodetic(sol.position))
    return FilterState(x, p, sol.time, frame)


@functools.lru_cache(maxsize=64)
def _discretize(dt: float, frame_key: tuple, config: FilterConfig):
    frame = np.array(frame_key).reshape(3, 3)
    north, east, down = frame
    n = N_STATE
    a = np.zeros((n, n))
    a[POS, VEL] = np.eye(3)
    a[VEL, AN] = north
    a[VEL, AE] = east
    a[CB, CD] = 1.0
    a[AN, AN] = a[AE, AE] = -1.0 / config.tau_accel
    qc = np.zeros((n, n))
    qc[VEL, VEL] = config.sigma_accel_v ** 2 * np.outer(down, down)
    qc[CB, CB] = config.q_clock_bias
    qc[CD, CD] = config.q_clock_drift
    qc[GB, GB] = config.q_glonass_bias
    qc[AN, AN] = qc[AE, AE] = 2.0 * config.sigma_accel_h ** 2 / config.tau_accel
    # Van Loan: exact discretisation of the linear continuous model
    m = np.zeros((2 * n, 2 * n))
    m[:n, :n] = -a
    m[:n, n:] = qc
    m[n:, n:] = a.T
    e = expm(m * dt)
    # entries unreachable through A are exactly zero; expm leaves ~1e-16 there,
    # which multiplied by ECEF coordinates would leak into the velocities
    reach = np.eye(n, dtype=bool)
    for _ in range(n):
        reach = reach | ((reach.astype(float) @ (a != 0.0).astype(float)) > 0)
    phi = np.where(reach, e[n:, n:].T, 0.0)
    # A is upper triangular in this state ordering, so the diagonal is exact
    np.fill_diagonal(phi, np.exp(np.diag(a) * dt))
    q = phi @ e[:n, n:]
    return phi, 0.5 * (q + q.T)


def transition(dt: float, frame, config: FilterConfig | None = None):
    """State transition matrix and discrete process noise for a step of ``dt`` seconds."""
    config = config or FilterConfig()
    return _discretize(float(dt), tuple(np.asarray(frame, dtype=float).ravel()), config)


def kf_predict(state: FilterState, to: GnssTime, config: FilterConfig | None = None) -> FilterState:
    config = config or FilterConfig()
    dt = to - state.last_time
    if dt < 0.0:
        raise TimeReversal(f"cannot predict backwards by {-dt:.3f} s")
    if dt == 0.0:
        return replace(state.copy(), last_time=to)
    phi, q = transition(dt, state.frame, config)
    x = phi @ state.x
    p = phi @ state.P @ phi.T + q
    return FilterState(x, 0.5 * (p + p.T), to, state.frame, state.gated_epochs)


def _rows(meas, x):
    """Measurement models linearised at ``x``: list of (sat, kind, z, h(x), H, R)."""
    out = []
    pos, vel = x[POS], x[VEL]
    for m in meas:
        d = m.sat_state.position - pos
        rng = float(np.linalg.norm(d))
        e = d / rng
        h = np.zeros(N_STATE)
        h[POS] = -e
        h[CB] = 1.0
        pred = rng + m.iono_delay + m.tropo_delay + x[CB]
        if m.is_glonass:
            h[GB] = 1.0
            pred += x[GB]
        out.append((m.sat, "pr", m.corrected_pseudorange, pred, h, 1.0 / m.weight))
        if m.corrected_rate is not None and m.rate_weight > 0.0:
            rel = m.sat_state.velocity - vel
            rr = float(e @ rel)
            hr = np.zeros(N_STATE)
            hr[POS] = -(rel - e * rr) / rng
            hr[VEL] = -e
            hr[CD] = 1.0
            out.append((m.sat, "rate", m.corrected_rate, rr + x[CD], hr, 1.0 / m.rate_weight))
    return out


def kf_update(state: FilterState, measurements, config: FilterConfig | None = None) -> UpdateResult:
    """Sequential scalar updates (pseudorange then rate, per satellite).

    Every model is linearised once at the predicted state; innovations beyond
    ``gate_sigma`` standard deviations are reported but not applied.
    """
    config = config or FilterConfig()
    x0 = state.x.copy()
    x = state.x.copy()
    p = np.ascontiguousarray(state.P.copy())
    innovations = []
    applied = 0
    for sat, kind, z, pred, h, r in _rows(measurements, x0):
        nu = z - pred - float(h @ (x - x0))
        s = float(h @ p @ h) + r
        if abs(nu) > config.gate_sigma * math.sqrt(s):
            innovations.append(Innovation(sat, kind, nu, s, True))
            continue
        kernels.joseph_update(x, p, np.ascontiguousarray(h), nu, r)
        innovations.append(Innovation(sat, kind, nu, s, False))
        applied += 1
    all_gated = applied == 0 and len(innovations) > 0
    if all_gated:
        new = state.copy()
        new.gated_epochs += 1
        return UpdateResult(new, innovations, True)
    p = 0.5 * (p + p.T)
    return UpdateResult(FilterState(x, p, state.last_time, state.frame, 0), innovations, False)


def plausible(state: FilterState, config: FilterConfig | None = None) -> bool:
    config = config or FilterConfig()
    return bool(np.all(np.isfinite(state.x)) and np.linalg.norm(state.x[VEL]) < config.max_speed)
