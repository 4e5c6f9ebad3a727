"""Ephemeris types and satellite position, velocity and clock computation."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..constants import (
    GLO_STEP_S,
    GLO_VALIDITY_S,
    GPS_F_REL,
    GPS_FIT_INTERVAL_S,
)
from ..errors import NoConvergence, StaleEphemeris
from ..frames import GnssTime


class Constellation(str, enum.Enum):
    GPS = "G"
    GLONASS = "R"


@dataclass(frozen=True, order=True)
class SatId:
    constellation: Constellation
    prn: int
    freq_channel: int = 0

    def __post_init__(self):
        object.__setattr__(self, "constellation", Constellation(self.constellation))
        if self.constellation is Constellation.GPS:
            if not 1 <= self.prn <= 32:
                raise ValueError(f"GPS PRN {self.prn} outside 1..32")
            if self.freq_channel != 0:
                raise ValueError("GPS satellites have no frequency channel")
        else:
            if not 1 <= self.prn <= 24:
                raise ValueError(f"GLONASS slot {self.prn} outside 1..24")
            if not -7 <= self.freq_channel <= 6:
                raise ValueError(f"GLONASS channel {self.freq_channel} outside -7..6")

    @property
    def key(self):
        """Identity used by ephemeris stores (channel excluded)."""
        return self.constellation.value, self.prn

    def __str__(self):
        return f"{self.constellation.value}{self.prn:02d}"


@dataclass(frozen=True)
class KeplerEphemeris:
    """GPS broadcast (LNAV) ephemeris and clock parameters."""

    toe: GnssTime
    toc: GnssTime
    sqrt_a: float
    e: float
    i0: float
    omega0: float
    omega: float
    m0: float
    delta_n: float = 0.0
    idot: float = 0.0
    omega_dot: float = 0.0
    cuc: float = 0.0
    cus: float = 0.0
    crc: float = 0.0
    crs: float = 0.0
    cic: float = 0.0
    cis: float = 0.0
    af0: float = 0.0
    af1: float = 0.0
    af2: float = 0.0
    tgd: float = 0.0
    iode: float = 0.0
    iodc: float = 0.0
    ura: float = 0.0
    health: float = 0.0
    transmit_time: float = 0.0
    fit_interval_h: float = 4.0
    _params: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.e < 0.1:
            raise ValueError(f"eccentricity {self.e} outside [0, 0.1)")
        a = self.sqrt_a * self.sqrt_a
        if not 2.0e7 <= a <= 3.0e7:
            raise ValueError(f"semi-major axis {a:.1f} m outside [2e7, 3e7]")
        params = np.array([
            self.sqrt_a, self.e, self.i0, self.omega0, self.omega, self.m0,
            self.delta_n, self.idot, self.omega_dot, self.cuc, self.cus,
            self.crc, self.crs, self.cic, self.cis, self.toe.tow,
        ])
        if not np.all(np.isfinite(params)):
            raise ValueError("non-finite orbital parameter")
        object.__setattr__(self, "_params", params)

    @property
    def params(self) -> np.ndarray:
        return self._params

    @property
    def reference_time(self) -> GnssTime:
        return self.toe


@dataclass(frozen=True)
class GlonassEphemeris:
    """GLONASS broadcast state vector; ``tb`` already expressed in GPS time."""

    tb: GnssTime
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    tau_n: float
    gamma_n: float
    freq_channel: int = 0
    health: float = 0.0
    frame_time: float = 0.0
    age: float = 0.0

    def __post_init__(self):
        for name in ("position", "velocity", "acceleration"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, v)
        r = float(np.linalg.norm(self.position))
        if not 2.4e7 <= r <= 2.6e7:
            raise ValueError(f"GLONASS radius {r:.1f} m outside 2.5e7 +- 1e6")

    @property
    def reference_time(self) -> GnssTime:
        return self.tb


@dataclass(frozen=True)
class SatState:
    position: np.ndarray
    velocity: np.ndarray
    clock_bias: float
    clock_drift: float


def kepler_solve(m: float, e: float) -> float:
    """Eccentric anomaly for mean anomaly ``m`` (Newton, at most 20 iterations)."""
    ecc_anom, it = kernels.kepler_solve(float(m), float(e))
    if it < 0:
        raise NoConvergence(f"Kepler equation did not converge for M={m}, e={e}")
    return ecc_anom


def gps_sat_state(eph: KeplerEphemeris, t: GnssTime,
                  fit_interval: float = GPS_FIT_INTERVAL_S) -> SatState:
    """Satellite state from a GPS broadcast ephemeris at GPS time ``t``.

    Velocity is the analytic derivative of the broadcast position model.
    The clock bias includes the relativistic eccentricity term and the group
    delay, ``af0 + af1 dt + af2 dt^2 + F e sqrt(A) sin E - tgd``.
    """
    tk = t - eph.toe
    if abs(tk) >= fit_interval:
        raise StaleEphemeris(f"{tk:.0f} s from toe exceeds fit interval")
    pos, vel, ek, ek_dot = kernels.gps_orbit(eph.params, tk)
    if pos is None:
        raise NoConvergence("Kepler equation did not converge")
    dt = t - eph.toc
    rel = GPS_F_REL * eph.e * eph.sqrt_a
    bias = eph.af0 + eph.af1 * dt + eph.af2 * dt * dt + rel * math.sin(ek) - eph.tgd
    drift = eph.af1 + 2.0 * eph.af2 * dt + rel * math.cos(ek) * ek_dot
    return SatState(pos, vel, bias, drift)


def glonass_sat_state(eph: GlonassEphemeris, t: GnssTime, step: float = GLO_STEP_S,
                      validity: float = GLO_VALIDITY_S) -> SatState:
    """Satellite state from a GLONASS ephemeris by RK4 integration.

    PZ-90.11 and WGS84 are treated as identical frames.
    """
    dt = t - eph.tb
    if abs(dt) > validity:
        raise StaleEphemeris(f"{dt:.0f} s from tb exceeds validity window")
    if dt == 0.0:
        pos, vel = eph.position.copy(), eph.velocity.copy()
    else:
        s = kernels.glonass_propagate(np.concatenate([eph.position, eph.velocity]),
                                      eph.acceleration, dt, step)
        pos, vel = s[:3], s[3:]
    return SatState(pos, vel, -eph.tau_n + eph.gamma_n * dt, eph.gamma_n)


def sat_state(eph, t: GnssTime) -> SatState:
    if isinstance(eph, KeplerEphemeris):
        return gps_sat_state(eph, t)
    return glonass_sat_state(eph, t)
