"""Time scales, WGS84 coordinate conversions and pose quaternions.

Conventions
-----------
* ECEF positions are ``numpy`` arrays of shape ``(3,)`` in meters.
* Quaternions are scalar first ``(w, x, y, z)``.
* A pose orientation is the quaternion rotating ECEF vectors into the local
  ``[forward, right, down]`` frame, i.e. ``v_local = R(q) @ v_ecef``. The rows
  of ``R(q)`` are therefore the local axes expressed in ECEF.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constants import SECONDS_PER_WEEK, WGS84_A, WGS84_E2
from .errors import NearSingular

# 1980-01-06 00:00:00 is GPS week 0, tow 0


@dataclass(frozen=True, order=True)
class GnssTime:
    """GPS week number plus seconds of week."""

    week: int
    tow: float

    def __post_init__(self):
        if self.week < 0:
            raise ValueError(f"negative GPS week {self.week}")
        if not 0.0 <= self.tow < SECONDS_PER_WEEK:
            raise ValueError(f"time of week {self.tow} outside [0, 604800)")

    @classmethod
    def normalized(cls, week: int, tow: float) -> "GnssTime":
        if 0.0 <= tow < SECONDS_PER_WEEK:
            return cls(week, tow)
        shift = math.floor(tow / SECONDS_PER_WEEK)
        tow = tow - shift * SECONDS_PER_WEEK
        week = week + int(shift)
        if tow >= SECONDS_PER_WEEK:  # rounding at the upper edge
            tow -= SECONDS_PER_WEEK
            week += 1
        return cls(week, tow)

    def __sub__(self, other):
        if isinstance(other, GnssTime):
            return (self.week - other.week) * SECONDS_PER_WEEK + (self.tow - other.tow)
        if isinstance(other, (int, float)):
            return GnssTime.normalized(self.week, self.tow - other)
        return NotImplemented

    def __add__(self, seconds):
        if isinstance(seconds, (int, float)):
            return GnssTime.normalized(self.week, self.tow + seconds)
        return NotImplemented

    def __str__(self):
        return f"{self.week}:{self.tow!r}"


class Geodetic(NamedTuple):
    """WGS84 latitude/longitude in degrees, ellipsoidal height in meters."""

    lat: float
    lon: float
    height: float

    @property
    def lat_rad(self) -> float:
        return math.radians(self.lat)

    @property
    def lon_rad(self) -> float:
        return math.radians(self.lon)


def geodetic_to_ecef(g: Geodetic) -> np.ndarray:
    lat, lon = math.radians(g.lat), math.radians(g.lon)
    slat, clat = math.sin(lat), math.cos(lat)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * slat * slat)
    return np.array([
        (n + g.height) * clat * math.cos(lon),
        (n + g.height) * clat * math.sin(lon),
        (n * (1.0 - WGS84_E2) + g.height) * slat,
    ])


def ecef_to_geodetic(p) -> Geodetic:
    """Closed-form ECEF to geodetic conversion (Vermeille 2004).

    Raises NearSingular for points closer than 100 km to the geocenter, where
    the closed form loses accuracy.
    """
    x, y, z = (float(c) for c in p)
    rho2 = x * x + y * y
    if rho2 + z * z < 1e10:
        raise NearSingular(f"|p| = {math.sqrt(rho2 + z * z):.1f} m is below 100 km")
    a2 = WGS84_A * WGS84_A
    e4 = WGS84_E2 * WGS84_E2
    pp = rho2 / a2
    q = (1.0 - WGS84_E2) * z * z / a2
    r = (pp + q - e4) / 6.0
    s = e4 * pp * q / (4.0 * r ** 3)
    t = (1.0 + s + math.sqrt(s * (2.0 + s))) ** (1.0 / 3.0)
    u = r * (1.0 + t + 1.0 / t)
    v = math.sqrt(u * u + e4 * q)
    w = WGS84_E2 * (u + v - q) / (2.0 * v)
    k = math.sqrt(u + v + w * w) - w
    rho = math.sqrt(rho2)
    d = k * rho / (k + WGS84_E2)
    dz = math.hypot(d, z)
    lat = 2.0 * math.atan2(z, d + dz)
    height = (k + WGS84_E2 - 1.0) / k * dz
    lon = math.degrees(math.atan2(y, x)) if rho > 0.0 else 0.0
    if lon >= 180.0:
        lon -= 360.0
    return Geodetic(math.degrees(lat), lon, height)


def ned_matrix(g: Geodetic) -> np.ndarray:
    """Rotation matrix taking ECEF vectors into North-East-Down at ``g``."""
    lat, lon = math.radians(g.lat), math.radians(g.lon)
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array([
        [-sl * co, -sl * so, cl],
        [-so, co, 0.0],
        [-cl * co, -cl * so, -sl],
    ])


def azimuth_elevation(receiver_ecef, sat_ecef, receiver: Geodetic | None = None, ned=None):
    """Azimuth and elevation (radians) of a satellite seen from the receiver.

    ``receiver`` and ``ned`` may be passed to reuse the receiver's geodetic
    position and NED rotation across satellites.
    """
    if ned is None:
        if receiver is None:
            receiver = ecef_to_geodetic(receiver_ecef)
        ned = ned_matrix(receiver)
    los = np.asarray(sat_ecef, dtype=float) - np.asarray(receiver_ecef, dtype=float)
    n, e, d = ned @ (los / math.sqrt(los @ los))
    az = math.atan2(e, n)
    if az < 0.0:
        az += 2.0 * math.pi
    return az, math.asin(max(-1.0, min(1.0, -d)))


@dataclass(frozen=True)
class Quaternion:
    w: float
    x: float
    y: float
    z: float

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, q) -> "Quaternion":
        q = np.asarray(q, dtype=float)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError("quaternion must be finite and nonzero")
        return cls(*(q / n))

    @classmethod
    def from_matrix(cls, m) -> "Quaternion":
        """Quaternion whose :meth:`matrix` equals the rotation matrix ``m``."""
        m = np.asarray(m, dtype=float)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        # Shepperd: branch on the largest diagonal term for stability
        if tr > 0.0:
            s = 2.0 * math.sqrt(1.0 + tr)
            q = (0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        elif m[1, 1] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
        else:
            s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)
        if q[0] < 0.0:
            q = tuple(-c for c in q)
        return cls.from_array(q)

    @classmethod
    def from_rotvec(cls, v) -> "Quaternion":
        """Active rotation by angle ``|v|`` about axis ``v``."""
        v = np.asarray(v, dtype=float)
        angle = float(np.linalg.norm(v))
        if angle < 1e-12:
            return cls.from_array([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]])
        axis = v / angle
        s = math.sin(0.5 * angle)
        return cls.from_array([math.cos(0.5 * angle), *(s * axis)])

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Quaternion.from_array([
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ])

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def rotate(self, v) -> np.ndarray:
        return self.matrix() @ np.asarray(v, dtype=float)

    def equivalent(self, other: "Quaternion", tol: float = 1e-9) -> bool:
        """True when both quaternions encode the same rotation (q ~ -q)."""
        a, b = self.as_array(), other.as_array()
        return bool(min(np.abs(a - b).max(), np.abs(a + b).max()) <= tol)


def ned_rotation_at(g: Geodetic) -> Quaternion:
    """Quaternion rotating ECEF vectors into the local NED frame at ``g``."""
    return Quaternion.from_matrix(ned_matrix(g))


def skew(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rodrigues(v) -> np.ndarray:
    """Active rotation matrix exp([v]x)."""
    v = np.asarray(v, dtype=float)
    angle = float(np.linalg.norm(v))
    k = skew(v)
    if angle < 1e-8:
        return np.eye(3) + k + 0.5 * k @ k
    return np.eye(3) + math.sin(angle) / angle * k + (1.0 - math.cos(angle)) / angle ** 2 * k @ k


@dataclass(frozen=True)
class GlobalPose:
    """ECEF position with the ECEF to ``[forward, right, down]`` orientation."""

    position: np.ndarray
    orientation: Quaternion
    time: GnssTime

    def rotation(self) -> np.ndarray:
        return self.orientation.matrix()

    def perturbed(self, dtheta=(0.0, 0.0, 0.0), dpos=(0.0, 0.0, 0.0)) -> "GlobalPose":
        """Rotate the body axes by ``dtheta`` (roll, pitch, yaw about its own
        forward/right/down axes) and shift the position by ``dpos`` (ECEF)."""
        r = rodrigues(dtheta).T @ self.rotation()
        return GlobalPose(np.asarray(self.position, dtype=float) + np.asarray(dpos, dtype=float),
                          Quaternion.from_matrix(r), self.time)


def pose_local_axes(pose: GlobalPose):
    """Forward, right and down unit vectors of the pose expressed in ECEF."""
    r = pose.rotation()
    return r[0].copy(), r[1].copy(), r[2].copy()


def yaw_by(pose: GlobalPose, angle: float) -> GlobalPose:
    """Compose the pose orientation with a yaw (about local down) of ``angle`` radians."""
    half = 0.5 * angle
    # local(old) -> local(new) is a passive rotation about down by +angle
    q_c = Quaternion(math.cos(half), 0.0, 0.0, -math.sin(half))
    return GlobalPose(pose.position, q_c * pose.orientation, pose.time)
