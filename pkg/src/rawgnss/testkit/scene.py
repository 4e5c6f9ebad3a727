"""Seeded synthetic drives and feature scenes.

Scene configuration is a flat ``key = value`` file. Recognised keys (all
optional) and defaults:

==================  ==============  =============================================
key                 default         meaning
==================  ==============  =============================================
seed                0               base seed for every random draw
lat, lon, height    37.4, -122.1,   geodetic start of the trajectory (deg, deg, m)
                    20.0
segments            ``120:30:15``   ``duration_s:heading_deg:speed_mps`` pieces,
                                    comma separated, constant velocity each
rate_hz             10.0            epoch rate
n_drives            1               drives over the same road
drive_offset_s      600.0           start time spacing between drives
week, tow           2100, 345600.0  GPS time of the first epoch
n_planes            8               orbital planes of the GPS-like constellation
sats_per_plane      4
pr_sigma            2.0             pseudorange noise (m), also written as pr_std
rate_sigma          0.05            pseudorange-rate noise (m/s)
pixel_sigma         0.0             only used by feature scenes
clock_bias          3000.0          receiver clock bias at the first epoch (m)
clock_drift         0.5             receiver clock drift (m/s)
atmosphere          true            include Klobuchar and Saastamoinen delays
elevation_mask_deg  10.0            satellites below are not emitted
==================  ==============  =============================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..constants import EARTH_ROTATION_RATE, SPEED_OF_LIGHT
from ..ephemeris.orbits import Constellation, KeplerEphemeris, SatId, sat_state
from ..ephemeris.rinex import IonoParams, format_rinex_nav, parse_rinex_nav
from ..errors import InputError
from ..formats import Intrinsics, atomic_write, format_features, format_poses, format_tracks, parse_key_values
from ..frames import (
    Geodetic,
    GlobalPose,
    GnssTime,
    Quaternion,
    azimuth_elevation,
    ecef_to_geodetic,
    geodetic_to_ecef,
    ned_matrix,
)
from ..measurements import (
    RawGnssRecord,
    earth_rotation,
    format_raw_records,
    klobuchar_delay,
    rate_to_doppler,
    saastamoinen_delay,
    wavelength,
)

# coefficients of the kind broadcast on a quiet day
TYPICAL_IONO = IonoParams(alpha=(1.1176e-08, 7.4506e-09, -5.9605e-08, -5.9605e-08),
                          beta=(9.0112e04, 3.2768e04, -1.9661e05, -6.5536e04))


@dataclass(frozen=True)
class SyntheticScene:
    seed: int = 0
    lat: float = 37.4
    lon: float = -122.1
    height: float = 20.0
    segments: tuple = ((120.0, 30.0, 15.0),)
    rate_hz: float = 10.0
    n_drives: int = 1
    drive_offset_s: float = 600.0
    week: int = 2100
    tow: float = 345600.0
    n_planes: int = 8
    sats_per_plane: int = 4
    pr_sigma: float = 2.0
    rate_sigma: float = 0.05
    pixel_sigma: float = 0.0
    clock_bias: float = 3000.0
    clock_drift: float = 0.5
    atmosphere: bool = True
    elevation_mask_deg: float = 10.0

    def __post_init__(self):
        if self.rate_hz <= 0 or self.n_drives < 1 or not self.segments:
            raise ValueError("scene needs a positive rate, at least one drive and one segment")
        if min(self.pr_sigma, self.rate_sigma, self.pixel_sigma) < 0:
            raise ValueError("noise sigmas must be non-negative")
        if any(d <= 0 or s < 0 for d, _, s in self.segments):
            raise ValueError("segments need positive duration and non-negative speed")
        if self.n_planes < 1 or self.sats_per_plane < 1 or self.n_planes * self.sats_per_plane > 32:
            raise ValueError("constellation must have between 1 and 32 satellites")

    @property
    def duration(self) -> float:
        return float(sum(d for d, _, _ in self.segments))

    @property
    def start(self) -> GnssTime:
        return GnssTime(self.week, self.tow)

    def noiseless(self) -> "SyntheticScene":
        return replace(self, pr_sigma=0.0, rate_sigma=0.0, pixel_sigma=0.0)

    @classmethod
    def from_text(cls, text: str) -> "SyntheticScene":
        kv = parse_key_values(text)
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in kv.items():
            if key not in known:
                raise InputError(f"unknown scene key {key!r}")
            try:
                kwargs[key] = _convert(key, value, known[key].default)
            except ValueError as exc:
                raise InputError(f"scene key {key!r}: {exc}") from None
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise InputError(f"invalid scene: {exc}") from None

    @classmethod
    def from_file(cls, path) -> "SyntheticScene":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read scene {path}: {exc}") from None
        return cls.from_text(text)


def _convert(key, value, default):
    if key == "segments":
        out = []
        for piece in value.split(","):
            parts = piece.strip().split(":")
            if len(parts) != 3:
                raise ValueError(f"bad segment {piece!r}")
            out.append(tuple(float(p) for p in parts))
        return tuple(out)
    if isinstance(default, bool):
        low = value.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected a boolean, got {value!r}")
        return low in ("true", "1", "yes")
    if isinstance(default, int):
        return int(value)
    return float(value)


# --- constellation ------------------------------------------------------------

def constellation(scene: SyntheticScene, toe: GnssTime):
    """Walker-like GPS constellation with small, seeded perturbation terms."""
    rng = np.random.default_rng([scene.seed, 7])
    out = []
    prn = 1
    for j in range(scene.n_planes):
        for i in range(scene.sats_per_plane):
            eph = KeplerEphemeris(
                toe=toe, toc=toe,
                sqrt_a=math.sqrt(26_559_700.0 + rng.uniform(-2e4, 2e4)),
                e=rng.uniform(0.001, 0.02),
                i0=math.radians(55.0) + rng.uniform(-0.01, 0.01),
                omega0=2 * math.pi * j / scene.n_planes + rng.uniform(-0.02, 0.02),
                omega=rng.uniform(-math.pi, math.pi),
                m0=2 * math.pi * i / scene.sats_per_plane + math.pi * j / (scene.n_planes * scene.sats_per_plane)
                + rng.uniform(-0.05, 0.05),
                delta_n=rng.uniform(3e-9, 5e-9),
                idot=rng.uniform(-5e-10, 5e-10),
                omega_dot=rng.uniform(-8.5e-9, -7.5e-9),
                cuc=rng.uniform(-5e-6, 5e-6), cus=rng.uniform(-5e-6, 5e-6),
                crc=rng.uniform(150.0, 350.0), crs=rng.uniform(-100.0, 100.0),
                cic=rng.uniform(-2e-7, 2e-7), cis=rng.uniform(-2e-7, 2e-7),
                af0=rng.uniform(-3e-4, 3e-4), af1=rng.uniform(-5e-12, 5e-12), af2=0.0,
                tgd=rng.uniform(-1e-8, 1e-8), iode=float(prn), iodc=float(prn),
                ura=2.0, health=0.0, transmit_time=toe.tow - 7200.0 if toe.tow >= 7200 else 0.0,
            )
            out.append((SatId(Constellation.GPS, prn), eph))
            prn += 1
    return out


def _round_trip(records, iono):
    """Pass ephemerides through the RINEX writer and parser so the truth model
    uses exactly the values a reader of the emitted file will see."""
    text = format_rinex_nav(records, iono)
    nav = parse_rinex_nav(text)
    return text, nav.records


# --- trajectory ---------------------------------------------------------------

def trajectory(scene: SyntheticScene, t: float):
    """ECEF position, velocity and heading (rad) ``t`` seconds into a drive."""
    origin = geodetic_to_ecef(Geodetic(scene.lat, scene.lon, scene.height))
    ned = ned_matrix(Geodetic(scene.lat, scene.lon, scene.height))
    pos = origin.copy()
    elapsed = 0.0
    last = len(scene.segments) - 1
    for i, (duration, heading, speed) in enumerate(scene.segments):
        h = math.radians(heading)
        v = speed * (math.cos(h) * ned[0] + math.sin(h) * ned[1])
        if t <= elapsed + duration or i == last:
            return pos + v * (t - elapsed), v, h
        pos = pos + v * duration
        elapsed += duration
    raise AssertionError("unreachable")


def heading_pose(position, heading: float, time: GnssTime) -> GlobalPose:
    """Camera pose looking along ``heading`` in the local horizontal plane."""
    ned = ned_matrix(ecef_to_geodetic(position))
    c, s = math.cos(heading), math.sin(heading)
    rot = np.array([c * ned[0] + s * ned[1], -s * ned[0] + c * ned[1], ned[2]])
    return GlobalPose(np.asarray(position, dtype=float), Quaternion.from_matrix(rot), time)


# --- forward measurement model ------------------------------------------------

def _flight_time(eph, receiver, t_rx, bias, atmo, tau=0.07):
    """Flight time satisfying ``c tau = |R3(w tau) s(t_rx - tau) - r| + b + atmo``."""
    for _ in range(50):
        st = sat_state(eph, t_rx - tau)
        d = earth_rotation(st.position, tau) - receiver
        new = (math.sqrt(d @ d) + bias + atmo) / SPEED_OF_LIGHT
        if abs(new - tau) < 1e-15:
            return new
        tau = new
    return tau


_HIDDEN = "hidden"


def simulate_record(sat, eph, receiver, velocity, t_rx, bias, drift, iono, scene, rng,
                    guess=None, geo=None):
    """One raw record (``None`` below the elevation mask) and the flight-time
    state ``(tau, atmo)`` to warm-start the next epoch of this satellite
    (``None``, or a marker when the satellite is well below the mask).

    The model is the exact inverse of the processing in ``measurements``.
    """
    geo = geo or ecef_to_geodetic(receiver)
    ned = ned_matrix(geo)
    mask = math.radians(scene.elevation_mask_deg)
    tau, atmo = guess if guess is not None else ((bias + 2.2e7) / SPEED_OF_LIGHT, 0.0)
    if guess is None:
        # cheap visibility screen; the rotation over the flight time is below 1e-5 rad
        if azimuth_elevation(receiver, sat_state(eph, t_rx - tau).position, ned=ned)[1] < mask - 0.01:
            return None, _HIDDEN
        atmo = 0.0
    tau = _flight_time(eph, receiver, t_rx, bias, atmo, tau)
    for _ in range(5):
        st = sat_state(eph, t_rx - tau)
        rot_pos = earth_rotation(st.position, tau)
        az, el = azimuth_elevation(receiver, rot_pos, geo, ned)
        if el < mask:
            return None, None
        atmo = 0.0
        if scene.atmosphere:
            atmo = klobuchar_delay(iono, geo, az, el, t_rx) + saastamoinen_delay(geo, el)
        tau_new = _flight_time(eph, receiver, t_rx, bias, atmo, tau)
        if tau_new == tau:
            break
        tau = tau_new
    st = sat_state(eph, t_rx - tau)
    pseudorange = SPEED_OF_LIGHT * (tau - st.clock_bias)

    rot_pos = earth_rotation(st.position, tau)
    rot_vel = earth_rotation(st.velocity, tau)
    los = (rot_pos - receiver) / math.sqrt((rot_pos - receiver) @ (rot_pos - receiver))
    spin = EARTH_ROTATION_RATE * np.array([rot_pos[1], -rot_pos[0], 0.0])
    # c tau_dot = e . (S_dot - v_r) + drift, with S_dot = rot_vel (1 - tau_dot) + spin tau_dot
    tau_dot = (los @ (rot_vel - velocity) + drift) / (SPEED_OF_LIGHT + los @ (rot_vel - spin))
    rate = SPEED_OF_LIGHT * (tau_dot - st.clock_drift * (1.0 - tau_dot))

    if scene.pr_sigma > 0:
        pseudorange += rng.normal(0.0, scene.pr_sigma)
    if scene.rate_sigma > 0:
        rate += rng.normal(0.0, scene.rate_sigma)
    lam = wavelength(sat)
    cn0 = 30.0 + 20.0 * math.sin(el)
    return RawGnssRecord(
        time=t_rx, sat=sat, pseudorange=pseudorange, doppler=rate_to_doppler(rate, sat),
        carrier_phase=pseudorange / lam + float(rng.integers(-1000, 1000)),
        cn0=round(cn0, 1), pr_std=scene.pr_sigma if scene.pr_sigma > 0 else 1.0,
    ), (tau + tau_dot / scene.rate_hz, atmo)


@dataclass
class Drive:
    raw_text: str
    truth_text: str
    records: list
    truth: list                 # GlobalPose per epoch
    clock_bias: list = field(default_factory=list)


@dataclass
class DriveSet:
    scene: SyntheticScene
    nav_text: str
    ephemerides: list
    iono: IonoParams
    drives: list

    def write(self, out_dir) -> list:
        """Write ``nav.rnx`` and ``drive_XX_raw.csv`` / ``drive_XX_truth.csv``."""
        out = Path(out_dir)
        paths = [out / "nav.rnx"]
        atomic_write(paths[0], self.nav_text)
        for k, d in enumerate(self.drives):
            raw, truth = out / f"drive_{k:02d}_raw.csv", out / f"drive_{k:02d}_truth.csv"
            atomic_write(raw, d.raw_text)
            atomic_write(truth, d.truth_text)
            paths += [raw, truth]
        return paths


def _reference_toe(scene: SyntheticScene) -> GnssTime:
    mid = scene.start + 0.5 * ((scene.n_drives - 1) * scene.drive_offset_s + scene.duration)
    return GnssTime(mid.week, round(mid.tow / 16.0) * 16.0)


def generate_drive(scene: SyntheticScene) -> DriveSet:
    """Raw records, truth poses and a navigation file for every drive of ``scene``."""
    iono = TYPICAL_IONO
    nav_text, ephs = _round_trip(constellation(scene, _reference_toe(scene)), iono)
    n_epochs = int(round(scene.duration * scene.rate_hz)) + 1
    drives = []
    for k in range(scene.n_drives):
        rng = np.random.default_rng([scene.seed, k])
        t0 = scene.start + k * scene.drive_offset_s
        records, truth, biases = [], [], []
        warm, hidden_until = {}, {}
        for i in range(n_epochs):
            dt = i / scene.rate_hz
            t = t0 + dt
            pos, vel, heading = trajectory(scene, dt)
            geo = ecef_to_geodetic(pos)
            bias = scene.clock_bias + scene.clock_drift * dt
            for sat, eph in ephs:
                # a satellite rises well under the screening margin in 10 s
                if sat in hidden_until and dt < hidden_until[sat]:
                    continue
                rec, warm[sat] = simulate_record(sat, eph, pos, vel, t, bias, scene.clock_drift,
                                                 iono, scene, rng, warm.get(sat), geo)
                if warm[sat] is _HIDDEN:
                    hidden_until[sat] = dt + 10.0
                    del warm[sat]
                if rec is not None:
                    records.append(rec)
            truth.append(heading_pose(pos, heading, t))
            biases.append(bias)
        drives.append(Drive(format_raw_records(records), format_poses(truth), records, truth, biases))
    return DriveSet(scene, nav_text, ephs, iono, drives)


# --- feature scenes -------------------------------------------------------------

DEFAULT_INTRINSICS = Intrinsics(fx=800.0, fy=800.0, cx=640.0, cy=360.0)


@dataclass
class FeatureDrive:
    poses: list                # poses as provided (noisy)
    true_poses: list
    tracks: list               # (frame_id, feature_id, u, v, depth)

    def write(self, out_dir, intrinsics: Intrinsics = DEFAULT_INTRINSICS, points=None) -> None:
        """``poses.csv`` and ``tracks.csv``; with ``points`` also a 2D-3D ``features.csv``."""
        out = Path(out_dir)
        atomic_write(out / "poses.csv", format_poses(self.poses))
        atomic_write(out / "tracks.csv", format_tracks(intrinsics, self.tracks))
        if points is not None:
            rows = [(f, fid, u, v, *points[fid]) for f, fid, u, v, _ in self.tracks]
            atomic_write(out / "features.csv", format_features(intrinsics, rows))


@dataclass
class FeatureScene:
    intrinsics: Intrinsics
    points: np.ndarray         # (n_features, 3) ECEF truth
    drives: list


def _project(pose: GlobalPose, point, intr: Intrinsics):
    local = pose.rotation() @ (point - pose.position)
    if local[0] <= 0:
        return None
    return (intr.fx * local[1] / local[0] + intr.cx, intr.fy * local[2] / local[0] + intr.cy, local[0])


def generate_feature_scene(n_drives: int, n_features: int = 120, pixel_sigma: float = 0.0,
                           pos_sigma: float = 0.0, rot_sigma_deg: float = 0.0, seed: int = 0,
                           n_frames: int = 8, intrinsics: Intrinsics = DEFAULT_INTRINSICS,
                           origin: Geodetic = Geodetic(37.4, -122.1, 20.0),
                           heading_deg: float = 30.0) -> FeatureScene:
    """Camera drives along a straight road lined with structure.

    Features lie on the ground plane and on two roadside walls; every drive
    sees the same features from a slightly different lane and frame spacing.
    Noise is applied to pixels after projection and to the provided poses.
    """
    if n_drives < 1:
        raise ValueError("need at least one drive")
    rng = np.random.default_rng([seed, 99])
    base = geodetic_to_ecef(origin)
    ned = ned_matrix(origin)
    h = math.radians(heading_deg)
    fwd = math.cos(h) * ned[0] + math.sin(h) * ned[1]
    right = -math.sin(h) * ned[0] + math.cos(h) * ned[1]
    down = ned[2]
    road_len = 4.0 * n_frames + 40.0

    pts = []
    for _ in range(n_features):
        along = rng.uniform(8.0, road_len)
        kind = rng.uniform()
        if kind < 0.4:
            lat_off, hgt = rng.uniform(-6.0, 6.0), -1.5
        else:
            lat_off = rng.choice([-1.0, 1.0]) * rng.uniform(7.0, 9.0)
            hgt = rng.uniform(-1.5, 6.0)
        pts.append(base + along * fwd + lat_off * right - hgt * down)
    points = np.array(pts)

    drives = []
    for k in range(n_drives):
        drng = np.random.default_rng([seed, 100 + k])
        lane = drng.uniform(-1.5, 1.5)
        start = drng.uniform(0.0, 2.0)
        poses, true_poses, tracks = [], [], []
        for f in range(n_frames):
            pos = base + (start + 4.0 * f) * fwd + lane * right
            t = GnssTime(2100, 345600.0 + 1000.0 * k + f)
            rot = np.array([fwd, right, down])
            pose = GlobalPose(pos, Quaternion.from_matrix(rot), t)
            true_poses.append(pose)
            for fid, p in enumerate(points):
                proj = _project(pose, p, intrinsics)
                if proj is None:
                    continue
                u, v, depth = proj
                if not (2.0 < depth < 60.0 and 0 <= u <= 2 * intrinsics.cx and 0 <= v <= 2 * intrinsics.cy):
                    continue
                if pixel_sigma > 0:
                    u += drng.normal(0.0, pixel_sigma)
                    v += drng.normal(0.0, pixel_sigma)
                tracks.append((f, fid, u, v, depth))
            dtheta = drng.normal(0.0, math.radians(rot_sigma_deg), 3) if rot_sigma_deg > 0 else np.zeros(3)
            dpos = drng.normal(0.0, pos_sigma, 3) if pos_sigma > 0 else np.zeros(3)
            poses.append(pose.perturbed(dtheta, dpos))
        drives.append(FeatureDrive(poses, true_poses, tracks))
    return FeatureScene(intrinsics, points, drives)
