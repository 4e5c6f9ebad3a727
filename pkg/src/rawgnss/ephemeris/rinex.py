"""RINEX 2.x / 3.x navigation message reader and writer (GPS and GLONASS)."""
from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..constants import DEFAULT_LEAP_SECONDS, SECONDS_PER_WEEK
from ..errors import HeaderMissing, UnsupportedVersion
from ..frames import GnssTime
from .orbits import Constellation, GlonassEphemeris, KeplerEphemeris, SatId

log = logging.getLogger(__name__)

GPS_EPOCH = dt.datetime(1980, 1, 6)

# lines per record (epoch line included)
_RECORD_LINES = {"G": 8, "R": 4, "E": 8, "C": 8, "J": 8, "I": 8, "S": 4}


@dataclass
class IonoParams:
    """Klobuchar broadcast coefficients."""

    alpha: tuple = (0.0, 0.0, 0.0, 0.0)
    beta: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        self.alpha = tuple(float(v) for v in self.alpha)
        self.beta = tuple(float(v) for v in self.beta)
        if len(self.alpha) != 4 or len(self.beta) != 4:
            raise ValueError("Klobuchar needs four alpha and four beta terms")
        if not all(math.isfinite(v) for v in self.alpha + self.beta):
            raise ValueError("non-finite Klobuchar coefficient")
        if any(abs(v) > 1e-5 for v in self.alpha) or any(abs(v) > 1e7 for v in self.beta):
            raise ValueError("implausible Klobuchar coefficient magnitude")


@dataclass
class NavData:
    version: float
    records: list = field(default_factory=list)  # (SatId, ephemeris)
    iono: IonoParams | None = None
    leap_seconds: float | None = None
    skipped: int = 0
    ignored: int = 0
    diagnostics: list = field(default_factory=list)


def datetime_to_gnss(t: dt.datetime) -> GnssTime:
    delta = t - GPS_EPOCH
    seconds = delta.days * 86400.0 + delta.seconds + delta.microseconds * 1e-6
    week = int(seconds // SECONDS_PER_WEEK)
    return GnssTime(week, seconds - week * SECONDS_PER_WEEK)


def gnss_to_datetime(t: GnssTime) -> dt.datetime:
    return GPS_EPOCH + dt.timedelta(seconds=t.week * SECONDS_PER_WEEK + t.tow)


def _num(text: str) -> float:
    text = text.strip()
    if not text:
        return 0.0
    v = float(text.replace("D", "E").replace("d", "e"))
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


def _fields(line: str, start: int, count: int = 4, width: int = 19) -> list:
    return [_num(line[start + k * width:start + (k + 1) * width]) for k in range(count)]


def _epoch(year, month, day, hour, minute, sec) -> dt.datetime:
    whole = int(math.floor(sec))
    if not 0 <= whole <= 60:
        raise ValueError(f"bad seconds {sec}")
    return (dt.datetime(year, month, day, hour, minute)
            + dt.timedelta(seconds=whole, microseconds=round((sec - whole) * 1e6)))


def _parse_header(lines):
    if not lines:
        raise HeaderMissing("empty navigation file")
    first = lines[0]
    if "RINEX VERSION / TYPE" not in first[60:]:
        raise HeaderMissing("first line is not 'RINEX VERSION / TYPE'")
    try:
        version = float(first[:9])
    except ValueError:
        raise UnsupportedVersion(f"unreadable version field {first[:9]!r}") from None
    if not (2.0 <= version < 4.0):
        raise UnsupportedVersion(f"RINEX version {version}")
    ftype = first[20:21]
    if version < 3.0:
        if ftype not in ("N", "G"):
            raise UnsupportedVersion(f"RINEX 2 file type {ftype!r} is not N or G")
        system = "G" if ftype == "N" else "R"
    else:
        if ftype != "N":
            raise UnsupportedVersion(f"RINEX 3 file type {ftype!r} is not N")
        system = first[40:41] or "M"

    nav = NavData(version)
    alpha = beta = None
    for n, line in enumerate(lines[1:], start=1):
        label = line[60:].strip()
        try:
            if label == "ION ALPHA":
                alpha = _fields(line, 2, 4, 12)
            elif label == "ION BETA":
                beta = _fields(line, 2, 4, 12)
            elif label == "IONOSPHERIC CORR":
                if line[:4] == "GPSA":
                    alpha = _fields(line, 5, 4, 12)
                elif line[:4] == "GPSB":
                    beta = _fields(line, 5, 4, 12)
            elif label == "LEAP SECONDS":
                nav.leap_seconds = float(int(line[:6]))
        except ValueError as exc:
            nav.diagnostics.append(f"line {n + 1}: bad header record {label!r}: {exc}")
        if label == "END OF HEADER":
            if alpha is not None and beta is not None:
                try:
                    nav.iono = IonoParams(alpha, beta)
                except ValueError as exc:
                    nav.diagnostics.append(f"ionosphere header rejected: {exc}")
            return nav, system, n + 1
    raise HeaderMissing("no 'END OF HEADER' line")


def _is_start(line: str, version: float) -> bool:
    if version >= 3.0:
        return len(line) > 0 and line[0].isalpha()
    return len(line) >= 2 and line[:2].strip() != "" and not line[:3].isspace()


def _gps_record(prn, epoch, lines, v3):
    c0 = 23 if v3 else 22
    start = 4 if v3 else 3
    af0, af1, af2 = _fields(lines[0], c0, 3)
    o = [_fields(line, start) for line in lines[1:]]
    week = int(o[4][2])
    toe = GnssTime.normalized(week, o[2][0])
    toc = datetime_to_gnss(epoch)
    eph = KeplerEphemeris(
        toe=toe, toc=toc,
        iode=o[0][0], crs=o[0][1], delta_n=o[0][2], m0=o[0][3],
        cuc=o[1][0], e=o[1][1], cus=o[1][2], sqrt_a=o[1][3],
        cic=o[2][1], omega0=o[2][2], cis=o[2][3],
        i0=o[3][0], crc=o[3][1], omega=o[3][2], omega_dot=o[3][3],
        idot=o[4][0],
        ura=o[5][0], health=o[5][1], tgd=o[5][2], iodc=o[5][3],
        transmit_time=o[6][0], fit_interval_h=o[6][1] or 4.0,
        af0=af0, af1=af1, af2=af2,
    )
    return SatId(Constellation.GPS, prn), eph


def _glonass_record(prn, epoch, lines, v3, leap_seconds):
    c0 = 23 if v3 else 22
    start = 4 if v3 else 3
    minus_tau, gamma, frame_time = _fields(lines[0], c0, 3)
    o = [_fields(line, start) for line in lines[1:4]]
    channel = int(o[1][3])
    tb = datetime_to_gnss(epoch + dt.timedelta(seconds=leap_seconds))
    eph = GlonassEphemeris(
        tb=tb,
        position=np.array([o[0][0], o[1][0], o[2][0]]) * 1e3,
        velocity=np.array([o[0][1], o[1][1], o[2][1]]) * 1e3,
        acceleration=np.array([o[0][2], o[1][2], o[2][2]]) * 1e3,
        tau_n=-minus_tau, gamma_n=gamma, freq_channel=channel,
        health=o[0][3], frame_time=frame_time, age=o[2][3],
    )
    return SatId(Constellation.GLONASS, prn, channel), eph


def parse_rinex_nav(text: str | Iterable[str], leap_seconds: float | None = None) -> NavData:
    """Parse a RINEX navigation message.

    Malformed records are skipped, counted in ``NavData.skipped`` and described
    in ``NavData.diagnostics``; records of unsupported systems are counted in
    ``NavData.ignored``. ``leap_seconds`` overrides the header value used to
    move GLONASS (UTC) epochs onto GPS time.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    lines = text.splitlines() if isinstance(text, str) else [ln.rstrip("\r\n") for ln in text]
    nav, system, i = _parse_header(lines)
    v3 = nav.version >= 3.0
    if leap_seconds is None:
        leap_seconds = nav.leap_seconds if nav.leap_seconds is not None else DEFAULT_LEAP_SECONDS
    glo_lines = 5 if nav.version >= 3.05 else 4

    def skip(lineno, reason):
        nav.skipped += 1
        nav.diagnostics.append(f"line {lineno}: record skipped: {reason}")
        log.debug("line %d: record skipped: %s", lineno, reason)

    n = len(lines)
    while i < n:
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        if not _is_start(line, nav.version):
            skip(i + 1, "continuation line without record start")
            i += 1
            continue
        sys_id = line[0] if v3 else system
        count = glo_lines if sys_id == "R" else _RECORD_LINES.get(sys_id, 8)
        block = [line]
        j = i + 1
        while j < n and len(block) < count and not _is_start(lines[j], nav.version):
            block.append(lines[j])
            j += 1
        if len(block) < count:
            skip(i + 1, f"truncated record ({len(block)} of {count} lines)")
            i = j
            continue
        i = j
        if sys_id not in ("G", "R"):
            nav.ignored += 1
            continue
        try:
            if v3:
                prn = int(line[1:3])
                epoch = _epoch(int(line[4:8]), int(line[9:11]), int(line[12:14]),
                               int(line[15:17]), int(line[18:20]), float(line[21:23]))
            else:
                prn = int(line[0:2])
                yy = int(line[3:5])
                epoch = _epoch(yy + (1900 if yy >= 80 else 2000), int(line[6:8]), int(line[9:11]),
                               int(line[12:14]), int(line[15:17]), float(line[17:22]))
            if sys_id == "G":
                nav.records.append(_gps_record(prn, epoch, block, v3))
            else:
                nav.records.append(_glonass_record(prn, epoch, block, v3, leap_seconds))
        except (ValueError, IndexError, OverflowError) as exc:
            skip(i - len(block) + 1, str(exc))
    return nav


def _d(v: float) -> str:
    return f"{v:19.12E}".replace("E", "D")


def _hdr(content: str, label: str) -> str:
    return f"{content:<60.60}{label:<20}"


def format_rinex_nav(records, iono: IonoParams | None = None,
                     leap_seconds: float | None = DEFAULT_LEAP_SECONDS) -> str:
    """Write GPS/GLONASS records as a RINEX 3.04 mixed navigation file.

    ``leap_seconds=None`` omits the LEAP SECONDS line.
    """
    out = [_hdr(f"{3.04:9.2f}{'':11}{'N':<20}{'M':<20}", "RINEX VERSION / TYPE"),
           _hdr(f"{'rawgnss':<20}{'':<20}{'':<20}", "PGM / RUN BY / DATE")]
    if iono is not None:
        out.append(_hdr("GPSA " + "".join(f"{v:12.4E}".replace("E", "D") for v in iono.alpha),
                        "IONOSPHERIC CORR"))
        out.append(_hdr("GPSB " + "".join(f"{v:12.4E}".replace("E", "D") for v in iono.beta),
                        "IONOSPHERIC CORR"))
    if leap_seconds is not None:
        out.append(_hdr(f"{int(leap_seconds):6d}", "LEAP SECONDS"))
    out.append(_hdr("", "END OF HEADER"))

    def epoch_line(sat, epoch, a, b, c):
        return (f"{sat}{epoch.year:5d}{epoch.month:3d}{epoch.day:3d}{epoch.hour:3d}"
                f"{epoch.minute:3d}{epoch.second:3d}{_d(a)}{_d(b)}{_d(c)}")

    def orbit(*vals):
        return "    " + "".join(_d(v) for v in vals)

    for sat, eph in records:
        if isinstance(eph, KeplerEphemeris):
            epoch = gnss_to_datetime(eph.toc)
            out.append(epoch_line(f"G{sat.prn:02d}", epoch, eph.af0, eph.af1, eph.af2))
            out.append(orbit(eph.iode, eph.crs, eph.delta_n, eph.m0))
            out.append(orbit(eph.cuc, eph.e, eph.cus, eph.sqrt_a))
            out.append(orbit(eph.toe.tow, eph.cic, eph.omega0, eph.cis))
            out.append(orbit(eph.i0, eph.crc, eph.omega, eph.omega_dot))
            out.append(orbit(eph.idot, 0.0, float(eph.toe.week), 0.0))
            out.append(orbit(eph.ura, eph.health, eph.tgd, eph.iodc))
            out.append(orbit(eph.transmit_time, eph.fit_interval_h))
        else:
            epoch = gnss_to_datetime(eph.tb) - dt.timedelta(seconds=leap_seconds)
            p, v, a = eph.position / 1e3, eph.velocity / 1e3, eph.acceleration / 1e3
            out.append(epoch_line(f"R{sat.prn:02d}", epoch, -eph.tau_n, eph.gamma_n, eph.frame_time))
            out.append(orbit(p[0], v[0], a[0], eph.health))
            out.append(orbit(p[1], v[1], a[1], float(eph.freq_channel)))
            out.append(orbit(p[2], v[2], a[2], eph.age))
    return "\n".join(out) + "\n"
