"""Raw observation records and per-measurement corrections.

Raw record CSV (header line mandatory, UTF-8, LF)::

    week,tow,constel,svid,freq_chan,pseudorange_m,doppler_hz,carrier_cycles,cn0_dbhz,pr_std_m

``constel`` is ``G`` or ``R``. Optional fields (pseudorange, doppler, carrier,
C/N0, pseudorange sigma) are left empty when absent. Doppler is positive for
an approaching satellite, i.e. a decreasing pseudorange.

Measurement model
-----------------
With receiver epoch ``t_rx`` and transmit time ``t_tx = t_rx - tau``::

    tau = pseudorange / c + dt_sat(t_tx)
    pseudorange = |R3(w_e tau) s(t_tx) - r| + b - c dt_sat(t_tx) + I + T

where ``R3`` rotates the satellite position into the ECEF frame of reception
time. The pseudorange rate is the exact derivative of the geometric part with
respect to ``t_rx`` (atmospheric rates are neglected).
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import (
    EARTH_ROTATION_RATE,
    GLO_L1_BASE_HZ,
    GLO_L1_STEP_HZ,
    GPS_L1_HZ,
    SPEED_OF_LIGHT,
)
from .ephemeris.orbits import Constellation, SatId, SatState, sat_state
from .ephemeris.rinex import IonoParams
from .errors import GnssError, NoConvergence, NoEphemeris
from .frames import Geodetic, GnssTime, azimuth_elevation, ecef_to_geodetic, ned_matrix

log = logging.getLogger(__name__)

RAW_HEADER = "week,tow,constel,svid,freq_chan,pseudorange_m,doppler_hz,carrier_cycles,cn0_dbhz,pr_std_m"


@dataclass(frozen=True)
class RawGnssRecord:
    time: GnssTime
    sat: SatId
    pseudorange: float | None = None
    doppler: float | None = None
    carrier_phase: float | None = None
    cn0: float | None = None
    pr_std: float | None = None

    def __post_init__(self):
        if self.pseudorange is not None and not 1.8e7 <= self.pseudorange <= 3.0e7:
            raise ValueError(f"pseudorange {self.pseudorange} outside [1.8e7, 3.0e7] m")
        if self.cn0 is not None and not 0.0 <= self.cn0 <= 64.0:
            raise ValueError(f"C/N0 {self.cn0} outside [0, 64] dB-Hz")
        if self.pr_std is not None and not self.pr_std > 0.0:
            raise ValueError(f"pseudorange sigma {self.pr_std} must be positive")
        for name in ("doppler", "carrier_phase"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"non-finite {name}")


@dataclass
class RawEpoch:
    time: GnssTime
    records: list = field(default_factory=list)


@dataclass
class RawParseResult:
    epochs: list = field(default_factory=list)
    skipped: int = 0
    diagnostics: list = field(default_factory=list)


def _opt(text: str):
    text = text.strip()
    if not text:
        return None
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


def _parse_line(line: str) -> RawGnssRecord:
    parts = line.split(",")
    if len(parts) != 10:
        raise ValueError(f"expected 10 fields, got {len(parts)}")
    week = int(parts[0])
    tow = float(parts[1])
    constel = parts[2].strip()
    if constel not in ("G", "R"):
        raise ValueError(f"unknown constellation {constel!r}")
    svid = int(parts[3])
    chan = int(parts[4]) if parts[4].strip() else 0
    pr = _opt(parts[5])
    if pr is not None and pr == 0.0:
        raise ValueError("pseudorange of zero; absent values must be empty")
    return RawGnssRecord(
        time=GnssTime(week, tow),
        sat=SatId(Constellation(constel), svid, chan),
        pseudorange=pr,
        doppler=_opt(parts[6]),
        carrier_phase=_opt(parts[7]),
        cn0=_opt(parts[8]),
        pr_std=_opt(parts[9]),
    )


def parse_raw_records(text) -> RawParseResult:
    """Parse raw record CSV into epoch groups.

    Records are grouped by identical ``(week, tow)``. Malformed lines,
    duplicate satellites within an epoch and records older than the current
    epoch are skipped and reported in ``diagnostics``.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    lines = text.splitlines() if isinstance(text, str) else [ln.rstrip("\r\n") for ln in text]
    result = RawParseResult()
    if not lines:
        return result
    start = 0
    if lines[0].strip().replace(" ", "") == RAW_HEADER:
        start = 1
    else:
        result.skipped += 1
        result.diagnostics.append("line 1: missing raw record header")
        start = 1 if lines[0][:1].isalpha() else 0

    current = None
    for n, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        try:
            rec = _parse_line(line)
        except (ValueError, IndexError, OverflowError) as exc:
            result.skipped += 1
            result.diagnostics.append(f"line {n}: malformed record: {exc}")
            continue
        if current is not None and rec.time < current.time:
            result.skipped += 1
            result.diagnostics.append(f"line {n}: epoch {rec.time} precedes {current.time}")
            continue
        if current is None or rec.time != current.time:
            current = RawEpoch(rec.time)
            result.epochs.append(current)
        if any(r.sat.key == rec.sat.key for r in current.records):
            result.skipped += 1
            result.diagnostics.append(f"line {n}: duplicate {rec.sat} in epoch {rec.time}")
            continue
        current.records.append(rec)
    return result


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def format_raw_records(records) -> str:
    lines = [RAW_HEADER]
    for r in records:
        lines.append(",".join([
            str(r.time.week), repr(float(r.time.tow)), r.sat.constellation.value, str(r.sat.prn),
            str(r.sat.freq_channel), _fmt(r.pseudorange), _fmt(r.doppler),
            _fmt(r.carrier_phase), _fmt(r.cn0), _fmt(r.pr_std),
        ]))
    return "\n".join(lines) + "\n"


# --- signal ----------------------------------------------------------------

def carrier_frequency(sat: SatId) -> float:
    if sat.constellation is Constellation.GLONASS:
        return GLO_L1_BASE_HZ + sat.freq_channel * GLO_L1_STEP_HZ
    return GPS_L1_HZ


def wavelength(sat: SatId) -> float:
    return SPEED_OF_LIGHT / carrier_frequency(sat)


def doppler_to_rate(doppler: float, sat: SatId) -> float:
    return -doppler * wavelength(sat)


def rate_to_doppler(rate: float, sat: SatId) -> float:
    return -rate / wavelength(sat)


# --- transmit time ------------------------------------------------------------

def earth_rotation(position, tau: float) -> np.ndarray:
    """Express an ECEF position from ``tau`` seconds ago in the current ECEF frame."""
    th = EARTH_ROTATION_RATE * tau
    c, s = math.cos(th), math.sin(th)
    x, y, z = position
    return np.array([c * x + s * y, -s * x + c * y, z])


@dataclass(frozen=True)
class TransmitSolution:
    state: SatState          # rotated into the reception frame
    raw_state: SatState      # at transmit time, transmit-time frame
    t_tx: GnssTime
    tau: float
    iterations: int


def transmit_time_solve(pseudorange: float, t_rx: GnssTime, eph, force_tau: float | None = None,
                        max_iter: int = 10, tol: float = 1e-10) -> TransmitSolution:
    """Fixed-point solution of the signal transmit time.

    ``force_tau`` pins the flight time (test hook); the satellite state is then
    evaluated at ``t_rx - force_tau`` and rotated by ``w_e * force_tau``.
    """
    if force_tau is not None:
        t_tx = t_rx - force_tau
        st = sat_state(eph, t_tx)
        return TransmitSolution(_rotate_state(st, force_tau), st, t_tx, force_tau, 0)
    tau = pseudorange / SPEED_OF_LIGHT
    for k in range(1, max_iter + 1):
        t_tx = t_rx - tau
        st = sat_state(eph, t_tx)
        new_tau = pseudorange / SPEED_OF_LIGHT + st.clock_bias
        delta = abs(new_tau - tau)
        tau = new_tau
        if delta < tol:
            t_tx = t_rx - tau
            st = sat_state(eph, t_tx)
            return TransmitSolution(_rotate_state(st, tau), st, t_tx, tau, k)
    raise NoConvergence(f"transmit time did not converge in {max_iter} iterations")


def _rotate_state(st: SatState, tau: float) -> SatState:
    return SatState(earth_rotation(st.position, tau), earth_rotation(st.velocity, tau),
                    st.clock_bias, st.clock_drift)


def effective_velocity(sol: TransmitSolution, tau_dot: float) -> np.ndarray:
    """Time derivative, with respect to reception time, of the rotated satellite position."""
    rot_v = sol.state.velocity
    p = sol.state.position
    spin = EARTH_ROTATION_RATE * np.array([p[1], -p[0], 0.0])
    return rot_v * (1.0 - tau_dot) + spin * tau_dot


def tau_rate(pseudorange_rate: float, clock_drift: float) -> float:
    return (pseudorange_rate / SPEED_OF_LIGHT + clock_drift) / (1.0 + clock_drift)


# --- atmosphere ---------------------------------------------------------------

def klobuchar_obliquity(el: float) -> float:
    e = el / math.pi
    return 1.0 + 16.0 * (0.53 - e) ** 3


def klobuchar_delay(iono: IonoParams, receiver: Geodetic, az: float, el: float, t: GnssTime) -> float:
    """GPS L1 ionospheric delay (m) from the broadcast Klobuchar model."""
    e = el / math.pi
    psi = 0.0137 / (e + 0.11) - 0.022
    phi_u, lam_u = receiver.lat / 180.0, receiver.lon / 180.0
    phi_i = max(-0.416, min(0.416, phi_u + psi * math.cos(az)))
    lam_i = lam_u + psi * math.sin(az) / math.cos(phi_i * math.pi)
    phi_m = phi_i + 0.064 * math.cos((lam_i - 1.617) * math.pi)
    local = (4.32e4 * lam_i + t.tow) % 86400.0
    f = klobuchar_obliquity(el)
    powers = (1.0, phi_m, phi_m * phi_m, phi_m ** 3)
    amp = max(0.0, sum(a * p for a, p in zip(iono.alpha, powers)))
    per = max(72000.0, sum(b * p for b, p in zip(iono.beta, powers)))
    x = 2.0 * math.pi * (local - 50400.0) / per
    if abs(x) < 1.57:
        v = 5e-9 + amp * (1.0 - x * x / 2.0 + x ** 4 / 24.0)
    else:
        v = 5e-9
    return SPEED_OF_LIGHT * v * f


def saastamoinen_zenith(receiver: Geodetic, humidity: float = 0.7) -> float:
    """Zenith tropospheric delay (m) with a standard atmosphere at the receiver height."""
    h = min(max(receiver.height, -100.0), 1.0e4)
    pres = 1013.25 * (1.0 - 2.2557e-5 * h) ** 5.2568
    temp = 15.0 - 6.5e-3 * h + 273.16
    e = 6.108 * humidity * math.exp((17.15 * temp - 4684.0) / (temp - 38.45))
    hydro = 0.0022768 * pres / (1.0 - 0.00266 * math.cos(2.0 * math.radians(receiver.lat)) - 0.00028e-3 * h)
    wet = 0.002277 * (1255.0 / temp + 0.05) * e
    return hydro + wet


def saastamoinen_delay(receiver: Geodetic, el: float, humidity: float = 0.7) -> float:
    """Slant tropospheric delay: Saastamoinen zenith delay mapped by 1/sin(el)."""
    return saastamoinen_zenith(receiver, humidity) / math.sin(el)


# --- weighting ----------------------------------------------------------------

def pseudorange_sigma(cn0: float | None, pr_std: float | None, el: float = math.pi / 2,
                      sigma0: float = 1.0) -> float:
    if pr_std is not None:
        return pr_std
    if cn0 is None:
        raise ValueError("weighting needs C/N0 or a reported sigma")
    return sigma0 * 10.0 ** (-(cn0 - 45.0) / 20.0) / math.sin(el)


def weight_of(record: RawGnssRecord, el: float = math.pi / 2, sigma0: float = 1.0) -> float:
    """Inverse variance (1/m^2) of a pseudorange."""
    return 1.0 / pseudorange_sigma(record.cn0, record.pr_std, el, sigma0) ** 2


# --- processed measurements -----------------------------------------------------

@dataclass
class ProcessingConfig:
    elevation_mask_deg: float = 10.0
    cn0_floor: float = 20.0
    sigma0: float = 1.0
    rate_sigma0: float = 0.1
    use_iono: bool = True
    use_tropo: bool = True


@dataclass(frozen=True)
class ProcessedMeasurement:
    sat: SatId
    time: GnssTime
    sat_state: SatState          # reception frame; velocity is the effective rate of change
    tau: float
    corrected_pseudorange: float  # satellite clock applied
    weight: float
    pseudorange_rate: float | None = None   # from doppler
    corrected_rate: float | None = None     # satellite clock drift applied
    rate_weight: float = 0.0
    iono_delay: float = 0.0
    tropo_delay: float = 0.0
    azimuth: float | None = None
    elevation: float | None = None
    record: RawGnssRecord | None = None
    transmit: TransmitSolution | None = None

    @property
    def is_glonass(self) -> bool:
        return self.sat.constellation is Constellation.GLONASS

    def model_range(self, position) -> float:
        """Predicted pseudorange minus receiver clock terms at ``position``."""
        return (float(np.linalg.norm(self.sat_state.position - position))
                + self.iono_delay + self.tropo_delay)


def process_record(rec: RawGnssRecord, store, config: ProcessingConfig | None = None) -> ProcessedMeasurement:
    """Position-independent processing: transmit time, satellite state and clock."""
    config = config or ProcessingConfig()
    if rec.pseudorange is None:
        raise ValueError("record has no pseudorange")
    eph = store.select(rec.sat, rec.time)
    sol = transmit_time_solve(rec.pseudorange, rec.time, eph)
    st = sol.state
    corrected = rec.pseudorange + SPEED_OF_LIGHT * st.clock_bias
    rate = corrected_rate = None
    velocity = effective_velocity(sol, 0.0)
    if rec.doppler is not None:
        rate = doppler_to_rate(rec.doppler, rec.sat)
        td = tau_rate(rate, st.clock_drift)
        velocity = effective_velocity(sol, td)
        corrected_rate = rate + SPEED_OF_LIGHT * st.clock_drift * (1.0 - td)
    weight = weight_of(rec, sigma0=config.sigma0)
    return ProcessedMeasurement(
        sat=rec.sat, time=rec.time,
        sat_state=SatState(st.position, velocity, st.clock_bias, st.clock_drift),
        tau=sol.tau, corrected_pseudorange=corrected, weight=weight,
        pseudorange_rate=rate, corrected_rate=corrected_rate,
        rate_weight=_rate_weight(rec, math.pi / 2, config),
        record=rec, transmit=sol,
    )


def _rate_weight(rec: RawGnssRecord, el: float, config: ProcessingConfig) -> float:
    if rec.doppler is None:
        return 0.0
    if rec.cn0 is None:
        sigma = config.rate_sigma0
    else:
        sigma = config.rate_sigma0 * 10.0 ** (-(rec.cn0 - 45.0) / 20.0) / math.sin(el)
    return 1.0 / sigma ** 2


def apply_corrections(meas: ProcessedMeasurement, reference, iono: IonoParams | None,
                      config: ProcessingConfig | None = None, reference_geodetic: Geodetic | None = None,
                      reference_ned=None):
    """Elevation-dependent corrections and weights at a reference receiver position.

    Returns ``None`` when the measurement falls below the elevation mask or the
    C/N0 floor.
    """
    config = config or ProcessingConfig()
    rec = meas.record
    if rec is not None and rec.cn0 is not None and rec.cn0 < config.cn0_floor:
        return None
    geo = reference_geodetic or ecef_to_geodetic(reference)
    az, el = azimuth_elevation(reference, meas.sat_state.position, geo, reference_ned)
    if el < math.radians(config.elevation_mask_deg) or el <= 0.0:
        return None
    iono_delay = 0.0
    if config.use_iono and iono is not None:
        iono_delay = klobuchar_delay(iono, geo, az, el, meas.time)
        if meas.is_glonass:
            iono_delay *= (GPS_L1_HZ / carrier_frequency(meas.sat)) ** 2
    tropo_delay = saastamoinen_delay(geo, el) if config.use_tropo else 0.0
    weight = meas.weight
    rate_weight = meas.rate_weight
    if rec is not None:
        weight = weight_of(rec, el, config.sigma0)
        rate_weight = _rate_weight(rec, el, config)
    return replace(meas, iono_delay=iono_delay, tropo_delay=tropo_delay, azimuth=az,
                   elevation=el, weight=weight, rate_weight=rate_weight)


def process_epoch(epoch: RawEpoch, store, config: ProcessingConfig | None = None):
    """Process every usable record of an epoch; returns (measurements, Counter of skip reasons)."""
    config = config or ProcessingConfig()
    out, skipped = [], Counter()
    for rec in epoch.records:
        if rec.pseudorange is None:
            skipped["no_pseudorange"] += 1
            continue
        if rec.cn0 is not None and rec.cn0 < config.cn0_floor:
            skipped["low_cn0"] += 1
            continue
        if rec.cn0 is None and rec.pr_std is None:
            skipped["no_weight"] += 1
            continue
        try:
            out.append(process_record(rec, store, config))
        except NoEphemeris:
            skipped["no_ephemeris"] += 1
        except GnssError as exc:
            skipped[type(exc).__name__] += 1
            log.debug("%s at %s: %s", rec.sat, rec.time, exc)
    return out, skipped


def correct_epoch(measurements, reference, iono, config: ProcessingConfig | None = None):
    """Apply :func:`apply_corrections` to a list, dropping masked measurements."""
    config = config or ProcessingConfig()
    geo = ecef_to_geodetic(reference)
    ned = ned_matrix(geo)
    out = []
    for m in measurements:
        c = apply_corrections(m, reference, iono, config, geo, ned)
        if c is not None:
            out.append(c)
    return out
