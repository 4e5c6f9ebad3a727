import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rawgnss import measurements as M
from rawgnss.constants import EARTH_ROTATION_RATE, SPEED_OF_LIGHT
from rawgnss.ephemeris.orbits import Constellation, SatId, SatState
from rawgnss.ephemeris.rinex import IonoParams
from rawgnss.frames import Geodetic, GnssTime, geodetic_to_ecef, ned_matrix
from rawgnss.measurements import (
    RAW_HEADER,
    ProcessedMeasurement,
    RawGnssRecord,
    apply_corrections,
    doppler_to_rate,
    format_raw_records,
    klobuchar_delay,
    parse_raw_records,
    rate_to_doppler,
    saastamoinen_delay,
    transmit_time_solve,
    weight_of,
    wavelength,
)
from rawgnss.testkit.oracles import emission_grid_search, klobuchar_obliquity, rotate_z, saastamoinen_zenith_ref

from builders import T0, simple_gps_ephemeris

GPS1 = SatId(Constellation.GPS, 1)
RX = Geodetic(37.4, -122.1, 20.0)


# --- parsing ---------------------------------------------------------------

def test_empty_file():
    assert parse_raw_records("").epochs == []
    assert parse_raw_records(RAW_HEADER + "\n").epochs == []


def test_two_lines_one_epoch():
    text = RAW_HEADER + "\n2100,345600.0,G,5,,21000000.5,-1200.25,,45.0,\n2100,345600.0,R,7,-3,22000000.0,,,40.0,2.0\n"
    res = parse_raw_records(text)
    assert res.skipped == 0
    assert len(res.epochs) == 1 and len(res.epochs[0].records) == 2
    g, r = res.epochs[0].records
    assert g.carrier_phase is None and g.pr_std is None and g.doppler == -1200.25
    assert r.sat == SatId(Constellation.GLONASS, 7, -3) and r.doppler is None and r.pr_std == 2.0


def test_zero_pseudorange_rejected():
    res = parse_raw_records(RAW_HEADER + "\n2100,345600.0,G,5,,0,,,45.0,\n")
    assert res.epochs == [] and res.skipped == 1
    assert "line 2" in res.diagnostics[0]


def test_absent_pseudorange_is_none():
    res = parse_raw_records(RAW_HEADER + "\n2100,345600.0,G,5,,,100.0,,45.0,\n")
    assert res.epochs[0].records[0].pseudorange is None


def test_non_monotonic_and_duplicates():
    text = "\n".join([
        RAW_HEADER,
        "2100,345601.0,G,5,,21000000.0,,,45.0,",
        "2100,345600.0,G,6,,21000000.0,,,45.0,",
        "2100,345601.0,G,5,,21000001.0,,,45.0,",
        "2100,345602.0,G,5,,21000002.0,,,45.0,",
    ]) + "\n"
    res = parse_raw_records(text)
    assert [len(e.records) for e in res.epochs] == [1, 1]
    assert res.skipped == 2
    assert "precedes" in res.diagnostics[0] and "duplicate" in res.diagnostics[1]


def test_missing_header_reported():
    res = parse_raw_records("2100,345600.0,G,5,,21000000.0,,,45.0,\n")
    assert len(res.epochs) == 1 and res.skipped == 1
    assert "header" in res.diagnostics[0]


def test_bad_values_rejected():
    rows = [
        "2100,345600.0,E,5,,21000000.0,,,45.0,",      # constellation
        "2100,345600.0,G,33,,21000000.0,,,45.0,",     # PRN
        "2100,345600.0,G,5,,1000.0,,,45.0,",          # range
        "2100,345600.0,G,5,,21000000.0,,,70.0,",      # C/N0
        "2100,345600.0,G,5,,21000000.0,nan,,45.0,",   # non-finite
        "2100,345600.0,G,5,,21000000.0,,,45.0",       # field count
        "2100,604800.0,G,5,,21000000.0,,,45.0,",      # tow
        "2100,345600.0,R,5,9,21000000.0,,,45.0,",     # channel
        "2100,345600.0,G,5,,21000000.0,,,45.0,-1",    # sigma
    ]
    res = parse_raw_records(RAW_HEADER + "\n" + "\n".join(rows) + "\n")
    assert res.epochs == [] and res.skipped == len(rows)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 32), st.floats(1.8e7, 3.0e7), st.one_of(st.none(), st.floats(-5e3, 5e3)),
                          st.one_of(st.none(), st.floats(-1e9, 1e9)), st.one_of(st.none(), st.floats(0, 64)),
                          st.one_of(st.none(), st.floats(0.01, 100))), min_size=1, max_size=8,
                unique_by=lambda r: r[0]))
def test_round_trip_exact(rows):
    recs = [RawGnssRecord(T0, SatId(Constellation.GPS, p), pr, d, c, n, s) for p, pr, d, c, n, s in rows]
    res = parse_raw_records(format_raw_records(recs))
    assert res.skipped == 0
    assert res.epochs[0].records == recs


# --- transmit time ---------------------------------------------------------------

def test_static_satellite_flight_time(monkeypatch):
    sat_pos = np.array([1.5e7, -1.0e7, 1.8e7])
    monkeypatch.setattr(M, "sat_state", lambda eph, t: SatState(sat_pos, np.zeros(3), 0.0, 0.0))
    rx = geodetic_to_ecef(RX)
    rng = float(np.linalg.norm(sat_pos - rx))
    sol = transmit_time_solve(rng, T0, None)
    assert abs(sol.tau - rng / SPEED_OF_LIGHT) < 1e-12
    assert sol.t_tx == T0 - sol.tau


def test_zero_flight_time_means_no_rotation():
    eph = simple_gps_ephemeris()
    sol = transmit_time_solve(2.1e7, T0, eph, force_tau=0.0)
    assert np.array_equal(sol.state.position, sol.raw_state.position)


def test_rotation_matches_oracle():
    eph = simple_gps_ephemeris()
    sol = transmit_time_solve(2.1e7, T0, eph)
    assert np.allclose(sol.state.position, rotate_z(sol.raw_state.position, EARTH_ROTATION_RATE * sol.tau),
                       rtol=0, atol=1e-7)


def test_moving_satellite_against_grid_search():
    eph = simple_gps_ephemeris(e=0.0, af0=2e-4, af1=3e-11, tgd=0.0)   # e = 0: no relativistic term
    rx = geodetic_to_ecef(RX)
    for pr in (2.05e7, 2.3e7, 2.55e7):
        sol = transmit_time_solve(pr, T0, eph)
        assert sol.iterations <= 10

        def clock(offset):
            return 2e-4 + 3e-11 * offset

        ref = emission_grid_search(None, clock, rx, T0, pr, 0.05, 0.1, levels=12)
        assert abs(sol.tau - ref) < 1e-10


def test_earth_rotation_frame_equivalence():
    eph = simple_gps_ephemeris()
    rx = geodetic_to_ecef(RX)
    sol = transmit_time_solve(2.2e7, T0, eph)
    angle = EARTH_ROTATION_RATE * sol.tau
    # residual in the reception frame vs. the transmit-time frame with the receiver rotated back
    a = np.linalg.norm(sol.state.position - rx)
    b = np.linalg.norm(sol.raw_state.position - rotate_z(rx, -angle))
    assert abs(a - b) < 1e-9


# --- atmosphere ---------------------------------------------------------------------

def test_klobuchar_zero_amplitude():
    iono = IonoParams()
    for el_deg in (15.0, 40.0, 90.0):
        el = math.radians(el_deg)
        d = klobuchar_delay(iono, RX, 1.0, el, T0)
        assert d == SPEED_OF_LIGHT * 5e-9 * klobuchar_obliquity(el)


def test_klobuchar_obliquity_ratio():
    iono = IonoParams()
    ratio = klobuchar_delay(iono, RX, 0.3, math.radians(15), T0) / klobuchar_delay(iono, RX, 0.3, math.pi / 2, T0)
    assert ratio == pytest.approx(klobuchar_obliquity(math.radians(15)) / klobuchar_obliquity(math.pi / 2), rel=1e-14)


def test_klobuchar_night_floor():
    iono = IonoParams((1e-8, 1e-8, -6e-8, -6e-8), (9e4, 3e4, -2e5, -6e4))
    # local time near 02:00 at longitude 0 is outside the daytime cosine
    t = GnssTime(2100, 2 * 3600.0)
    g = Geodetic(45.0, 0.0, 0.0)
    d = klobuchar_delay(iono, g, 0.0, math.pi / 2, t)
    assert d == pytest.approx(SPEED_OF_LIGHT * 5e-9 * klobuchar_obliquity(math.pi / 2), rel=1e-12)
    assert d == pytest.approx(1.5 * klobuchar_obliquity(math.pi / 2), rel=1e-3)


def test_klobuchar_daytime_exceeds_floor():
    iono = IonoParams((1e-8, 1e-8, -6e-8, -6e-8), (9e4, 3e4, -2e5, -6e4))
    d = klobuchar_delay(iono, Geodetic(45.0, 0.0, 0.0), 0.0, math.pi / 2, GnssTime(2100, 14 * 3600.0))
    assert 1.5 < d < 30.0


def test_saastamoinen():
    zen = saastamoinen_delay(Geodetic(45.0, 0.0, 0.0), math.pi / 2)
    assert 2.3 <= zen <= 2.5
    assert zen == pytest.approx(saastamoinen_zenith_ref(45.0, 0.0), rel=1e-12)
    assert saastamoinen_delay(Geodetic(45.0, 0.0, 5000.0), math.pi / 2) < zen
    ratio = saastamoinen_delay(RX, math.radians(30.0)) / saastamoinen_delay(RX, math.pi / 2)
    assert abs(ratio - 2.0) < 1e-9


# --- weights and doppler ---------------------------------------------------------------

def test_weights():
    assert weight_of(RawGnssRecord(T0, GPS1, 2.1e7, pr_std=2.0, cn0=30.0)) == 0.25
    assert weight_of(RawGnssRecord(T0, GPS1, 2.1e7, cn0=45.0), el=math.pi / 2) == pytest.approx(1.0, rel=1e-15)
    s25 = M.pseudorange_sigma(25.0, None, 0.7)
    s45 = M.pseudorange_sigma(45.0, None, 0.7)
    assert s25 / s45 == pytest.approx(10.0, rel=1e-12)
    with pytest.raises(ValueError):
        M.pseudorange_sigma(None, None)


@pytest.mark.parametrize("sat, freq", [
    (SatId(Constellation.GPS, 3), 1575.42e6),
    (SatId(Constellation.GLONASS, 3, -7), 1602e6 - 7 * 562.5e3),
    (SatId(Constellation.GLONASS, 4, 6), 1602e6 + 6 * 562.5e3),
])
def test_doppler_wavelength(sat, freq):
    assert wavelength(sat) == SPEED_OF_LIGHT / freq
    for rate in (-812.5, 0.0, 433.0625):
        assert doppler_to_rate(rate_to_doppler(rate, sat), sat) == pytest.approx(rate, rel=1e-15, abs=1e-12)
    # approaching satellite: positive doppler, shrinking range
    assert rate_to_doppler(-100.0, sat) > 0


def _meas(sat, sat_pos, cn0=45.0):
    rec = RawGnssRecord(T0, sat, 2.2e7, cn0=cn0)
    return ProcessedMeasurement(sat=sat, time=T0, sat_state=SatState(sat_pos, np.zeros(3), 0.0, 0.0), tau=0.07,
                                corrected_pseudorange=2.2e7, weight=1.0, record=rec)


def test_glonass_iono_scaled_by_frequency():
    rx = geodetic_to_ecef(RX)
    up = ned_matrix(RX).T @ np.array([0.3, 0.2, -0.93])
    sp = rx + 2.0e7 * up / np.linalg.norm(up)
    iono = IonoParams((1e-8, 1e-8, -6e-8, -6e-8), (9e4, 3e4, -2e5, -6e4))
    glo_sat = SatId(Constellation.GLONASS, 2, 3)
    g = apply_corrections(_meas(GPS1, sp), rx, iono)
    r = apply_corrections(_meas(glo_sat, sp), rx, iono)
    assert r.iono_delay / g.iono_delay == pytest.approx((1575.42e6 / (1602e6 + 3 * 562.5e3)) ** 2, rel=1e-12)
    assert r.tropo_delay == g.tropo_delay
    assert 0.0 <= g.iono_delay <= 30.0 and 0.0 <= g.tropo_delay <= 30.0


def test_masks():
    rx = geodetic_to_ecef(RX)
    ned = ned_matrix(RX)
    low = rx + 2.0e7 * (ned.T @ np.array([math.cos(math.radians(5)), 0.0, -math.sin(math.radians(5))]))
    high = rx + 2.0e7 * (ned.T @ np.array([0.0, 0.0, -1.0]))
    assert apply_corrections(_meas(GPS1, low), rx, None) is None
    assert apply_corrections(_meas(GPS1, high, cn0=15.0), rx, None) is None
    m = apply_corrections(_meas(GPS1, high), rx, None)
    assert m.elevation == pytest.approx(math.pi / 2, abs=1e-6) and m.iono_delay == 0.0
