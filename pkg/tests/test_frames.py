import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rawgnss.errors import NearSingular
from rawgnss.frames import (
    Geodetic,
    GlobalPose,
    GnssTime,
    Quaternion,
    ecef_to_geodetic,
    geodetic_to_ecef,
    ned_matrix,
    ned_rotation_at,
    pose_local_axes,
    yaw_by,
)
from rawgnss.testkit.oracles import geodetic_to_ecef_textbook

T = GnssTime(2100, 1000.0)
lats = st.floats(-90.0, 90.0)
lons = st.floats(-180.0, 179.999999)
heights = st.floats(-500.0, 2.0e7)
unit_quats = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(Quaternion.from_array)


def test_equator_point():
    g = ecef_to_geodetic([6378137.0, 0.0, 0.0])
    assert g.lat == pytest.approx(0.0, abs=1e-12)
    assert g.lon == 0.0
    assert g.height == pytest.approx(0.0, abs=1e-6)


def test_pole_point():
    g = ecef_to_geodetic([0.0, 0.0, 6356752.3142])
    assert g.lat == pytest.approx(90.0, abs=1e-9)
    assert g.height == pytest.approx(0.0, abs=1e-4)


def test_geocenter_rejected():
    with pytest.raises(NearSingular):
        ecef_to_geodetic([10.0, 5.0, 3.0])


def test_forward_trivial_points():
    assert np.allclose(geodetic_to_ecef(Geodetic(0, 0, 0)), [6378137.0, 0, 0], atol=1e-9)
    assert np.allclose(geodetic_to_ecef(Geodetic(0, 90, 0)), [0, 6378137.0, 0], atol=1e-9)


def test_forward_matches_textbook_oracle():
    ours = geodetic_to_ecef(Geodetic(45.0, 45.0, 100.0))
    assert np.abs(ours - geodetic_to_ecef_textbook(45.0, 45.0, 100.0)).max() < 1e-8


@settings(max_examples=300, deadline=None)
@given(st.floats(6.36e6, 6.40e6), st.floats(-math.pi / 2, math.pi / 2), st.floats(-math.pi, math.pi))
def test_ecef_round_trip(r, lat, lon):
    p = r * np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])
    assert np.linalg.norm(geodetic_to_ecef(ecef_to_geodetic(p)) - p) < 1e-6


@settings(max_examples=300, deadline=None)
@given(lats, lons, heights)
def test_geodetic_round_trip(lat, lon, h):
    g = ecef_to_geodetic(geodetic_to_ecef(Geodetic(lat, lon, h)))
    assert abs(g.lat - lat) < 1e-9
    if abs(lat) < 89.9999:
        assert abs((g.lon - lon + 180.0) % 360.0 - 180.0) < 1e-9
    assert abs(g.height - h) < 1e-6


def test_ned_at_pole_and_equator():
    up = ned_rotation_at(Geodetic(90.0, 0.0, 0.0)).rotate([0, 0, 1])
    assert np.allclose(up, [0, 0, -1], atol=1e-12)
    north = ned_rotation_at(Geodetic(0.0, 0.0, 0.0)).rotate([0, 0, 1])
    assert np.allclose(north, [1, 0, 0], atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(lats, lons, st.floats(-100, 1e4))
def test_ned_orthonormal(lat, lon, h):
    m = ned_rotation_at(Geodetic(lat, lon, h)).matrix()
    assert np.abs(m @ m.T - np.eye(3)).max() < 1e-12
    assert abs(np.linalg.det(m) - 1.0) < 1e-12
    p = geodetic_to_ecef(Geodetic(lat, lon, h))
    down = m @ (-p / np.linalg.norm(p))
    # ellipsoid deflection stays below 0.2 degrees
    assert down[2] > math.cos(math.radians(0.2))


@settings(max_examples=300, deadline=None)
@given(unit_quats, unit_quats)
def test_product_unit_norm(a, b):
    c = a * b
    assert abs(np.linalg.norm(c.as_array()) - 1.0) < 1e-9
    m = c.matrix()
    assert np.abs(m @ m.T - np.eye(3)).max() < 1e-12
    assert np.allclose(m, a.matrix() @ b.matrix(), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(unit_quats)
def test_matrix_round_trip_and_double_cover(q):
    back = Quaternion.from_matrix(q.matrix())
    assert back.equivalent(q)
    neg = Quaternion(-q.w, -q.x, -q.y, -q.z)
    assert neg.equivalent(q)
    assert np.allclose(neg.matrix(), q.matrix(), atol=1e-15)


def test_identity_axes():
    pose = GlobalPose(np.array([6378137.0, 0, 0]), Quaternion.identity(), T)
    f, r, d = pose_local_axes(pose)
    assert np.allclose([f, r, d], np.eye(3))


def test_ned_pose_axes():
    g = Geodetic(37.4, -122.1, 20.0)
    pose = GlobalPose(geodetic_to_ecef(g), ned_rotation_at(g), T)
    f, r, d = pose_local_axes(pose)
    ned = ned_matrix(g)
    assert np.allclose(f, ned[0], atol=1e-12)
    assert np.allclose(r, ned[1], atol=1e-12)
    assert np.allclose(d, ned[2], atol=1e-12)
    p = pose.position / np.linalg.norm(pose.position)
    assert d @ -p > 0.99


def test_yaw_90_forward_becomes_right():
    g = Geodetic(10.0, 20.0, 0.0)
    pose = GlobalPose(geodetic_to_ecef(g), ned_rotation_at(g), T)
    f0, r0, _ = pose_local_axes(pose)
    f1, r1, d1 = pose_local_axes(yaw_by(pose, math.pi / 2))
    assert np.allclose(f1, r0, atol=1e-12)
    assert np.allclose(r1, -f0, atol=1e-12)
    # oracle: compose the active rotation about down by hand
    c, s = math.cos(math.pi / 2), math.sin(math.pi / 2)
    assert np.allclose(f1, c * f0 + s * r0, atol=1e-12)


def test_yaw_by_matches_perturbed():
    g = Geodetic(-33.0, 151.0, 40.0)
    pose = GlobalPose(geodetic_to_ecef(g), ned_rotation_at(g), T)
    a = yaw_by(pose, 0.01).rotation()
    b = pose.perturbed((0.0, 0.0, 0.01)).rotation()
    assert np.allclose(a, b, atol=1e-14)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 3000), st.floats(0, 604799.999), st.integers(0, 3000), st.floats(0, 604799.999))
def test_time_difference_antisymmetric(w1, s1, w2, s2):
    a, b = GnssTime(w1, s1), GnssTime(w2, s2)
    assert (a - b) == -(b - a)


def test_week_rollover():
    a = GnssTime(2100, 604799.5)
    b = a + 1.0
    assert (b.week, b.tow) == (2101, 0.5)
    assert b - a == 1.0
    assert (b - 1.0) == a


def test_time_validation():
    with pytest.raises(ValueError):
        GnssTime(-1, 0.0)
    with pytest.raises(ValueError):
        GnssTime(1, 604800.0)
