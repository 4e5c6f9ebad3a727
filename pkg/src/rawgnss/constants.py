"""Physical and system constants shared by every module."""

# WGS84 ellipsoid
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

# GPS interface-specification values; mandated for broadcast ephemeris use
SPEED_OF_LIGHT = 2.99792458e8
GPS_MU = 3.986005e14
EARTH_ROTATION_RATE = 7.2921151467e-5
# relativistic clock correction coefficient, -2*sqrt(mu)/c^2
GPS_F_REL = -4.442807633e-10

# GLONASS ICD (PZ-90) values
GLO_MU = 3.9860044e14
GLO_A = 6378136.0
GLO_J2 = 1.0826257e-3
GLO_OMEGA = 7.292115e-5

GPS_L1_HZ = 1575.42e6
GLO_L1_BASE_HZ = 1602.0e6
GLO_L1_STEP_HZ = 562.5e3

SECONDS_PER_WEEK = 604800.0
# GPS - UTC, applied to GLONASS (UTC based) epochs at ingestion
DEFAULT_LEAP_SECONDS = 18.0

GPS_FIT_INTERVAL_S = 4.0 * 3600.0
GLO_VALIDITY_S = 15.0 * 60.0
GLO_STEP_S = 60.0
