"""Broadcast ephemeris ingestion and satellite state computation."""
from .fetch import cache_path, fetch_ephemeris, read_nav_text
from .orbits import (
    Constellation,
    GlonassEphemeris,
    KeplerEphemeris,
    SatId,
    SatState,
    glonass_sat_state,
    gps_sat_state,
    kepler_solve,
    sat_state,
)
from .rinex import IonoParams, NavData, format_rinex_nav, parse_rinex_nav
from .store import EphemerisStore

__all__ = [
    "Constellation", "EphemerisStore", "GlonassEphemeris", "IonoParams", "KeplerEphemeris",
    "NavData", "SatId", "SatState", "cache_path", "fetch_ephemeris", "format_rinex_nav",
    "glonass_sat_state", "gps_sat_state", "kepler_solve", "parse_rinex_nav", "read_nav_text",
    "sat_state",
]
