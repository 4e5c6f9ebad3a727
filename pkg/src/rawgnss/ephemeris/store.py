"""In-memory ephemeris store with nearest-reference-time selection."""
from __future__ import annotations

import threading
from collections import defaultdict

from ..errors import NoEphemeris
from ..frames import GnssTime
from .orbits import KeplerEphemeris, SatId


def _upload_key(eph):
    if isinstance(eph, KeplerEphemeris):
        return eph.transmit_time
    return eph.frame_time


class EphemerisStore:
    """Ephemerides keyed by satellite.

    Lookups may run concurrently; insertions take an exclusive lock and swap
    in a new list so readers never observe a half-updated entry.
    """

    def __init__(self, records=()):
        self._lock = threading.Lock()
        self._by_sat = defaultdict(tuple)
        self._channels = {}
        for sat, eph in records:
            self.add(sat, eph)

    def add(self, sat: SatId, eph) -> None:
        with self._lock:
            # insertion order doubles as upload order for equal transmit times
            self._by_sat[sat.key] = self._by_sat[sat.key] + ((len(self._by_sat[sat.key]), eph),)
            if sat.freq_channel:
                self._channels[sat.key] = sat.freq_channel

    def __len__(self):
        return sum(len(v) for v in self._by_sat.values())

    def satellites(self):
        return sorted(self._by_sat)

    def channel(self, sat_key) -> int:
        return self._channels.get(tuple(sat_key), 0)

    def select(self, sat: SatId, t: GnssTime):
        """Ephemeris minimising ``|t - reference time|``; ties go to the later upload."""
        entries = self._by_sat.get(sat.key)
        if not entries:
            raise NoEphemeris(f"no ephemeris for {sat}")
        best = min(entries, key=lambda item: (abs(t - item[1].reference_time),
                                              -_upload_key(item[1]), -item[0]))
        return best[1]
