"""Small scene builders shared by the unit tests."""
import math
from dataclasses import replace

import numpy as np

from rawgnss.ephemeris.orbits import Constellation, KeplerEphemeris, SatId, SatState
from rawgnss.frames import Geodetic, GnssTime, geodetic_to_ecef, ned_matrix
from rawgnss.measurements import ProcessedMeasurement
from rawgnss.solver.kalman import CB, N_STATE, FilterConfig, FilterState, kf_predict, kf_update, transition

T0 = GnssTime(2100, 345600.0)


def sky_directions(rng, n, min_el_deg=15.0):
    """Unit NED line-of-sight vectors spread over the sky above ``min_el_deg``."""
    out = []
    for _ in range(n):
        az = rng.uniform(0.0, 2 * math.pi)
        el = math.radians(rng.uniform(min_el_deg, 88.0))
        out.append((math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), -math.sin(el)))
    return np.array(out)


def measurements_from_geometry(receiver, los_ned, ned, bias=0.0, glonass=(), ranges=None, rng=None,
                               noise=0.0, isb=0.0, weight=1.0):
    """Processed measurements for satellites along ``los_ned`` at GPS-like range."""
    meas = []
    for i, los in enumerate(los_ned):
        r = 2.2e7 if ranges is None else ranges[i]
        sat_pos = receiver + r * (ned.T @ los)
        glo = i in glonass
        sat = SatId(Constellation.GLONASS, i + 1, 0) if glo else SatId(Constellation.GPS, i + 1)
        pr = float(np.linalg.norm(sat_pos - receiver)) + bias + (isb if glo else 0.0)
        if noise:
            pr += rng.normal(0.0, noise)
        meas.append(ProcessedMeasurement(
            sat=sat, time=T0, sat_state=SatState(sat_pos, np.zeros(3), 0.0, 0.0), tau=0.07,
            corrected_pseudorange=pr, weight=weight))
    return meas


def random_receiver(rng):
    g = Geodetic(rng.uniform(-70, 70), rng.uniform(-180, 180), rng.uniform(-50, 2000))
    return g, geodetic_to_ecef(g), ned_matrix(g)


def simple_gps_ephemeris(**kw):
    base = dict(toe=T0, toc=T0, sqrt_a=5153.7, e=0.012, i0=0.96, omega0=1.1, omega=-0.7, m0=0.4,
                delta_n=4.5e-9, idot=2e-10, omega_dot=-8e-9, cuc=2e-6, cus=6e-6, crc=250.0,
                crs=-40.0, cic=1e-7, cis=-1e-7, af0=1e-4, af1=1e-12, af2=0.0, tgd=5e-9)
    base.update(kw)
    return KeplerEphemeris(**base)


def _noise_sqrt(q):
    w, v = np.linalg.eigh(q)
    return v * np.sqrt(np.clip(w, 0.0, None))


def filter_health_run(seed=7, cycles=10_000, dt=0.1, sigma_pr=2.0, sigma_rate=0.1):
    """Run the filter on data simulated from its own model at a fixed receiver
    geometry. Returns ``(min covariance eigenvalue, normalized innovation variance)``."""
    rx_geo = Geodetic(37.4, -122.1, 20.0)
    rx, ned = geodetic_to_ecef(rx_geo), ned_matrix(rx_geo)
    rng = np.random.default_rng(seed)
    cfg = FilterConfig(gate_sigma=1e9)
    los = sky_directions(rng, 7)
    sats = [rx + 2.2e7 * (ned.T @ l) for l in los]
    phi, q = transition(dt, ned, cfg)
    qs = _noise_sqrt(q)
    truth = np.zeros(N_STATE)
    truth[:3] = rx
    truth[CB] = 500.0
    p0 = np.diag([25.0] * 3 + [1.0] * 3 + [25.0, 1.0, 1.0, 1.0, 1.0])
    est = truth + _noise_sqrt(p0) @ rng.normal(size=N_STATE)
    state = FilterState(est, p0.copy(), T0, ned)
    template = measurements_from_geometry(rx, los, ned)
    min_eig, nis = np.inf, []
    t = T0
    for k in range(cycles):
        truth = phi @ truth + qs @ rng.normal(size=N_STATE)
        t = t + dt
        state = kf_predict(state, t, cfg)
        meas = []
        for m, sp in zip(template, sats):
            d = sp - truth[:3]
            r = np.linalg.norm(d)
            rr = -(d / r) @ truth[3:6] + truth[7]
            meas.append(replace(m, time=t, sat_state=SatState(sp, np.zeros(3), 0.0, 0.0),
                                corrected_pseudorange=r + truth[CB] + rng.normal(0, sigma_pr),
                                weight=1 / sigma_pr ** 2,
                                corrected_rate=rr + rng.normal(0, sigma_rate), rate_weight=1 / sigma_rate ** 2))
        res = kf_update(state, meas, cfg)
        state = res.state
        min_eig = min(min_eig, float(np.linalg.eigvalsh(state.P).min()))
        if k >= 200:
            nis.extend(i.normalized for i in res.innovations)
    return min_eig, float(np.var(nis))
