"""Pure-Python implementations of the numerical kernels.

These mirror ``_ckernels.pyx`` one for one and are used whenever the compiled
extension is unavailable (or ``RAWGNSS_PURE_PYTHON=1`` is set).
"""
import math

import numpy as np

from .constants import EARTH_ROTATION_RATE, GLO_A, GLO_J2, GLO_MU, GLO_OMEGA, GPS_MU

KEPLER_MAX_ITER = 20
KEPLER_TOL = 1e-12

# layout of the packed Keplerian parameter vector
SQRT_A, ECC, I0, OMEGA0, OMEGA, M0, DELTA_N, IDOT, OMEGA_DOT, CUC, CUS, CRC, CRS, CIC, CIS, TOE = range(16)
N_KEPLER_PARAMS = 16


def kepler_solve(m, e):
    """Newton iteration for E - e sin E = M. Returns (E, iterations), iterations = -1 on failure."""
    ecc_anom = m if e < 0.8 else math.pi
    for it in range(1, KEPLER_MAX_ITER + 1):
        f = ecc_anom - e * math.sin(ecc_anom) - m
        ecc_anom -= f / (1.0 - e * math.cos(ecc_anom))
        if abs(ecc_anom - e * math.sin(ecc_anom) - m) < KEPLER_TOL:
            return ecc_anom, it
    return ecc_anom, -1


def gps_orbit(params, tk):
    """Broadcast Keplerian orbit at ``tk`` seconds from toe.

    Returns ``(pos, vel, E, Edot)`` with position/velocity in ECEF; the velocity
    is the analytic time derivative of the position model.
    """
    p = params
    a = p[SQRT_A] * p[SQRT_A]
    e = p[ECC]
    n = math.sqrt(GPS_MU / (a * a * a)) + p[DELTA_N]
    mk = p[M0] + n * tk
    ek, it = kepler_solve(mk, e)
    if it < 0:
        return None, None, ek, 0.0
    sin_e, cos_e = math.sin(ek), math.cos(ek)
    one_m_ecos = 1.0 - e * cos_e
    ek_dot = n / one_m_ecos
    sq = math.sqrt(1.0 - e * e)
    nu = math.atan2(sq * sin_e, cos_e - e)
    nu_dot = ek_dot * sq / one_m_ecos
    phi = nu + p[OMEGA]
    s2, c2 = math.sin(2.0 * phi), math.cos(2.0 * phi)
    u = phi + p[CUS] * s2 + p[CUC] * c2
    r = a * one_m_ecos + p[CRS] * s2 + p[CRC] * c2
    inc = p[I0] + p[CIS] * s2 + p[CIC] * c2 + p[IDOT] * tk
    u_dot = nu_dot * (1.0 + 2.0 * (p[CUS] * c2 - p[CUC] * s2))
    r_dot = a * e * sin_e * ek_dot + 2.0 * nu_dot * (p[CRS] * c2 - p[CRC] * s2)
    inc_dot = p[IDOT] + 2.0 * nu_dot * (p[CIS] * c2 - p[CIC] * s2)
    su, cu = math.sin(u), math.cos(u)
    xp, yp = r * cu, r * su
    xp_dot = r_dot * cu - r * u_dot * su
    yp_dot = r_dot * su + r * u_dot * cu
    om_dot = p[OMEGA_DOT] - EARTH_ROTATION_RATE
    om = p[OMEGA0] + om_dot * tk - EARTH_ROTATION_RATE * p[TOE]
    so, co = math.sin(om), math.cos(om)
    si, ci = math.sin(inc), math.cos(inc)
    x = xp * co - yp * ci * so
    y = xp * so + yp * ci * co
    z = yp * si
    vx = xp_dot * co - yp_dot * ci * so + yp * si * so * inc_dot - y * om_dot
    vy = xp_dot * so + yp_dot * ci * co - yp * si * co * inc_dot + x * om_dot
    vz = yp_dot * si + yp * ci * inc_dot
    return np.array([x, y, z]), np.array([vx, vy, vz]), ek, ek_dot


def _glonass_deriv(s, acc):
    x, y, z, vx, vy, vz = s
    r2 = x * x + y * y + z * z
    r = math.sqrt(r2)
    r3 = r2 * r
    a = 1.5 * GLO_J2 * GLO_MU * GLO_A * GLO_A / (r2 * r3)
    b = 5.0 * z * z / r2
    c = -GLO_MU / r3 - a * (1.0 - b)
    w2 = GLO_OMEGA * GLO_OMEGA
    return (
        vx, vy, vz,
        (c + w2) * x + 2.0 * GLO_OMEGA * vy + acc[0],
        (c + w2) * y - 2.0 * GLO_OMEGA * vx + acc[1],
        (c - 2.0 * a) * z + acc[2],
    )


def _rk4_step(s, acc, h):
    k1 = _glonass_deriv(s, acc)
    k2 = _glonass_deriv([s[i] + 0.5 * h * k1[i] for i in range(6)], acc)
    k3 = _glonass_deriv([s[i] + 0.5 * h * k2[i] for i in range(6)], acc)
    k4 = _glonass_deriv([s[i] + h * k3[i] for i in range(6)], acc)
    return [s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(6)]


def glonass_propagate(state, acc, dt, step):
    """RK4 integration of the GLONASS equations of motion over ``dt`` seconds
    using fixed steps of ``step`` seconds plus one final fractional step."""
    s = [float(v) for v in state]
    acc = [float(v) for v in acc]
    h = math.copysign(abs(step), dt)
    remaining = dt
    while abs(remaining) > 1e-9:
        if abs(remaining) < abs(h):
            h = remaining
        s = _rk4_step(s, acc, h)
        remaining -= h
    return np.array(s)


def joseph_update(x, p, h, innovation, r):
    """Scalar Kalman update in Joseph form, in place. Returns the innovation variance."""
    ph = p @ h
    s = float(h @ ph) + r
    k = ph / s
    x += k * innovation
    a = -np.outer(k, h)
    a[np.diag_indices_from(a)] += 1.0
    p[...] = a @ p @ a.T + r * np.outer(k, k)
    return s
