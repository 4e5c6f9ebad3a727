# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels; see ``_kernels_py.py`` for the reference versions."""
from libc.math cimport sin, cos, sqrt, atan2, fabs, copysign, M_PI

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double GPS_MU = 3.986005e14
cdef double EARTH_ROTATION_RATE = 7.2921151467e-5
cdef double GLO_MU = 3.9860044e14
cdef double GLO_A = 6378136.0
cdef double GLO_J2 = 1.0826257e-3
cdef double GLO_OMEGA = 7.292115e-5

cdef int KEPLER_MAX_ITER = 20
cdef double KEPLER_TOL = 1e-12


cdef int _kepler(double m, double e, double *out) nogil:
    cdef double ea = m if e < 0.8 else M_PI
    cdef double f
    cdef int it
    for it in range(1, KEPLER_MAX_ITER + 1):
        f = ea - e * sin(ea) - m
        ea -= f / (1.0 - e * cos(ea))
        if fabs(ea - e * sin(ea) - m) < KEPLER_TOL:
            out[0] = ea
            return it
    out[0] = ea
    return -1


def kepler_solve(double m, double e):
    cdef double ea
    cdef int it = _kepler(m, e, &ea)
    return ea, it


def gps_orbit(double[::1] p, double tk):
    cdef double a = p[0] * p[0]
    cdef double e = p[1]
    cdef double n = sqrt(GPS_MU / (a * a * a)) + p[6]
    cdef double ek
    cdef int it = _kepler(p[5] + n * tk, e, &ek)
    if it < 0:
        return None, None, ek, 0.0
    cdef double sin_e = sin(ek), cos_e = cos(ek)
    cdef double one_m_ecos = 1.0 - e * cos_e
    cdef double ek_dot = n / one_m_ecos
    cdef double sq = sqrt(1.0 - e * e)
    cdef double nu = atan2(sq * sin_e, cos_e - e)
    cdef double nu_dot = ek_dot * sq / one_m_ecos
    cdef double phi = nu + p[4]
    cdef double s2 = sin(2.0 * phi), c2 = cos(2.0 * phi)
    cdef double u = phi + p[10] * s2 + p[9] * c2
    cdef double r = a * one_m_ecos + p[12] * s2 + p[11] * c2
    cdef double inc = p[2] + p[14] * s2 + p[13] * c2 + p[7] * tk
    cdef double u_dot = nu_dot * (1.0 + 2.0 * (p[10] * c2 - p[9] * s2))
    cdef double r_dot = a * e * sin_e * ek_dot + 2.0 * nu_dot * (p[12] * c2 - p[11] * s2)
    cdef double inc_dot = p[7] + 2.0 * nu_dot * (p[14] * c2 - p[13] * s2)
    cdef double su = sin(u), cu = cos(u)
    cdef double xp = r * cu, yp = r * su
    cdef double xp_dot = r_dot * cu - r * u_dot * su
    cdef double yp_dot = r_dot * su + r * u_dot * cu
    cdef double om_dot = p[8] - EARTH_ROTATION_RATE
    cdef double om = p[3] + om_dot * tk - EARTH_ROTATION_RATE * p[15]
    cdef double so = sin(om), co = cos(om)
    cdef double si = sin(inc), ci = cos(inc)
    cdef cnp.ndarray[double, ndim=1] pos = np.empty(3)
    cdef cnp.ndarray[double, ndim=1] vel = np.empty(3)
    pos[0] = xp * co - yp * ci * so
    pos[1] = xp * so + yp * ci * co
    pos[2] = yp * si
    vel[0] = xp_dot * co - yp_dot * ci * so + yp * si * so * inc_dot - pos[1] * om_dot
    vel[1] = xp_dot * so + yp_dot * ci * co - yp * si * co * inc_dot + pos[0] * om_dot
    vel[2] = yp_dot * si + yp * ci * inc_dot
    return pos, vel, ek, ek_dot


cdef void _glonass_deriv(double *s, double *acc, double *out) nogil:
    cdef double x = s[0], y = s[1], z = s[2]
    cdef double r2 = x * x + y * y + z * z
    cdef double r = sqrt(r2)
    cdef double r3 = r2 * r
    cdef double a = 1.5 * GLO_J2 * GLO_MU * GLO_A * GLO_A / (r2 * r3)
    cdef double b = 5.0 * z * z / r2
    cdef double c = -GLO_MU / r3 - a * (1.0 - b)
    cdef double w2 = GLO_OMEGA * GLO_OMEGA
    out[0] = s[3]
    out[1] = s[4]
    out[2] = s[5]
    out[3] = (c + w2) * x + 2.0 * GLO_OMEGA * s[4] + acc[0]
    out[4] = (c + w2) * y - 2.0 * GLO_OMEGA * s[3] + acc[1]
    out[5] = (c - 2.0 * a) * z + acc[2]


cdef void _rk4_step(double *s, double *acc, double h) nogil:
    cdef double k1[6]
    cdef double k2[6]
    cdef double k3[6]
    cdef double k4[6]
    cdef double w[6]
    cdef int i
    _glonass_deriv(s, acc, k1)
    for i in range(6):
        w[i] = s[i] + 0.5 * h * k1[i]
    _glonass_deriv(w, acc, k2)
    for i in range(6):
        w[i] = s[i] + 0.5 * h * k2[i]
    _glonass_deriv(w, acc, k3)
    for i in range(6):
        w[i] = s[i] + h * k3[i]
    _glonass_deriv(w, acc, k4)
    for i in range(6):
        s[i] = s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


def glonass_propagate(state, acc, double dt, double step):
    cdef double s[6]
    cdef double a[3]
    cdef int i
    for i in range(6):
        s[i] = state[i]
    for i in range(3):
        a[i] = acc[i]
    cdef double h = copysign(fabs(step), dt)
    cdef double remaining = dt
    with nogil:
        while fabs(remaining) > 1e-9:
            if fabs(remaining) < fabs(h):
                h = remaining
            _rk4_step(s, a, h)
            remaining -= h
    out = np.empty(6)
    for i in range(6):
        out[i] = s[i]
    return out


def joseph_update(double[::1] x, double[:, ::1] p, double[::1] h, double innovation, double r):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double s = r
    cdef double[::1] ph = np.empty(n)
    cdef double[::1] hp = np.empty(n)
    cdef double[::1] kg = np.empty(n)
    cdef double[::1] aph = np.empty(n)
    cdef double[:, ::1] ap = np.empty((n, n))
    cdef double acc, acc2
    with nogil:
        for i in range(n):
            acc = 0.0
            acc2 = 0.0
            for j in range(n):
                acc = acc + p[i, j] * h[j]
                acc2 = acc2 + h[j] * p[j, i]
            ph[i] = acc
            hp[i] = acc2
        for i in range(n):
            s = s + h[i] * ph[i]
        for i in range(n):
            kg[i] = ph[i] / s
            x[i] = x[i] + kg[i] * innovation
        # ap = (I - k h) p
        for i in range(n):
            acc = 0.0
            for j in range(n):
                ap[i, j] = p[i, j] - kg[i] * hp[j]
                acc = acc + ap[i, j] * h[j]
            aph[i] = acc
        # p = ap (I - k h)^T + r k k^T
        for i in range(n):
            for j in range(n):
                p[i, j] = ap[i, j] - aph[i] * kg[j] + r * kg[i] * kg[j]
    return s
