"""Independent reference implementations.

Nothing in this module calls into the production code paths: each function is
a deliberately plain, slower rewrite used to cross-check the main path.
"""
import math

import numpy as np

MU = 3.986005e14
OMEGA_E = 7.2921151467e-5
C = 299792458.0


def kepler_fixed_point(m, e, iterations=100):
    ea = m
    for _ in range(iterations):
        ea = m + e * math.sin(ea)
    return ea


def gps_position_table(eph, t_seconds_from_toe):
    """Satellite ECEF position from a dict of broadcast parameters, step by step
    as tabulated in the GPS interface specification."""
    tk = t_seconds_from_toe
    A = eph["sqrt_a"] ** 2
    n0 = math.sqrt(MU / A ** 3)
    n = n0 + eph["delta_n"]
    Mk = eph["m0"] + n * tk
    Ek = kepler_fixed_point(Mk, eph["e"], 200)
    vk = 2.0 * math.atan(math.sqrt((1 + eph["e"]) / (1 - eph["e"])) * math.tan(Ek / 2.0))
    Phik = vk + eph["omega"]
    duk = eph["cus"] * math.sin(2 * Phik) + eph["cuc"] * math.cos(2 * Phik)
    drk = eph["crs"] * math.sin(2 * Phik) + eph["crc"] * math.cos(2 * Phik)
    dik = eph["cis"] * math.sin(2 * Phik) + eph["cic"] * math.cos(2 * Phik)
    uk = Phik + duk
    rk = A * (1 - eph["e"] * math.cos(Ek)) + drk
    ik = eph["i0"] + dik + eph["idot"] * tk
    xk_ = rk * math.cos(uk)
    yk_ = rk * math.sin(uk)
    Omk = eph["omega0"] + (eph["omega_dot"] - OMEGA_E) * tk - OMEGA_E * eph["toe"]
    return np.array([
        xk_ * math.cos(Omk) - yk_ * math.cos(ik) * math.sin(Omk),
        xk_ * math.sin(Omk) + yk_ * math.cos(ik) * math.cos(Omk),
        yk_ * math.sin(ik),
    ])


def gauss_jordan_inverse(a):
    """Dense matrix inverse by Gauss-Jordan elimination with partial pivoting."""
    a = [list(map(float, row)) for row in a]
    n = len(a)
    inv = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[piv][col]) < 1e-300:
            raise ZeroDivisionError("singular matrix")
        a[col], a[piv] = a[piv], a[col]
        inv[col], inv[piv] = inv[piv], inv[col]
        p = a[col][col]
        a[col] = [v / p for v in a[col]]
        inv[col] = [v / p for v in inv[col]]
        for r in range(n):
            if r != col and a[r][col] != 0.0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
                inv[r] = [x - f * y for x, y in zip(inv[r], inv[col])]
    return np.array(inv)


def dop_dense(rows, lat_deg, lon_deg):
    """DOP values (gdop, pdop, hdop, vdop, tdop) via explicit loops."""
    rows = [list(map(float, r)) for r in rows]
    k = len(rows[0])
    gtg = [[sum(r[i] * r[j] for r in rows) for j in range(k)] for i in range(k)]
    q = gauss_jordan_inverse(gtg)
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    # ENU basis (sign irrelevant for variances)
    east = [-math.sin(lon), math.cos(lon), 0.0]
    north = [-math.sin(lat) * math.cos(lon), -math.sin(lat) * math.sin(lon), math.cos(lat)]
    up = [math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)]

    def var(u):
        return sum(u[i] * q[i][j] * u[j] for i in range(3) for j in range(3))

    pdop2 = q[0][0] + q[1][1] + q[2][2]
    return (math.sqrt(pdop2 + q[3][3]), math.sqrt(pdop2), math.sqrt(var(east) + var(north)),
            math.sqrt(var(up)), math.sqrt(q[3][3]))


def geodetic_to_ecef_textbook(lat_deg, lon_deg, h, a=6378137.0, f=1 / 298.257223563):
    b = a * (1 - f)
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    n = a * a / math.sqrt(a * a * math.cos(lat) ** 2 + b * b * math.sin(lat) ** 2)
    return np.array([
        (n + h) * math.cos(lat) * math.cos(lon),
        (n + h) * math.cos(lat) * math.sin(lon),
        (b * b / (a * a) * n + h) * math.sin(lat),
    ])


def rotate_z(p, angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * p[0] + s * p[1], -s * p[0] + c * p[1], p[2]])


def emission_grid_search(sat_pos_fn, clock_fn, receiver, t_rx, pseudorange, lo, hi, levels=8, n=41):
    """Brute-force flight time by repeated dense grid refinement of the
    emission constraint ``|tau - (pseudorange / c + dt_sat(t_rx - tau))|``.

    ``sat_pos_fn`` and ``clock_fn`` take seconds relative to ``t_rx``.
    """
    best = lo
    for _ in range(levels):
        grid = np.linspace(lo, hi, n)
        cost = [abs(tau - (pseudorange / C + clock_fn(-tau))) for tau in grid]
        i = int(np.argmin(cost))
        best = grid[i]
        step = (hi - lo) / (n - 1)
        lo, hi = best - step, best + step
    return best


def klobuchar_obliquity(el_rad):
    return 1.0 + 16.0 * (0.53 - el_rad / math.pi) ** 3


def saastamoinen_zenith_ref(lat_deg, h, humidity=0.7):
    p = 1013.25 * (1 - 2.2557e-5 * h) ** 5.2568
    t_k = 288.16 - 6.5e-3 * h
    e = 6.108 * humidity * math.exp((17.15 * t_k - 4684.0) / (t_k - 38.45))
    denom = 1 - 0.00266 * math.cos(2 * math.radians(lat_deg)) - 0.00028e-3 * h
    return 0.0022768 * p / denom + 0.002277 * (1255.0 / t_k + 0.05) * e


def pinhole(point_local, fx, fy, cx, cy):
    """Project a point given in [forward, right, down] camera axes."""
    f, r, d = point_local
    return np.array([fx * r / f + cx, fy * d / f + cy])
