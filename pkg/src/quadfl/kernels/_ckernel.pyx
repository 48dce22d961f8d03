# cython: language_level=3
"""Compiled closed-loop integration kernel (same contract as ``_pykernel``)."""

from libc.math cimport cos, sin, tan, floor, fabs, isfinite, M_PI

cdef int OK = 0
cdef int DOMAIN_EXIT = 1
cdef int NON_FINITE = 2


cdef inline void _rot(const double* x, double* R) noexcept nogil:
    cdef double cph = cos(x[6]), sph = sin(x[6])
    cdef double cth = cos(x[7]), sth = sin(x[7])
    cdef double cps = cos(x[8]), sps = sin(x[8])
    R[0] = cth * cps
    R[1] = -cth * sps
    R[2] = sth
    R[3] = sph * sth * cps + cph * sps
    R[4] = -sph * sth * sps + cph * cps
    R[5] = -sph * cth
    R[6] = -cph * sth * cps + sph * sps
    R[7] = cph * sth * sps + sph * cps
    R[8] = cph * cth


cdef inline void _gyro(double wx, double wy, double wz, const double* P, double* hg) noexcept nogil:
    cdef double jx = P[0] * wx + P[1] * wy + P[2] * wz
    cdef double jy = P[3] * wx + P[4] * wy + P[5] * wz
    cdef double jz = P[6] * wx + P[7] * wy + P[8] * wz
    cdef double cx = wy * jz - wz * jy
    cdef double cy = wz * jx - wx * jz
    cdef double cz = wx * jy - wy * jx
    hg[0] = P[9] * cx + P[10] * cy + P[11] * cz
    hg[1] = P[12] * cx + P[13] * cy + P[14] * cz
    hg[2] = P[15] * cx + P[16] * cy + P[17] * cz


cdef inline bint _in_domain(const double* x, const double* P) noexcept nogil:
    cdef int i
    for i in range(14):
        if not isfinite(x[i]):
            return False
    return x[12] > P[20] and fabs(x[6]) < P[19] and fabs(x[7]) < P[19]


cdef inline double _wrap(double a) noexcept nogil:
    return a + 2.0 * M_PI * floor((M_PI - a) / (2.0 * M_PI))


cdef inline void _tracking(const double* x, const double* R, const double* ref,
                           const double* K, double g, double* v) noexcept nogil:
    cdef double zeta = x[12], chi = x[13]
    cdef double wx = x[9], wy = x[10], wz = x[11]
    cdef double th = x[7], ps = x[8]
    cdef double bx = zeta * wy, by = -zeta * wx, bz = chi
    cdef double a, s, t, eta
    cdef int i
    for i in range(3):
        a = R[3 * i + 2] * zeta - (g if i == 2 else 0.0)
        s = R[3 * i] * bx + R[3 * i + 1] * by + R[3 * i + 2] * bz
        v[i] = (ref[12 + i]
                + K[0] * (ref[i] - x[i])
                + K[1] * (ref[3 + i] - x[3 + i])
                + K[2] * (ref[6 + i] - a)
                + K[3] * (ref[9 + i] - s))
    t = tan(th)
    eta = -t * cos(ps) * wx + t * sin(ps) * wy + wz
    v[3] = ref[17] + K[4] * _wrap(ref[15] - ps) + K[5] * (ref[16] - eta)


cdef inline void _feedback(const double* x, const double* R, const double* v,
                           const double* P, double* u, double* hg) noexcept nogil:
    cdef double zeta = x[12], chi = x[13]
    cdef double wx = x[9], wy = x[10], wz = x[11]
    cdef double th = x[7], ps = x[8]
    _gyro(wx, wy, wz, P, hg)
    cdef double bx = zeta * (wx * wz - hg[1]) + 2.0 * chi * wy
    cdef double by = zeta * (wy * wz + hg[0]) - 2.0 * chi * wx
    cdef double bz = -zeta * (wx * wx + wy * wy)
    cdef double y0 = R[0] * v[0] + R[3] * v[1] + R[6] * v[2] - bx
    cdef double y1 = R[1] * v[0] + R[4] * v[1] + R[7] * v[2] - by
    cdef double y2 = R[2] * v[0] + R[5] * v[1] + R[8] * v[2] - bz
    u[0] = y2
    u[1] = -y1 / zeta
    u[2] = y0 / zeta
    cdef double cth = cos(th), sth = sin(th)
    cdef double cps = cos(ps), sps = sin(ps)
    cdef double t = sth / cth
    cdef double th_dot = sps * wx + cps * wy
    cdef double ps_dot = (-sth * cps * wx + sth * sps * wy) / cth + wz
    cdef double sec2 = 1.0 / (cth * cth)
    cdef double bd0 = -th_dot * cps * sec2 + t * sps * ps_dot
    cdef double bd1 = th_dot * sps * sec2 + t * cps * ps_dot
    cdef double h_psi = bd0 * wx + bd1 * wy - (-t * cps * hg[0] + t * sps * hg[1] + hg[2])
    u[3] = v[3] - h_psi - (-t * cps * u[1] + t * sps * u[2])


cdef inline void _plant(const double* x, const double* R, const double* u,
                        const double* hg, const double* w, double g, double* f) noexcept nogil:
    cdef double wx = x[9], wy = x[10], wz = x[11]
    cdef double zeta = x[12]
    cdef double cth = cos(x[7]), sth = sin(x[7])
    cdef double cps = cos(x[8]), sps = sin(x[8])
    f[0] = x[3]
    f[1] = x[4]
    f[2] = x[5]
    f[3] = R[2] * zeta + w[3]
    f[4] = R[5] * zeta + w[4]
    f[5] = R[8] * zeta - g + w[5]
    f[6] = (cps * wx - sps * wy) / cth
    f[7] = sps * wx + cps * wy
    f[8] = (-sth * cps * wx + sth * sps * wy) / cth + wz
    f[9] = u[1] - hg[0] + w[0]
    f[10] = u[2] - hg[1] + w[1]
    f[11] = u[3] - hg[2] + w[2]
    f[12] = x[13]
    f[13] = u[0]


def simulate_loop(const double[::1] x0, double dt, Py_ssize_t nsteps,
                  const double[:, ::1] ref, const double[:, ::1] dist,
                  const double[:, ::1] vprog, const double[::1] gains,
                  const double[::1] params, bint tracking, bint sampled,
                  double[:, ::1] X, double[:, ::1] U, double[:, ::1] V,
                  double[::1] xbad):
    """Integrate the closed loop with classical RK4 on a fixed grid.

    Returns ``(status, n_valid)``; see ``_pykernel.simulate_loop``.
    """
    cdef double x[14]
    cdef double xs[14]
    cdef double kk[4][14]
    cdef double R[9]
    cdef double Rs[9]
    cdef double vk[4]
    cdef double vs[4]
    cdef double uk[4]
    cdef double us[4]
    cdef double hg[3]
    cdef double P[21]
    cdef double K[6]
    cdef double cst[3]
    cdef Py_ssize_t roff[3]
    cdef double h = dt, g
    cdef Py_ssize_t k, row, i, j, r
    cdef int status = OK
    cdef Py_ssize_t n_valid = nsteps + 1

    for i in range(21):
        P[i] = params[i]
    for i in range(6):
        K[i] = gains[i]
    for i in range(14):
        x[i] = x0[i]
    g = P[18]
    cst[0] = 0.5
    cst[1] = 0.5
    cst[2] = 1.0
    roff[0] = 1
    roff[1] = 1
    roff[2] = 2

    with nogil:
        for k in range(nsteps + 1):
            row = 2 * k
            if not _in_domain(x, P):
                for i in range(14):
                    xbad[i] = x[i]
                status = DOMAIN_EXIT
                n_valid = k
                break
            _rot(x, R)
            if tracking:
                _tracking(x, R, &ref[row, 0], K, g, vk)
            else:
                for i in range(4):
                    vk[i] = vprog[k, i]
            _feedback(x, R, vk, P, uk, hg)
            for i in range(14):
                X[k, i] = x[i]
            for i in range(4):
                U[k, i] = uk[i]
                V[k, i] = vk[i]
            if k == nsteps:
                break
            _plant(x, R, uk, hg, &dist[row, 0], g, kk[0])
            for j in range(3):
                r = row + roff[j]
                for i in range(14):
                    xs[i] = x[i] + cst[j] * h * kk[j][i]
                if not _in_domain(xs, P):
                    for i in range(14):
                        xbad[i] = xs[i]
                    status = DOMAIN_EXIT
                    n_valid = k + 1
                    break
                _rot(xs, Rs)
                if tracking and not sampled:
                    _tracking(xs, Rs, &ref[r, 0], K, g, vs)
                else:
                    for i in range(4):
                        vs[i] = vk[i]
                _feedback(xs, Rs, vs, P, us, hg)
                _plant(xs, Rs, us, hg, &dist[r, 0], g, kk[j + 1])
            if status != OK:
                break
            for i in range(14):
                x[i] = x[i] + h / 6.0 * (kk[0][i] + 2.0 * kk[1][i] + 2.0 * kk[2][i] + kk[3][i])
            for i in range(14):
                if not isfinite(x[i]):
                    status = NON_FINITE
                    break
            if status != OK:
                for i in range(14):
                    xbad[i] = x[i]
                n_valid = k + 1
                break
    return status, n_valid
