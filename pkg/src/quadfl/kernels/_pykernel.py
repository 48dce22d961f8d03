"""Pure-Python closed-loop integration kernel.

Scalar ``math`` arithmetic on flat lists; mirrors ``_ckernel.pyx`` line for
line so both backends agree to rounding. Table layouts are documented in
:mod:`quadfl.kernels`.
"""

from math import cos, floor, isfinite, pi, sin, tan

OK, DOMAIN_EXIT, NON_FINITE = 0, 1, 2


def _rot(ph, th, ps):
    cph, sph = cos(ph), sin(ph)
    cth, sth = cos(th), sin(th)
    cps, sps = cos(ps), sin(ps)
    return [
        cth * cps, -cth * sps, sth,
        sph * sth * cps + cph * sps, -sph * sth * sps + cph * cps, -sph * cth,
        -cph * sth * cps + sph * sps, cph * sth * sps + sph * cps, cph * cth,
    ]


def _gyro(wx, wy, wz, P):
    jx = P[0] * wx + P[1] * wy + P[2] * wz
    jy = P[3] * wx + P[4] * wy + P[5] * wz
    jz = P[6] * wx + P[7] * wy + P[8] * wz
    cx = wy * jz - wz * jy
    cy = wz * jx - wx * jz
    cz = wx * jy - wy * jx
    return (
        P[9] * cx + P[10] * cy + P[11] * cz,
        P[12] * cx + P[13] * cy + P[14] * cz,
        P[15] * cx + P[16] * cy + P[17] * cz,
    )


def _in_domain(x, P):
    for i in range(14):
        if not isfinite(x[i]):
            return False
    lim = P[19]
    return x[12] > P[20] and abs(x[6]) < lim and abs(x[7]) < lim


def _wrap(a):
    return a + 2.0 * pi * floor((pi - a) / (2.0 * pi))


def _tracking(x, R, ref, K, g):
    zeta, chi = x[12], x[13]
    wx, wy, wz = x[9], x[10], x[11]
    th, ps = x[7], x[8]
    v = [0.0] * 4
    # body jerk direction [zeta wy, -zeta wx, chi]
    bx, by, bz = zeta * wy, -zeta * wx, chi
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
    return v


def _feedback(x, R, v, P):
    zeta, chi = x[12], x[13]
    wx, wy, wz = x[9], x[10], x[11]
    th, ps = x[7], x[8]
    hgx, hgy, hgz = _gyro(wx, wy, wz, P)
    bx = zeta * (wx * wz - hgy) + 2.0 * chi * wy
    by = zeta * (wy * wz + hgx) - 2.0 * chi * wx
    bz = -zeta * (wx * wx + wy * wy)
    # y = R^T (v_r - R b) = R^T v_r - b
    y0 = R[0] * v[0] + R[3] * v[1] + R[6] * v[2] - bx
    y1 = R[1] * v[0] + R[4] * v[1] + R[7] * v[2] - by
    y2 = R[2] * v[0] + R[5] * v[1] + R[8] * v[2] - bz
    u1dd = y2
    u2 = -y1 / zeta
    u3 = y0 / zeta
    cth, sth = cos(th), sin(th)
    cps, sps = cos(ps), sin(ps)
    t = sth / cth
    th_dot = sps * wx + cps * wy
    ps_dot = (-sth * cps * wx + sth * sps * wy) / cth + wz
    sec2 = 1.0 / (cth * cth)
    bd0 = -th_dot * cps * sec2 + t * sps * ps_dot
    bd1 = th_dot * sps * sec2 + t * cps * ps_dot
    h_psi = bd0 * wx + bd1 * wy - (-t * cps * hgx + t * sps * hgy + hgz)
    u4 = v[3] - h_psi - (-t * cps * u2 + t * sps * u3)
    return [u1dd, u2, u3, u4], (hgx, hgy, hgz)


def _plant(x, R, u, hg, w, g):
    wx, wy, wz = x[9], x[10], x[11]
    zeta = x[12]
    th, ps = x[7], x[8]
    cth, sth = cos(th), sin(th)
    cps, sps = cos(ps), sin(ps)
    return [
        x[3], x[4], x[5],
        R[2] * zeta + w[3],
        R[5] * zeta + w[4],
        R[8] * zeta - g + w[5],
        (cps * wx - sps * wy) / cth,
        sps * wx + cps * wy,
        (-sth * cps * wx + sth * sps * wy) / cth + wz,
        u[1] - hg[0] + w[0],
        u[2] - hg[1] + w[1],
        u[3] - hg[2] + w[2],
        x[13],
        u[0],
    ]


def _command(x, R, ref, vprog_row, K, P, tracking):
    if tracking:
        return _tracking(x, R, ref, K, P[18])
    return list(vprog_row)


def simulate_loop(x0, dt, nsteps, ref, dist, vprog, gains, params,
                  tracking, sampled, X, U, V, xbad):
    """Integrate the closed loop with classical RK4 on a fixed grid.

    Returns ``(status, n_valid)``: rows ``0..n_valid-1`` of ``X, U, V`` hold
    valid samples. On abort the offending state is written to ``xbad``.
    """
    ref, dist, vprog = ref.tolist(), dist.tolist(), vprog.tolist()
    P = [float(p) for p in params]
    K = [float(k) for k in gains]
    g = P[18]
    h = float(dt)
    x = [float(c) for c in x0]
    for k in range(nsteps + 1):
        row = 2 * k
        if not _in_domain(x, P):
            xbad[:] = x
            return DOMAIN_EXIT, k
        R = _rot(x[6], x[7], x[8])
        vk = _command(x, R, ref[row], vprog[k], K, P, tracking)
        uk, hg = _feedback(x, R, vk, P)
        X[k, :] = x
        U[k, :] = uk
        V[k, :] = vk
        if k == nsteps:
            break
        k1 = _plant(x, R, uk, hg, dist[row], g)
        ks = [k1]
        for c, r in ((0.5, row + 1), (0.5, row + 1), (1.0, row + 2)):
            prev = ks[-1]
            xs = [x[i] + c * h * prev[i] for i in range(14)]
            if not _in_domain(xs, P):
                xbad[:] = xs
                return DOMAIN_EXIT, k + 1
            Rs = _rot(xs[6], xs[7], xs[8])
            vs = vk if (sampled or not tracking) else _command(xs, Rs, ref[r], vprog[k], K, P, tracking)
            us, hgs = _feedback(xs, Rs, vs, P)
            ks.append(_plant(xs, Rs, us, hgs, dist[r], g))
        k1, k2, k3, k4 = ks
        x = [x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(14)]
        for i in range(14):
            if not isfinite(x[i]):
                xbad[:] = x
                return NON_FINITE, k + 1
    return OK, nsteps + 1
