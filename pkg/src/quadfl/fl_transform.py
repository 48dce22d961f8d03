"""Input-output linearization of the extended quadrotor.

Outputs are the CoM position (relative degree 4 per axis) and the heading
``psi`` (relative degree 2). Differentiating them gives::

    [r''''; psi''] = E(theta, zeta) @ u_bar + [h_r; h_psi] + [d_r; d_psi]

and the feedback ``u_bar = E^-1 (v - [h_r; h_psi])`` turns the plant into four
decoupled integrator chains driven by ``v``. All functions broadcast over
leading batch dimensions of the state array (layout in :mod:`.extended_model`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .extended_model import (
    CHI, N_STATE, PHI, PSI, R_SL, TH_SL, THETA, V_SL, W_SL, ZETA,
    DisturbanceSample, VehicleParams, rhs,
)
from .math_core import (
    _check_pitch, att_kinematics, gyroscopic, rot_body_to_inertial, skew,
)

# flat-state layout
Z_R, Z_V, Z_A, Z_S = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12)
Z_PSI, Z_ETA = 12, 13

COND_WARN = 1e8
DEFAULT_TILT_MARGIN = 0.087


class DomainError(ValueError):
    """The state left the region where the decoupling matrix is invertible."""


class NearSingularWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class FlatState:
    r: NDArray[np.float64]
    v: NDArray[np.float64]
    a: NDArray[np.float64]
    s: NDArray[np.float64]
    psi: float
    eta: float

    def to_array(self) -> NDArray[np.float64]:
        return np.concatenate([self.r, self.v, self.a, self.s, [self.psi, self.eta]])

    def __array__(self, dtype=None, copy=None):
        a = self.to_array()
        return a if dtype is None else a.astype(dtype)

    @classmethod
    def from_array(cls, z: ArrayLike) -> "FlatState":
        z = np.asarray(z, dtype=np.float64)
        return cls(z[Z_R].copy(), z[Z_V].copy(), z[Z_A].copy(), z[Z_S].copy(),
                   float(z[Z_PSI]), float(z[Z_ETA]))


@dataclass(frozen=True)
class VirtualCommand:
    v_r: NDArray[np.float64]
    v_psi: float

    def to_array(self) -> NDArray[np.float64]:
        return np.append(np.asarray(self.v_r, dtype=np.float64), self.v_psi)

    def __array__(self, dtype=None, copy=None):
        a = self.to_array()
        return a if dtype is None else a.astype(dtype)


@dataclass(frozen=True)
class DecouplingMatrixE:
    matrix: NDArray[np.float64]
    det: NDArray[np.float64]

    @property
    def cond(self) -> NDArray[np.float64]:
        return np.linalg.cond(self.matrix)


@dataclass(frozen=True)
class DomainMargins:
    tilt_rad: float = DEFAULT_TILT_MARGIN
    zeta_min: float = 1.0

    @classmethod
    def from_params(cls, p: VehicleParams, tilt_rad: float = DEFAULT_TILT_MARGIN):
        return cls(tilt_rad=tilt_rad, zeta_min=p.zeta_min)


def _arr(a) -> NDArray[np.float64]:
    return np.asarray(a, dtype=np.float64)


def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


def _zero_w(x) -> DisturbanceSample:
    return DisturbanceSample.zero(x.shape[:-1])


# -- heading chain -----------------------------------------------------------

def b_psi(theta: ArrayLike) -> NDArray[np.float64]:
    """Row mapping body rates to heading rate: ``psi' = b_psi @ omega_b``."""
    theta = _arr(theta)
    _check_pitch(theta)
    t = np.tan(theta[..., 1])
    return np.stack(
        [-t * np.cos(theta[..., 2]), t * np.sin(theta[..., 2]), np.ones_like(t)], axis=-1
    )


def b_psi_dot(theta: ArrayLike, omega_b: ArrayLike) -> NDArray[np.float64]:
    """Time derivative of :func:`b_psi` along ``theta' = A(theta) omega_b``."""
    theta, omega_b = _arr(theta), _arr(omega_b)
    rates = _mv(att_kinematics(theta), omega_b)
    th_dot, psi_dot = rates[..., 1], rates[..., 2]
    cth = np.cos(theta[..., 1])
    t = np.tan(theta[..., 1])
    cps, sps = np.cos(theta[..., 2]), np.sin(theta[..., 2])
    sec2 = 1.0 / cth**2
    return np.stack(
        [
            -th_dot * cps * sec2 + t * sps * psi_dot,
            th_dot * sps * sec2 + t * cps * psi_dot,
            np.zeros_like(t),
        ],
        axis=-1,
    )


def h_psi(x: ArrayLike, p: VehicleParams | None = None) -> NDArray[np.float64]:
    """Known drift of the heading acceleration: ``b_psi' omega - b_psi h_g``."""
    p = p or VehicleParams()
    x = _arr(x)
    theta, omega = x[..., TH_SL], x[..., W_SL]
    hg = gyroscopic(omega, p.J, p.J_inv)
    return np.sum(b_psi_dot(theta, omega) * omega, -1) - np.sum(b_psi(theta) * hg, -1)


def d_psi(x: ArrayLike, w: DisturbanceSample) -> NDArray[np.float64]:
    x = _arr(x)
    return np.sum(b_psi(x[..., TH_SL]) * w.d, -1)


def h_psi_star(theta: ArrayLike, u2: ArrayLike, u3: ArrayLike) -> NDArray[np.float64]:
    """Coupling of the roll/pitch commands into the heading acceleration."""
    theta = _arr(theta)
    _check_pitch(theta)
    t = np.tan(theta[..., 1])
    return -t * np.cos(theta[..., 2]) * _arr(u2) + t * np.sin(theta[..., 2]) * _arr(u3)


def psi_ddot_raw(
    x: ArrayLike, u: ArrayLike, w: DisturbanceSample | None = None,
    p: VehicleParams | None = None,
) -> NDArray[np.float64]:
    """Heading acceleration from the plant angular acceleration (unfactored form)."""
    p = p or VehicleParams()
    x, u = _arr(x), _arr(u)
    w = _zero_w(x) if w is None else w
    omega_dot = rhs(x, u, w, p)[..., W_SL]
    theta, omega = x[..., TH_SL], x[..., W_SL]
    return (np.sum(b_psi(theta) * omega_dot, -1)
            + np.sum(b_psi_dot(theta, omega) * omega, -1))


# -- position chain ----------------------------------------------------------

def _thrust_axis_rate(omega):
    # S(omega) e3 = [wy, -wx, 0]
    return np.stack([omega[..., 1], -omega[..., 0], np.zeros_like(omega[..., 0])], -1)


def jerk(x: ArrayLike, a_d_dot: ArrayLike | None = None) -> NDArray[np.float64]:
    """Third derivative of the CoM position."""
    x = _arr(x)
    R = rot_body_to_inertial(x[..., TH_SL])
    zeta, chi = x[..., ZETA], x[..., CHI]
    body = np.zeros(x.shape[:-1] + (3,))
    body[..., 2] = chi
    body = body + _mv(skew(x[..., W_SL]), np.stack(
        [np.zeros_like(zeta), np.zeros_like(zeta), zeta], -1))
    out = _mv(R, body)
    if a_d_dot is not None:
        out = out + _arr(a_d_dot)
    return out


def snap_raw(
    x: ArrayLike, u: ArrayLike, w: DisturbanceSample | None = None,
    p: VehicleParams | None = None,
) -> NDArray[np.float64]:
    """Fourth derivative of the CoM position with the plant's raw ``omega_dot``.

    Independent of :func:`h_r`/:func:`d_r`; used to cross-check the factored form.
    """
    p = p or VehicleParams()
    x, u = _arr(x), _arr(u)
    w = _zero_w(x) if w is None else w
    R = rot_body_to_inertial(x[..., TH_SL])
    wx, wy, wz = x[..., 9], x[..., 10], x[..., 11]
    zeta, chi = x[..., ZETA], x[..., CHI]
    wdot = rhs(x, u, w, p)[..., W_SL]
    t1 = np.stack([wdot[..., 1] * zeta, -wdot[..., 0] * zeta, u[..., 0]], -1)
    t2 = 2.0 * chi[..., None] * np.stack([wy, -wx, np.zeros_like(wx)], -1)
    t3 = zeta[..., None] * np.stack([wx * wz, wy * wz, -(wx**2 + wy**2)], -1)
    return _mv(R, t1 + t2 + t3) + w.a_d_ddot


def h_r(x: ArrayLike, p: VehicleParams | None = None) -> NDArray[np.float64]:
    """Known drift of the CoM snap (gyroscopic and rate-coupling terms)."""
    p = p or VehicleParams()
    x = _arr(x)
    R = rot_body_to_inertial(x[..., TH_SL])
    omega = x[..., W_SL]
    wx, wy, wz = omega[..., 0], omega[..., 1], omega[..., 2]
    zeta, chi = x[..., ZETA], x[..., CHI]
    hg = gyroscopic(omega, p.J, p.J_inv)
    a = np.stack([wx * wz - hg[..., 1], wy * wz + hg[..., 0], -(wx**2 + wy**2)], -1)
    b = _thrust_axis_rate(omega)
    return _mv(R, zeta[..., None] * a + 2.0 * chi[..., None] * b)


def d_r(x: ArrayLike, w: DisturbanceSample) -> NDArray[np.float64]:
    """Unknown part of the CoM snap; only the tilt components of ``d`` enter."""
    x = _arr(x)
    R = rot_body_to_inertial(x[..., TH_SL])
    zeta = x[..., ZETA]
    d = _arr(w.d)
    body = np.stack([zeta * d[..., 1], -zeta * d[..., 0], np.zeros_like(zeta * d[..., 0])], -1)
    return _mv(R, body) + _arr(w.a_d_ddot)


# -- decoupling matrix -------------------------------------------------------

def _b_r(theta, zeta):
    R = rot_body_to_inertial(theta)
    zeta = _arr(zeta)
    M = np.zeros(zeta.shape + (3, 3))
    M[..., 0, 2] = zeta
    M[..., 1, 1] = -zeta
    M[..., 2, 0] = 1.0
    return R @ M


def decoupling_matrix(theta: ArrayLike, zeta: ArrayLike) -> DecouplingMatrixE:
    """The 4x4 matrix multiplying ``u_bar`` in ``[r''''; psi'']``.

    Block lower-triangular, so ``det E = det B_r = zeta**2``.
    """
    theta = _arr(theta)
    zeta = _arr(zeta)
    batch = np.broadcast_shapes(theta.shape[:-1], zeta.shape)
    E = np.zeros(batch + (4, 4))
    E[..., :3, :3] = _b_r(theta, zeta)
    E[..., 3, 1:4] = b_psi(theta)
    return DecouplingMatrixE(E, np.broadcast_to(zeta**2, batch).copy())


def position_command_transform(x: ArrayLike, u: ArrayLike) -> NDArray[np.float64]:
    """``u_r = B_r(theta, zeta) @ [u1_ddot, u2, u3]``."""
    x, u = _arr(x), _arr(u)
    return _mv(_b_r(x[..., TH_SL], x[..., ZETA]), u[..., :3])


def in_domain(x: ArrayLike, margins: DomainMargins | None = None) -> NDArray[np.bool_]:
    """True where thrust exceeds the floor and roll/pitch stay inside the tilt margin."""
    margins = margins or DomainMargins()
    x = _arr(x)
    lim = np.pi / 2 - margins.tilt_rad
    ok = (x[..., ZETA] > margins.zeta_min) & (np.abs(x[..., PHI]) < lim) & (np.abs(x[..., THETA]) < lim)
    return ok & np.all(np.isfinite(x), axis=-1)


# -- diffeomorphism ----------------------------------------------------------

def flat_state(x: ArrayLike, p: VehicleParams | None = None) -> NDArray[np.float64]:
    """Disturbance-free transform ``z = [r, v, a, s, psi, eta]``."""
    p = p or VehicleParams()
    x = _arr(x)
    R = rot_body_to_inertial(x[..., TH_SL])
    z = np.empty(x.shape[:-1] + (N_STATE,))
    z[..., Z_R] = x[..., R_SL]
    z[..., Z_V] = x[..., V_SL]
    z[..., Z_A] = R[..., :, 2] * x[..., ZETA, None] - p.gravity
    z[..., Z_S] = jerk(x)
    z[..., Z_PSI] = x[..., PSI]
    z[..., Z_ETA] = np.sum(b_psi(x[..., TH_SL]) * x[..., W_SL], -1)
    return z


def state_from_flat(z: ArrayLike, p: VehicleParams | None = None) -> NDArray[np.float64]:
    """Inverse of :func:`flat_state` on the positive-thrust branch.

    Raises:
        DomainError: if the commanded specific force is zero.
    """
    p = p or VehicleParams()
    z = _arr(z)
    f = z[..., Z_A] + p.gravity
    zeta = np.linalg.norm(f, axis=-1)
    if np.any(zeta <= 0.0):
        raise DomainError("zero specific force: thrust direction undefined")
    b3 = f / zeta[..., None]
    # R e3 = [s_th, -s_ph c_th, c_ph c_th]
    th = np.arcsin(np.clip(b3[..., 0], -1.0, 1.0))
    ph = np.arctan2(-b3[..., 1], b3[..., 2])
    psi = z[..., Z_PSI]
    theta = np.stack([ph, th, psi], -1)
    R = rot_body_to_inertial(theta)
    body = np.einsum("...ji,...j->...i", R, z[..., Z_S])  # = [zeta wy, -zeta wx, chi]
    wx = -body[..., 1] / zeta
    wy = body[..., 0] / zeta
    chi = body[..., 2]
    bp = b_psi(theta)
    wz = z[..., Z_ETA] - bp[..., 0] * wx - bp[..., 1] * wy
    x = np.empty(z.shape[:-1] + (N_STATE,))
    x[..., R_SL] = z[..., Z_R]
    x[..., V_SL] = z[..., Z_V]
    x[..., TH_SL] = theta
    x[..., W_SL] = np.stack([wx, wy, wz], -1)
    x[..., ZETA] = zeta
    x[..., CHI] = chi
    return x


# -- assembled input-output map and feedback ---------------------------------

def snap_factored(
    x: ArrayLike, u: ArrayLike, w: DisturbanceSample | None = None,
    p: VehicleParams | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``E u_bar + [h_r; h_psi] + [d_r; d_psi]`` split into (snap, psi_ddot)."""
    p = p or VehicleParams()
    x, u = _arr(x), _arr(u)
    w = _zero_w(x) if w is None else w
    E = decoupling_matrix(x[..., TH_SL], x[..., ZETA]).matrix
    Eu = _mv(E, u)
    snap = Eu[..., :3] + h_r(x, p) + d_r(x, w)
    psi_dd = Eu[..., 3] + h_psi(x, p) + d_psi(x, w)
    return snap, psi_dd


def fl_feedback(
    x: ArrayLike, v: ArrayLike, p: VehicleParams | None = None,
    margins: DomainMargins | None = None,
) -> NDArray[np.float64]:
    """Linearizing feedback ``u_bar = E^-1 (v - [h_r; h_psi])``.

    ``v`` is ``[v_r (3), v_psi]``. The 3x3 position block is solved first,
    then ``u4`` follows by back-substitution through the heading row.

    Raises:
        DomainError: if any state is outside the invertibility domain.
    """
    p = p or VehicleParams()
    margins = margins or DomainMargins.from_params(p)
    x, v = _arr(x), _arr(v)
    ok = in_domain(x, margins)
    if not np.all(ok):
        bad = x[~ok][0] if x.ndim > 1 else x
        raise DomainError(
            f"state outside domain (zeta={bad[ZETA]:.4g}, phi={bad[PHI]:.4g}, "
            f"theta={bad[THETA]:.4g}); decoupling matrix not safely invertible"
        )
    theta, zeta = x[..., TH_SL], x[..., ZETA]
    Br = _b_r(theta, zeta)
    rhs3 = v[..., :3] - h_r(x, p)
    u123 = np.linalg.solve(Br, rhs3[..., None])[..., 0]
    u4 = v[..., 3] - h_psi(x, p) - h_psi_star(theta, u123[..., 1], u123[..., 2])
    cond = np.linalg.cond(decoupling_matrix(theta, zeta).matrix)
    if np.any(cond > COND_WARN):
        warnings.warn(
            f"decoupling matrix condition number {np.max(cond):.3g} exceeds {COND_WARN:g}",
            NearSingularWarning, stacklevel=2,
        )
    return np.concatenate([u123, u4[..., None]], axis=-1)
