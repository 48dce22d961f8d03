"""Fixed-size attitude algebra shared by the plant, the linearizing map and the kernels.

Every function broadcasts over leading batch dimensions: a ``(..., 3)`` input
produces a ``(..., 3, 3)`` matrix. Euler angles are stored as ``[phi, theta, psi]``.

The attitude is parametrised by the intrinsic X-Y-Z sequence
``R = Rx(phi) @ Ry(theta) @ Rz(psi)``. This is the only elementary sequence
whose rate map is exactly the ``A(theta)`` used by :func:`att_kinematics`
(checked by ``Rdot = R S(omega)`` in the test suite).
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

#: Pitch cosine below which attitude kinematics are refused.
SINGULARITY_TOL = 1e-6


class SingularityError(ValueError):
    """Raised when the Euler rate map is evaluated too close to pitch = +-pi/2."""


def _as_float(a: ArrayLike) -> NDArray[np.float64]:
    return np.asarray(a, dtype=np.float64)


def wrap_angle(a: ArrayLike) -> NDArray[np.float64]:
    """Wrap angles to the half-open interval (-pi, pi]."""
    a = _as_float(a)
    return a + 2.0 * np.pi * np.floor((np.pi - a) / (2.0 * np.pi))


def skew(w: ArrayLike) -> NDArray[np.float64]:
    """Cross-product matrix: ``skew(w) @ v == np.cross(w, v)``."""
    w = _as_float(w)
    out = np.zeros(w.shape[:-1] + (3, 3))
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    out[..., 0, 1] = -wz
    out[..., 0, 2] = wy
    out[..., 1, 0] = wz
    out[..., 1, 2] = -wx
    out[..., 2, 0] = -wy
    out[..., 2, 1] = wx
    return out


def _check_pitch(theta: NDArray[np.float64]) -> NDArray[np.float64]:
    c = np.cos(theta[..., 1])
    if np.any(np.abs(c) <= SINGULARITY_TOL):
        raise SingularityError(
            f"pitch cosine {np.min(np.abs(c)):.3g} below {SINGULARITY_TOL:g}; "
            "Euler rate map undefined at pitch = +-pi/2"
        )
    return c


def att_kinematics(theta: ArrayLike) -> NDArray[np.float64]:
    """Matrix ``A`` with ``d/dt [phi, theta, psi] = A @ omega_b``.

    Raises:
        SingularityError: if ``|cos(pitch)| <= SINGULARITY_TOL``.
    """
    theta = _as_float(theta)
    cth = _check_pitch(theta)
    sth = np.sin(theta[..., 1])
    cps, sps = np.cos(theta[..., 2]), np.sin(theta[..., 2])
    zero = np.zeros_like(cth)
    rows = [
        [cps, -sps, zero],
        [cth * sps, cth * cps, zero],
        [-sth * cps, sth * sps, cth],
    ]
    out = np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)
    return out / cth[..., None, None]


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack(r, -1) for r in ([o, z, z], [z, c, -s], [z, s, c])], -2)


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack(r, -1) for r in ([c, z, s], [z, o, z], [-s, z, c])], -2)


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack(r, -1) for r in ([c, -s, z], [s, c, z], [z, z, o])], -2)


def rot_body_to_inertial(theta: ArrayLike) -> NDArray[np.float64]:
    """Body-to-inertial rotation ``Rx(phi) @ Ry(theta) @ Rz(psi)``."""
    theta = _as_float(theta)
    return _rx(theta[..., 0]) @ _ry(theta[..., 1]) @ _rz(theta[..., 2])


def gyroscopic(w: ArrayLike, J: ArrayLike, J_inv: ArrayLike | None = None) -> NDArray[np.float64]:
    """Gyroscopic acceleration ``J^-1 (w x J w)``.

    ``J_inv`` may be passed to skip the inversion in hot loops. ``J`` is
    assumed symmetric positive definite (validated when parameters load).
    """
    w = _as_float(w)
    J = _as_float(J)
    if J_inv is None:
        J_inv = np.linalg.inv(J)
    Jw = np.einsum("ij,...j->...i", J, w)
    return np.einsum("ij,...j->...i", J_inv, np.cross(w, Jw))
