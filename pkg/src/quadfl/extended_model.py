"""The 14-state dynamically extended quadrotor plant.

State layout (``x[..., i]``)::

    0:3   r        inertial CoM position        [m]
    3:6   v        inertial CoM velocity        [m/s]
    6:9   theta    Euler angles phi, theta, psi [rad]
    9:12  omega_b  body angular rate            [rad/s]
    12    zeta     mass-normalised thrust       [m/s^2]
    13    chi      thrust rate                  [m/s^3]

Command layout (``u[..., i]``): ``[u1_ddot, u2, u3, u4]`` where ``u1_ddot`` is
the second derivative of the thrust command [m/s^4] and ``u2..u4`` are body
angular-acceleration commands [rad/s^2] (already scaled by ``J^-1``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .math_core import att_kinematics, gyroscopic, rot_body_to_inertial

N_STATE = 14
N_INPUT = 4

R_SL = slice(0, 3)
V_SL = slice(3, 6)
TH_SL = slice(6, 9)
W_SL = slice(9, 12)
ZETA = 12
CHI = 13

PHI, THETA, PSI = 6, 7, 8

E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ExtendedState:
    r: NDArray[np.float64]
    v: NDArray[np.float64]
    theta: NDArray[np.float64]
    omega_b: NDArray[np.float64]
    zeta: float
    chi: float

    def to_array(self) -> NDArray[np.float64]:
        return np.concatenate(
            [self.r, self.v, self.theta, self.omega_b, [self.zeta, self.chi]]
        ).astype(np.float64)

    def __array__(self, dtype=None, copy=None):
        a = self.to_array()
        return a if dtype is None else a.astype(dtype)

    @classmethod
    def from_array(cls, x: ArrayLike) -> "ExtendedState":
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (N_STATE,):
            raise ValueError(f"expected shape ({N_STATE},), got {x.shape}")
        return cls(
            x[R_SL].copy(), x[V_SL].copy(), x[TH_SL].copy(), x[W_SL].copy(),
            float(x[ZETA]), float(x[CHI]),
        )


@dataclass(frozen=True)
class CommandBar:
    u1_ddot: float
    u2: float
    u3: float
    u4: float

    def to_array(self) -> NDArray[np.float64]:
        return np.array([self.u1_ddot, self.u2, self.u3, self.u4], dtype=np.float64)

    def __array__(self, dtype=None, copy=None):
        a = self.to_array()
        return a if dtype is None else a.astype(dtype)

    @classmethod
    def from_array(cls, u: ArrayLike) -> "CommandBar":
        u = np.asarray(u, dtype=np.float64)
        return cls(*(float(c) for c in u))


@dataclass(frozen=True)
class DisturbanceSample:
    """Disturbance values at one instant (or a batch of instants).

    ``d`` enters the angular-rate equation, ``a_d`` the translational one.
    ``a_d_dot`` and ``a_d_ddot`` must be the exact time derivatives of ``a_d``.
    """

    d: NDArray[np.float64]
    a_d: NDArray[np.float64]
    a_d_dot: NDArray[np.float64]
    a_d_ddot: NDArray[np.float64]

    @classmethod
    def zero(cls, batch_shape: tuple[int, ...] = ()) -> "DisturbanceSample":
        z = np.zeros(batch_shape + (3,))
        return cls(z, z.copy(), z.copy(), z.copy())

    def to_array(self) -> NDArray[np.float64]:
        return np.concatenate([self.d, self.a_d, self.a_d_dot, self.a_d_ddot], axis=-1)


def _diag_default() -> NDArray[np.float64]:
    return np.diag([0.0082, 0.0082, 0.0148])


@dataclass(frozen=True)
class VehicleParams:
    """Inertia, gravity and the bounds the simulator checks.

    Command bounds are optional; ``None`` disables the corresponding check.
    """

    J: NDArray[np.float64] = field(default_factory=_diag_default)
    g_mag: float = 9.81
    zeta_min: float = 1.0
    zeta_max: float | None = None
    omega_dot_max: float | None = None
    u1_ddot_max: float | None = None
    J_inv: NDArray[np.float64] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        J = np.asarray(self.J, dtype=np.float64)
        if J.shape != (3, 3):
            raise ValueError(f"inertia must be 3x3, got shape {J.shape}")
        if not np.all(np.isfinite(J)):
            raise ValueError("inertia has non-finite entries")
        if not np.allclose(J, J.T, rtol=0.0, atol=1e-12 * np.abs(J).max()):
            raise ValueError("inertia must be symmetric")
        try:
            np.linalg.cholesky(J)
        except np.linalg.LinAlgError:
            raise ValueError("inertia must be positive definite") from None
        if not self.g_mag > 0:
            raise ValueError("g_mag must be positive")
        if not self.zeta_min > 0:
            raise ValueError("zeta_min must be positive")
        if self.zeta_max is not None and self.zeta_max <= self.zeta_min:
            raise ValueError("zeta_max must exceed zeta_min")
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "J_inv", np.linalg.inv(J))

    @property
    def gravity(self) -> NDArray[np.float64]:
        return np.array([0.0, 0.0, self.g_mag])


def _disturbance_or_zero(w: DisturbanceSample | None, batch_shape) -> DisturbanceSample:
    return DisturbanceSample.zero(batch_shape) if w is None else w


def rhs(
    x: ArrayLike,
    u: ArrayLike,
    w: DisturbanceSample | None = None,
    p: VehicleParams | None = None,
) -> NDArray[np.float64]:
    """Time derivative of the extended state.

    Returns an array with the same layout as ``x``. Raises
    :class:`~quadfl.math_core.SingularityError` at pitch = +-pi/2.
    """
    p = p or VehicleParams()
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    w = _disturbance_or_zero(w, x.shape[:-1])

    theta = x[..., TH_SL]
    omega = x[..., W_SL]
    zeta = x[..., ZETA]

    R = rot_body_to_inertial(theta)
    thrust = R[..., :, 2] * zeta[..., None]

    xdot = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (N_STATE,)))
    xdot[..., R_SL] = x[..., V_SL]
    xdot[..., V_SL] = thrust - p.gravity + w.a_d
    xdot[..., TH_SL] = np.einsum("...ij,...j->...i", att_kinematics(theta), omega)
    xdot[..., W_SL] = u[..., 1:4] - gyroscopic(omega, p.J, p.J_inv) + w.d
    xdot[..., ZETA] = x[..., CHI]
    xdot[..., CHI] = u[..., 0]
    return xdot


def hover_trim(
    p: VehicleParams | None = None,
    r0: ArrayLike = (0.0, 0.0, 0.0),
    psi0: float = 0.0,
) -> tuple[ExtendedState, CommandBar]:
    """Equilibrium at position ``r0`` and heading ``psi0``: level attitude, thrust = g."""
    p = p or VehicleParams()
    state = ExtendedState(
        r=np.asarray(r0, dtype=np.float64).copy(),
        v=np.zeros(3),
        theta=np.array([0.0, 0.0, float(psi0)]),
        omega_b=np.zeros(3),
        zeta=p.g_mag,
        chi=0.0,
    )
    return state, CommandBar(0.0, 0.0, 0.0, 0.0)
