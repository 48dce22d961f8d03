"""Pole placement and references for the decoupled integrator chains.

After linearization each position axis is a 4th-order chain ``r'''' = v_r`` and
the heading a 2nd-order chain ``psi'' = v_psi``. All closed-loop poles are
placed at ``-lambda`` (binomial gains).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .fl_transform import Z_PSI, Z_ETA
from .math_core import wrap_angle

REF_COLUMNS = 18  # r..r'''' (5x3) then psi, psi', psi''


def chain_gains(order: int, lam: float) -> list[float]:
    """Gains placing every pole of an ``order``-integrator chain at ``-lam``.

    Coefficients of ``(s + lam)**order`` without the leading one, lowest
    derivative first: ``chain_gains(4, 1) == [1, 4, 6, 4]``.
    """
    if order not in (2, 4):
        raise ValueError(f"unsupported chain order {order}; expected 2 or 4")
    if not lam > 0:
        raise ValueError("pole magnitude must be positive")
    return [math.comb(order, i) * lam ** (order - i) for i in range(order)]


def companion(gains: ArrayLike) -> NDArray[np.float64]:
    """Closed-loop matrix of an integrator chain under ``u = -sum(k_i x_i)``."""
    k = np.asarray(gains, dtype=np.float64)
    n = k.size
    A = np.eye(n, k=1)
    A[-1, :] = -k
    return A


@dataclass(frozen=True)
class GainSet:
    lambda_pos: float = 2.0
    lambda_psi: float = 3.0
    k_pos: tuple[float, ...] = field(init=False)
    k_psi: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "k_pos", tuple(chain_gains(4, self.lambda_pos)))
        object.__setattr__(self, "k_psi", tuple(chain_gains(2, self.lambda_psi)))

    def to_array(self) -> NDArray[np.float64]:
        return np.array(self.k_pos + self.k_psi, dtype=np.float64)


@dataclass(frozen=True)
class ReferencePoint:
    """Reference outputs with their derivatives.

    ``r`` has shape ``(..., 5, 3)``: position then derivatives up to snap.
    ``psi`` has shape ``(..., 3)``: heading, rate, acceleration.
    """

    t: NDArray[np.float64]
    r: NDArray[np.float64]
    psi: NDArray[np.float64]

    def to_table(self) -> NDArray[np.float64]:
        r = self.r.reshape(self.r.shape[:-2] + (15,))
        return np.concatenate([r, self.psi], axis=-1)

    def flat(self) -> NDArray[np.float64]:
        """Reference expressed in flat-state coordinates (snap dropped)."""
        return np.concatenate(
            [self.r[..., :4, :].reshape(self.r.shape[:-2] + (12,)), self.psi[..., :2]], -1
        )


def tracking_command(z: ArrayLike, ref: ReferencePoint, gains: GainSet) -> NDArray[np.float64]:
    """Virtual command ``[v_r, v_psi]``: feedforward plus state-error feedback.

    The heading error is wrapped to (-pi, pi] before it is fed back.
    """
    z = np.asarray(z, dtype=np.float64)
    zr = ref.flat()
    err = zr - z
    err[..., Z_PSI] = wrap_angle(err[..., Z_PSI])
    k = np.asarray(gains.k_pos)
    e_pos = err[..., :12].reshape(err.shape[:-1] + (4, 3))
    v_r = ref.r[..., 4, :] + np.einsum("i,...ij->...j", k, e_pos)
    kp = gains.k_psi
    v_psi = ref.psi[..., 2] + kp[0] * err[..., Z_PSI] + kp[1] * err[..., Z_ETA]
    return np.concatenate([v_r, v_psi[..., None]], axis=-1)


# -- references --------------------------------------------------------------

class Reference:
    def evaluate(self, t: ArrayLike) -> ReferencePoint:
        raise NotImplementedError


@dataclass(frozen=True)
class HoverReference(Reference):
    r0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    psi0: float = 0.0

    def evaluate(self, t):
        t = np.asarray(t, dtype=np.float64)
        r = np.zeros(t.shape + (5, 3))
        r[..., 0, :] = self.r0
        psi = np.zeros(t.shape + (3,))
        psi[..., 0] = self.psi0
        return ReferencePoint(t, r, psi)


@dataclass(frozen=True)
class CircleReference(Reference):
    """Horizontal circle ``center + radius (cos wt, sin wt, 0)`` with a linear heading ramp."""

    radius: float = 2.0
    rate: float = 0.5
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    psi0: float = 0.0
    yaw_rate: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("circle radius must be positive")
        if not self.rate > 0:
            raise ValueError("circle angular rate must be positive")

    def evaluate(self, t):
        t = np.asarray(t, dtype=np.float64)
        w, R = self.rate, self.radius
        c, s = np.cos(w * t), np.sin(w * t)
        r = np.zeros(t.shape + (5, 3))
        # d^k/dt^k (cos, sin) cycles through (c,s), (-s,c), (-c,-s), (s,-c)
        cyc = [(c, s), (-s, c), (-c, -s), (s, -c)]
        for k in range(5):
            cx, cy = cyc[k % 4]
            r[..., k, 0] = R * w**k * cx
            r[..., k, 1] = R * w**k * cy
        r[..., 0, :] += self.center
        psi = np.zeros(t.shape + (3,))
        psi[..., 0] = self.psi0 + self.yaw_rate * t
        psi[..., 1] = self.yaw_rate
        return ReferencePoint(t, r, psi)


# s(tau) = 126 tau^5 - 420 tau^6 + 540 tau^7 - 315 tau^8 + 70 tau^9:
# s(0)=0, s(1)=1, derivatives 1..4 vanish at both ends.
_BLEND = np.polynomial.Polynomial([0, 0, 0, 0, 0, 126, -420, 540, -315, 70])
_BLEND_D = [_BLEND.deriv(k) for k in range(5)]


@dataclass(frozen=True)
class WaypointReference(Reference):
    """Rest-to-rest polynomial segments through waypoints.

    Each segment blends with a degree-9 polynomial whose first four
    derivatives vanish at both ends, so position is continuous through snap
    and heading through its second derivative at every junction.
    """

    waypoints: tuple[tuple[float, float, float], ...]
    headings: tuple[float, ...]
    segment_time: float = 4.0

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError("need at least two waypoints")
        if len(self.headings) != len(self.waypoints):
            raise ValueError("one heading per waypoint required")
        if not self.segment_time > 0:
            raise ValueError("segment_time must be positive")

    def evaluate(self, t):
        t = np.asarray(t, dtype=np.float64)
        P = np.asarray(self.waypoints, dtype=np.float64)
        H = np.asarray(self.headings, dtype=np.float64)
        T = self.segment_time
        nseg = len(P) - 1
        idx = np.clip(np.floor(t / T).astype(int), 0, nseg - 1)
        tau = np.clip(t / T - idx, 0.0, 1.0)
        tau = np.where(t < 0, 0.0, tau)
        tau = np.where(t >= nseg * T, 1.0, tau)
        dP = P[idx + 1] - P[idx]
        dH = H[idx + 1] - H[idx]
        r = np.zeros(t.shape + (5, 3))
        psi = np.zeros(t.shape + (3,))
        for k in range(5):
            sk = _BLEND_D[k](tau) / T**k
            r[..., k, :] = dP * sk[..., None]
            if k < 3:
                psi[..., k] = dH * sk
        r[..., 0, :] += P[idx]
        psi[..., 0] += H[idx]
        return ReferencePoint(t, r, psi)


def reference(kind: str, params: dict, t: ArrayLike) -> ReferencePoint:
    """Evaluate a named reference (``hover``, ``circle`` or ``waypoint-smooth``) at ``t``."""
    return make_reference(kind, params).evaluate(t)


def make_reference(kind: str, params: dict) -> Reference:
    if kind == "hover":
        return HoverReference(**params)
    if kind == "circle":
        return CircleReference(**params)
    if kind in ("waypoint-smooth", "waypoints"):
        params = dict(params)
        params["waypoints"] = tuple(tuple(map(float, w)) for w in params["waypoints"])
        params["headings"] = tuple(map(float, params.get("headings", [0.0] * len(params["waypoints"]))))
        return WaypointReference(**params)
    raise ValueError(f"unknown reference kind {kind!r}")
