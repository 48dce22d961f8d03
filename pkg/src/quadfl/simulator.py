"""Fixed-step closed-loop simulation and the numerical verification oracles.

The outer linear controller runs either continuously (re-evaluated at every
RK4 stage) or sampled (evaluated at the step start and held). The
linearizing feedback itself is always evaluated at every stage, so under
zero disturbance the outputs obey ``[r''''; psi''] = v`` exactly between
grid points.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from . import kernels
from .extended_model import N_STATE, DisturbanceSample, VehicleParams, ZETA
from .fl_transform import (
    DEFAULT_TILT_MARGIN, Z_ETA, Z_PSI, DomainError, DomainMargins,
    decoupling_matrix, flat_state, in_domain, psi_ddot_raw, snap_raw, state_from_flat,
)
from .linear_control import GainSet, HoverReference, Reference, ReferencePoint
from .math_core import wrap_angle

log = logging.getLogger(__name__)

TELEMETRY_VERSION = 1


class IntegrationError(RuntimeError):
    """The integrator produced a non-finite state."""


class DomainExitError(DomainError):
    """The closed loop left the invertibility domain; carries the partial telemetry."""

    def __init__(self, message: str, telemetry: "Telemetry | None" = None,
                 t: float | None = None, state: NDArray | None = None):
        super().__init__(message)
        self.telemetry = telemetry
        self.t = t
        self.state = state


# -- disturbances ------------------------------------------------------------

@dataclass(frozen=True)
class Signal:
    """Deterministic scalar signal with closed-form first and second derivatives.

    ``kind`` is ``zero``, ``constant`` (uses ``value``) or ``sinusoid``
    (``amplitude * sin(frequency * t + phase)``).
    """

    kind: str = "zero"
    value: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "sinusoid"):
            raise ValueError(f"unknown signal kind {self.kind!r}")

    @property
    def is_zero(self) -> bool:
        return (self.kind == "zero"
                or (self.kind == "constant" and self.value == 0.0)
                or (self.kind == "sinusoid" and self.amplitude == 0.0))

    def eval(self, t) -> tuple[NDArray, NDArray, NDArray]:
        t = np.asarray(t, dtype=np.float64)
        zero = np.zeros_like(t)
        if self.kind == "constant":
            return zero + self.value, zero, zero.copy()
        if self.kind == "sinusoid":
            arg = self.frequency * t + self.phase
            a, w = self.amplitude, self.frequency
            return a * np.sin(arg), a * w * np.cos(arg), -a * w**2 * np.sin(arg)
        return zero, zero.copy(), zero.copy()


def _zero3():
    return (Signal(), Signal(), Signal())


@dataclass(frozen=True)
class DisturbanceSpec:
    d: tuple[Signal, Signal, Signal] = field(default_factory=_zero3)
    a_d: tuple[Signal, Signal, Signal] = field(default_factory=_zero3)

    @property
    def is_zero(self) -> bool:
        return all(s.is_zero for s in self.d + self.a_d)


def disturbance_eval(spec: DisturbanceSpec, t) -> DisturbanceSample:
    """Disturbance sample(s) at ``t`` with analytically exact derivatives."""
    d = np.stack([s.eval(t)[0] for s in spec.d], -1)
    ad = [s.eval(t) for s in spec.a_d]
    return DisturbanceSample(
        d=d,
        a_d=np.stack([c[0] for c in ad], -1),
        a_d_dot=np.stack([c[1] for c in ad], -1),
        a_d_ddot=np.stack([c[2] for c in ad], -1),
    )


# -- integration -------------------------------------------------------------

def rk4_step(state, t: float, step: float, f: Callable) -> NDArray[np.float64]:
    """One classical Runge-Kutta step of ``x' = f(t, x)``."""
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.asarray(state, dtype=np.float64)
    h = step
    k1 = np.asarray(f(t, x))
    k2 = np.asarray(f(t + h / 2, x + h / 2 * k1))
    k3 = np.asarray(f(t + h / 2, x + h / 2 * k2))
    k4 = np.asarray(f(t + h, x + h * k3))
    out = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite state after step at t={t:.6g}")
    return out


@dataclass(frozen=True)
class Pulse:
    """Piecewise-constant virtual command active on ``[start, stop)``."""

    start: float
    stop: float
    v: tuple[float, float, float, float]


@dataclass(frozen=True)
class Scenario:
    """Everything needed for one closed-loop run.

    ``initial=None`` starts on the reference: the state is the inverse flat
    transform of the reference at ``t=0`` plus ``initial_offset`` (given in
    flat coordinates ``[r, v, a, s, psi, eta]``).
    ``controller`` is ``tracking`` or ``open_loop``; open loop applies
    ``pulses`` as a held virtual command.
    """

    duration: float = 10.0
    step: float = 1e-3
    params: VehicleParams = field(default_factory=VehicleParams)
    reference: Reference = field(default_factory=HoverReference)
    gains: GainSet = field(default_factory=GainSet)
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    initial: NDArray[np.float64] | None = None
    initial_offset: NDArray[np.float64] | None = None
    controller: str = "tracking"
    sampling: str = "continuous"
    pulses: tuple[Pulse, ...] = ()
    tilt_margin: float = DEFAULT_TILT_MARGIN
    residuals: bool = True
    name: str = "scenario"

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.duration >= self.step:
            raise ValueError("duration must be at least one step")
        if self.controller not in ("tracking", "open_loop"):
            raise ValueError(f"unknown controller mode {self.controller!r}")
        if self.sampling not in ("continuous", "sampled"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        if self.initial is not None and np.shape(self.initial) != (N_STATE,):
            raise ValueError("initial state must have 14 components")

    @property
    def nsteps(self) -> int:
        return int(round(self.duration / self.step))

    @property
    def margins(self) -> DomainMargins:
        return DomainMargins.from_params(self.params, self.tilt_margin)

    def initial_state(self) -> NDArray[np.float64]:
        if self.initial is not None:
            x0 = np.asarray(self.initial, dtype=np.float64).copy()
        else:
            z0 = self.reference.evaluate(0.0).flat()
            if self.initial_offset is not None:
                z0 = z0 + np.asarray(self.initial_offset, dtype=np.float64)
            x0 = state_from_flat(z0, self.params)
        return x0


@dataclass
class Telemetry:
    """Per-step record on a uniform grid ``t = k * dt``.

    ``snap`` and ``psi_ddot`` are the plant output derivatives computed from
    the raw angular acceleration; the residuals subtract the virtual command.
    """

    t: NDArray[np.float64]
    x: NDArray[np.float64]
    z: NDArray[np.float64]
    u: NDArray[np.float64]
    v: NDArray[np.float64]
    ref: NDArray[np.float64]
    in_domain: NDArray[np.bool_]
    cond_E: NDArray[np.float64]
    snap: NDArray[np.float64]
    psi_ddot: NDArray[np.float64]
    snap_residual: NDArray[np.float64]
    psi_residual: NDArray[np.float64]
    dt: float
    backend: str = kernels.BACKEND
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def tracking_error(self) -> NDArray[np.float64]:
        return np.linalg.norm(self.x[:, 0:3] - self.ref[:, 0:3], axis=1)

    def columns(self) -> list[str]:
        ax = ("x", "y", "z")
        cols = ["t"]
        cols += [f"r_{a}" for a in ax] + [f"v_{a}" for a in ax]
        cols += ["phi", "theta", "psi"] + [f"omega_{a}" for a in ax] + ["zeta", "chi"]
        for name in ("r", "v", "a", "s"):
            cols += [f"z_{name}_{a}" for a in ax]
        cols += ["z_psi", "z_eta"]
        cols += ["u1_ddot", "u2", "u3", "u4"]
        cols += ["v_r_x", "v_r_y", "v_r_z", "v_psi"]
        for name in ("r", "v", "a", "j", "s"):
            cols += [f"ref_{name}_{a}" for a in ax]
        cols += ["ref_psi", "ref_psi_dot", "ref_psi_ddot"]
        cols += ["in_domain", "cond_E"]
        cols += [f"snap_{a}" for a in ax] + ["psi_ddot"]
        cols += [f"res_snap_{a}" for a in ax] + ["res_psi"]
        return cols

    def table(self) -> NDArray[np.float64]:
        x = self.x.copy()
        x[:, 8] = wrap_angle(x[:, 8])
        return np.column_stack([
            self.t, x, self.z, self.u, self.v, self.ref,
            self.in_domain.astype(float), self.cond_E,
            self.snap, self.psi_ddot, self.snap_residual, self.psi_residual,
        ])

    def to_csv(self, path) -> None:
        """Write the telemetry; the Euler ``psi`` column is wrapped, ``z_psi`` is not."""
        header = ",".join(self.columns())
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# quadfl-telemetry v{TELEMETRY_VERSION}\n")
            fh.write(header + "\n")
            np.savetxt(fh, self.table(), delimiter=",", fmt="%.17g")


def _program_table(sc: Scenario) -> NDArray[np.float64]:
    n = sc.nsteps
    prog = np.zeros((n + 1, 4))
    for p in sc.pulses:
        i0 = int(round(p.start / sc.step))
        i1 = int(round(p.stop / sc.step))
        prog[max(i0, 0):max(min(i1, n + 1), 0)] += np.asarray(p.v, dtype=np.float64)
    return prog


def _assemble(sc: Scenario, X, U, V, refpt: ReferencePoint, w: DisturbanceSample,
              backend: str) -> Telemetry:
    n = len(X)
    t = np.arange(n) * sc.step
    p = sc.params
    z = flat_state(X, p)
    E = decoupling_matrix(X[:, 6:9], X[:, ZETA]).matrix
    snap = snap_raw(X, U, w, p)
    psi_dd = psi_ddot_raw(X, U, w, p)
    return Telemetry(
        t=t, x=X, z=z, u=U, v=V, ref=refpt.to_table()[:n],
        in_domain=in_domain(X, sc.margins),
        cond_E=np.linalg.cond(E),
        snap=snap, psi_ddot=psi_dd,
        snap_residual=snap - V[:, :3], psi_residual=psi_dd - V[:, 3],
        dt=sc.step, backend=backend,
    )


def _saturation_warnings(sc: Scenario, tel: Telemetry) -> list[str]:
    p = sc.params
    out = []
    if p.zeta_max is not None and np.any(tel.x[:, ZETA] > p.zeta_max):
        out.append(f"thrust above zeta_max={p.zeta_max:g} on {np.sum(tel.x[:, ZETA] > p.zeta_max)} steps")
    if p.omega_dot_max is not None:
        over = np.abs(tel.u[:, 1:4]).max(axis=1) > p.omega_dot_max
        if np.any(over):
            out.append(f"angular acceleration command above {p.omega_dot_max:g} on {over.sum()} steps")
    if p.u1_ddot_max is not None:
        over = np.abs(tel.u[:, 0]) > p.u1_ddot_max
        if np.any(over):
            out.append(f"thrust second derivative above {p.u1_ddot_max:g} on {over.sum()} steps")
    for msg in out:
        log.warning(msg)
    return out


def simulate(scenario: Scenario, backend: str | None = None) -> Telemetry:
    """Integrate the closed loop over the scenario horizon.

    Raises:
        DomainExitError: the initial state is outside the domain (refused
            before integration) or the trajectory left it; the partial
            telemetry up to the last valid step is attached.
        IntegrationError: a non-finite state was produced.
    """
    sc = scenario
    n = sc.nsteps
    x0 = sc.initial_state()
    if not in_domain(x0, sc.margins):
        raise DomainExitError(
            f"initial state outside domain (zeta={x0[ZETA]:.4g}, phi={x0[6]:.4g}, "
            f"theta={x0[7]:.4g}); refusing to integrate", t=0.0, state=x0,
        )
    t_half = np.arange(2 * n + 1) * (sc.step / 2.0)
    tracking = sc.controller == "tracking"
    refpt_half = sc.reference.evaluate(t_half)
    ref_table = refpt_half.to_table()
    w_half = disturbance_eval(sc.disturbance, t_half)
    dist_table = w_half.to_array()
    params = kernels.pack_params(sc.params, np.pi / 2 - sc.tilt_margin)
    status, n_valid, X, U, V, xbad = kernels.run_closed_loop(
        x0, sc.step, n, ref_table, dist_table, _program_table(sc),
        sc.gains.to_array(), params, tracking=tracking,
        sampled=sc.sampling == "sampled", backend=backend,
    )
    used = backend or kernels.BACKEND
    grid = slice(0, 2 * n_valid - 1 if n_valid else 0, 2)
    refpt = ReferencePoint(refpt_half.t[grid], refpt_half.r[grid], refpt_half.psi[grid])
    w = DisturbanceSample(*(a[grid] for a in (w_half.d, w_half.a_d, w_half.a_d_dot, w_half.a_d_ddot)))
    tel = _assemble(sc, X, U, V, refpt, w, used) if n_valid else None
    if tel is not None:
        tel.warnings = _saturation_warnings(sc, tel)
    if status == kernels.DOMAIN_EXIT:
        t_abort = n_valid * sc.step
        raise DomainExitError(
            f"domain exit near t={t_abort:.6g} s (zeta={xbad[ZETA]:.4g}, "
            f"phi={xbad[6]:.4g}, theta={xbad[7]:.4g}); simulation aborted",
            telemetry=tel, t=t_abort, state=xbad,
        )
    if status == kernels.NON_FINITE:
        raise IntegrationError(f"non-finite state at t={n_valid * sc.step:.6g} s")
    return tel


# -- verification oracles ----------------------------------------------------

def chain_transition(h: float) -> tuple[NDArray, NDArray]:
    """Exact zero-order-hold discretisation of the decoupled integrator chains."""
    Phi = np.eye(14)
    Gam = np.zeros((14, 4))
    for ax in range(3):
        idx = [ax, 3 + ax, 6 + ax, 9 + ax]
        for i in range(4):
            for j in range(i + 1, 4):
                Phi[idx[i], idx[j]] = h ** (j - i) / math.factorial(j - i)
            Gam[idx[i], ax] = h ** (4 - i) / math.factorial(4 - i)
    Phi[Z_PSI, Z_ETA] = h
    Gam[Z_PSI, 3] = h**2 / 2
    Gam[Z_ETA, 3] = h
    return Phi, Gam


def propagate_chains(z0, v, h: float) -> NDArray[np.float64]:
    """Integrator-chain trajectory driven by the held commands ``v[k]``."""
    Phi, Gam = chain_transition(h)
    z = np.empty((len(v) + 1, 14))
    z[0] = z0
    for k in range(len(v)):
        z[k + 1] = Phi @ z[k] + Gam @ v[k]
    return z


@dataclass
class ExactnessReport:
    channels: tuple[str, ...]
    rms: NDArray[np.float64]
    max: NDArray[np.float64]
    max_flat: float
    dt: float
    telemetry: Telemetry = field(repr=False)
    chain: NDArray[np.float64] = field(repr=False)

    @property
    def worst(self) -> float:
        return float(np.max(self.max))


def linearization_exactness_check(scenario: Scenario, backend: str | None = None) -> ExactnessReport:
    """Compare the nonlinear closed loop against pure integrator chains.

    The scenario is run with a sampled (held) virtual command so both
    systems see the identical piecewise-constant ``v``; any remaining
    deviation is integration error of the nonlinear plant.
    """
    if not scenario.disturbance.is_zero:
        raise ValueError("linearization exactness requires a zero-disturbance scenario")
    sc = replace(scenario, sampling="sampled")
    tel = simulate(sc, backend=backend)
    chain = propagate_chains(tel.z[0], tel.v[:-1], sc.step)
    dev = tel.z - chain
    out = dev[:, [0, 1, 2, Z_PSI]]
    return ExactnessReport(
        channels=("r_x", "r_y", "r_z", "psi"),
        rms=np.sqrt(np.mean(out**2, axis=0)),
        max=np.max(np.abs(out), axis=0),
        max_flat=float(np.max(np.abs(dev))),
        dt=sc.step, telemetry=tel, chain=chain,
    )


# central stencils (offsets -2..2), all second-order accurate
_STENCILS = {
    1: np.array([0.0, -0.5, 0.0, 0.5, 0.0]),
    2: np.array([0.0, 1.0, -2.0, 1.0, 0.0]),
    3: np.array([-0.5, 1.0, 0.0, -1.0, 0.5]),
    4: np.array([1.0, -4.0, 6.0, -4.0, 1.0]),
}
# leading truncation coefficient: residual ~ C_k h^2 f^(k+2)
_TRUNC = {1: 1 / 6, 2: 1 / 12, 3: 1 / 4, 4: 1 / 6}


def central_difference(f, k: int, h: float, stride: int = 1) -> NDArray[np.float64]:
    """k-th derivative by a second-order central stencil of spacing ``stride`` samples.

    Output index ``i`` corresponds to input index ``i + 2*stride``.
    """
    f = np.asarray(f, dtype=np.float64)
    m = stride
    n = len(f) - 4 * m
    if n <= 0:
        raise ValueError("insufficient samples for the finite-difference stencil")
    c = _STENCILS[k]
    out = np.zeros((n,) + f.shape[1:])
    for j, cj in enumerate(c):
        if cj:
            out = out + cj * f[j * m: j * m + n]
    return out / (m * h) ** k


@dataclass(frozen=True)
class FDReport:
    channel: str
    order: int
    h: float
    max_residual: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.bound


def _fd_channels(tel: Telemetry, channel: str, k: int):
    axes = {"r_x": [0], "r_y": [1], "r_z": [2], "r": [0, 1, 2]}
    if channel in axes:
        if not 1 <= k <= 4:
            raise ValueError("position chain supports orders 1..4")
        cols = axes[channel]
        signal = tel.z[:, cols]
        analytic = [tel.z[:, 3:6], tel.z[:, 6:9], tel.z[:, 9:12], tel.snap][k - 1][:, cols]
        return signal, analytic
    if channel == "psi":
        if k not in (1, 2):
            raise ValueError("heading chain supports orders 1..2")
        signal = tel.z[:, [Z_PSI]]
        analytic = (tel.z[:, [Z_ETA]] if k == 1 else tel.psi_ddot[:, None])
        return signal, analytic
    if channel == "eta":
        if k != 1:
            raise ValueError("eta channel supports order 1 only")
        return tel.z[:, [Z_ETA]], tel.psi_ddot[:, None]
    raise ValueError(f"unknown channel {channel!r}")


def fd_derivative_check(tel: Telemetry, k: int, channel: str = "r", stride: int = 1,
                        safety: float = 10.0) -> FDReport:
    """Central finite differences of a recorded output against its analytic derivative.

    Position derivatives are compared with the disturbance-free flat state,
    so orders 2 and 3 are meaningful only for runs with ``a_d = 0``.
    The bound combines the stencil truncation estimate ``C_k h^2 |f^(k+2)|``
    (the higher derivative taken from differencing the analytic channel)
    and a rounding term, times ``safety``.

    Raises:
        ValueError: unknown channel/order or too few samples.
    """
    if k not in _STENCILS:
        raise ValueError("order must be 1..4")
    signal, analytic = _fd_channels(tel, channel, k)
    m = stride
    h = tel.dt * m
    fd = central_difference(signal, k, tel.dt, m)
    ref = analytic[2 * m: 2 * m + len(fd)]
    resid = np.abs(fd - ref)
    higher = np.abs(central_difference(analytic, 2, tel.dt, m)).max() if len(analytic) > 4 * m else 0.0
    trunc = _TRUNC[k] * h**2 * higher
    rounding = np.finfo(float).eps * np.abs(signal).max() * np.abs(_STENCILS[k]).sum() / h**k
    return FDReport(channel, k, h, float(resid.max()), float(safety * (trunc + rounding)))
