"""Property suite behind ``quadfl verify``.

Each check compares two independently computed quantities (an algebraic
identity, a finite-difference estimate, or a parallel linear simulation) and
yields one :class:`CheckResult`. Random-sample checks draw states from the
invertibility domain with a seeded generator.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Iterator

import numpy as np

from . import fl_transform as fl
from .extended_model import DisturbanceSample, VehicleParams, hover_trim, rhs
from .fl_transform import DomainError
from .linear_control import CircleReference
from .math_core import att_kinematics, rot_body_to_inertial, skew
from .simulator import (
    Pulse, Scenario, fd_derivative_check, linearization_exactness_check, simulate,
)

# Non-diagonal inertia so every gyroscopic cross term is exercised.
VERIFY_INERTIA = np.array([
    [0.0123, 0.0004, -0.0002],
    [0.0004, 0.0131, 0.0003],
    [-0.0002, 0.0003, 0.0224],
])


@dataclass
class CheckResult:
    key: str
    description: str
    status: str  # "pass", "fail" or "skipped"
    value: float | None = None
    tolerance: float | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status != "fail"

    def line(self) -> str:
        tag = {"pass": "PASS", "fail": "FAIL", "skipped": "SKIP"}[self.status]
        num = "" if self.value is None else f"  value={self.value:.3e}"
        if self.tolerance is not None:
            num += f" tol={self.tolerance:.1e}"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{tag:4s}  {self.key:26s} {self.description}{num}{extra}"

    def json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _result(key, desc, value, tol, detail="", strict_less=True) -> CheckResult:
    passed = value < tol if strict_less else value <= tol
    return CheckResult(key, desc, "pass" if passed else "fail", float(value), float(tol), detail)


def sample_domain(rng: np.random.Generator, n: int):
    """Random states, commands and disturbances inside the domain.

    Bounds: |omega_i| <= 5 rad/s, |phi|, |theta| <= 1.2 rad, zeta in [2, 20],
    |u_bar_i| <= 10, |d_i|, |a_d''_i| <= 1.
    """
    x = np.empty((n, 14))
    x[:, 0:6] = rng.uniform(-10, 10, (n, 6))
    x[:, 6:8] = rng.uniform(-1.2, 1.2, (n, 2))
    x[:, 8] = rng.uniform(-np.pi, np.pi, n)
    x[:, 9:12] = rng.uniform(-5, 5, (n, 3))
    x[:, 12] = rng.uniform(2, 20, n)
    x[:, 13] = rng.uniform(-10, 10, n)
    u = rng.uniform(-10, 10, (n, 4))
    w = DisturbanceSample(
        d=rng.uniform(-1, 1, (n, 3)),
        a_d=rng.uniform(-1, 1, (n, 3)),
        a_d_dot=rng.uniform(-1, 1, (n, 3)),
        a_d_ddot=rng.uniform(-1, 1, (n, 3)),
    )
    return x, u, w


def flat_jacobian(x, p: VehicleParams, eps: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the flat map at a single state."""
    J = np.empty((14, 14))
    for j in range(14):
        e = np.zeros(14)
        e[j] = eps
        J[:, j] = (fl.flat_state(x + e, p) - fl.flat_state(x - e, p)) / (2 * eps)
    return J


def scaled_min_singular(J: np.ndarray) -> float:
    """Smallest singular value after scaling rows then columns to unit norm."""
    J = J / np.linalg.norm(J, axis=1, keepdims=True)
    J = J / np.linalg.norm(J, axis=0, keepdims=True)
    return float(np.linalg.svd(J, compute_uv=False).min())


def excited_circle(step: float = 1e-3, duration: float = 4.0, p: VehicleParams | None = None,
                   **kw) -> Scenario:
    """Circle with a heading ramp and an initial offset, so every chain has a transient."""
    off = np.zeros(14)
    off[0:3] = [0.3, -0.2, 0.2]
    off[12] = 0.4
    return Scenario(
        duration=duration, step=step, params=p or VehicleParams(J=VERIFY_INERTIA),
        reference=CircleReference(radius=2.0, rate=0.5, yaw_rate=0.2),
        initial_offset=off, **kw,
    )


def pitch_sweep_condition(phi=0.3, psi=0.7, zeta=9.81, n=400, stop=1e-3) -> np.ndarray:
    th = np.linspace(0.0, np.pi / 2 - stop, n)
    theta = np.stack([np.full(n, phi), th, np.full(n, psi)], -1)
    return fl.decoupling_matrix(theta, np.full(n, zeta)).cond


def crossing_scenario() -> Scenario:
    """Open-loop constant lateral snap that tilts the vehicle past the domain margin."""
    p = VehicleParams()
    x0, _ = hover_trim(p)
    return Scenario(duration=6.0, step=1e-3, params=p, initial=x0.to_array(),
                    controller="open_loop", pulses=(Pulse(0.0, 6.0, (20.0, 0.0, 0.0, 0.0)),))


# -- checks ------------------------------------------------------------------

def _sample_checks(samples: int, rng, p) -> Iterator[CheckResult]:
    x, u, w = sample_domain(rng, samples)
    th = x[:, 6:9]

    A3 = att_kinematics(th)[:, 2, :]
    err = np.abs(A3 - fl.b_psi(th)).max() / max(1.0, np.abs(A3).max())
    yield _result("heading-rate-row", "b_psi equals the heading row of the Euler rate map", err, 1e-12)

    snap_f, psi_f = fl.snap_factored(x, u, w, p)
    yield _result("snap-identity", "raw CoM snap equals E u + h_r + d_r",
                  np.abs(fl.snap_raw(x, u, w, p) - snap_f).max(), 1e-9)
    yield _result("heading-accel-identity", "raw heading acceleration equals E u + h_psi + d_psi",
                  np.abs(fl.psi_ddot_raw(x, u, w, p) - psi_f).max(), 1e-9)

    Eu = np.einsum("nij,nj->ni", fl.decoupling_matrix(th, x[:, 12]).matrix, u)
    e1 = np.abs(fl.position_command_transform(x, u) - Eu[:, :3]).max()
    e2 = np.abs(u[:, 3] + fl.h_psi_star(th, u[:, 1], u[:, 2]) - Eu[:, 3]).max()
    yield _result("transformed-command", "u_r = B_r u and u4 + h_psi* equal the rows of E u",
                  max(e1, e2), 1e-12 * max(1.0, np.abs(Eu).max()), strict_less=False)

    nd = min(samples, 1000)
    det = np.linalg.det(fl.decoupling_matrix(th[:nd], x[:nd, 12]).matrix)
    yield _result("decoupling-determinant", "det E = zeta^2",
                  np.abs(det / x[:nd, 12] ** 2 - 1.0).max(), 1e-12)

    x2 = x.copy()
    x2[:, 12] *= 2.0
    w_tilt = DisturbanceSample(w.d, w.a_d, w.a_d_dot, np.zeros_like(w.a_d_ddot))
    base = fl.d_r(x, w_tilt)
    scale = np.abs(fl.d_r(x2, w_tilt) - 2.0 * base).max() / max(np.abs(base).max(), 1e-300)
    yield _result("disturbance-scaling", "tilt disturbance snap doubles with thrust", scale, 1e-10)

    v = rng.uniform(-10, 10, (samples, 4))
    ub = fl.fl_feedback(x, v, p)
    s, ps = fl.snap_factored(x, ub, None, p)
    rt = max(np.abs(s - v[:, :3]).max(), np.abs(ps - v[:, 3]).max())
    yield _result("feedback-round-trip", "E(x) u(x, v) + b(x) returns v", rt, 1e-8)

    nr = min(samples, 100)
    smin = min(scaled_min_singular(flat_jacobian(x[i], p)) for i in range(nr))
    yield CheckResult("flat-map-rank", "flat-map Jacobian has rank 14 (scaled min singular value)",
                      "pass" if smin > 1e-8 else "fail", smin, 1e-8,
                      f"{nr} states; tolerance is a lower bound")


def _simulation_checks(p) -> Iterator[CheckResult]:
    trim, ubar = hover_trim(p, (1.0, -2.0, 3.0), 1.2)
    yield _result("hover-trim", "plant derivative vanishes at hover trim",
                  np.abs(rhs(trim.to_array(), ubar.to_array(), None, p)).max(), 1e-12,
                  strict_less=False)

    tel = simulate(excited_circle(p=p))
    for k in (1, 2, 3):
        rep = fd_derivative_check(tel, k, "r")
        yield _result(f"flat-chain-order{k}", f"finite differences of r reproduce flat order {k}",
                      rep.max_residual, rep.bound, f"h={rep.h:g}", strict_less=False)
    rep = fd_derivative_check(tel, 4, "r", stride=20)
    yield _result("flat-chain-order4", "finite differences of r reproduce the plant snap",
                  rep.max_residual, rep.bound, f"h={rep.h:g}", strict_less=False)
    rep = fd_derivative_check(tel, 1, "psi")
    yield _result("heading-rate-fd", "finite differences of psi reproduce eta",
                  rep.max_residual, rep.bound, f"h={rep.h:g}", strict_less=False)
    rep = fd_derivative_check(tel, 1, "eta")
    yield _result("heading-accel-fd", "finite differences of eta reproduce b_psi u + h_psi",
                  rep.max_residual, rep.bound, f"h={rep.h:g}", strict_less=False)

    res = [kinematic_residual(excited_circle(step=h, duration=2.0, p=p)) for h in (2e-3, 1e-3)]
    ratio = res[0] / res[1]
    yield CheckResult("kinematic-consistency", "forward difference of R matches R S(omega) at first order",
                      "pass" if 1.6 < ratio < 2.4 else "fail", ratio, 2.0,
                      f"residual {res[1]:.2e} at h=1e-3; value is the halving ratio")

    circle = Scenario(params=p, reference=CircleReference(radius=2.0, rate=0.5))
    rep = linearization_exactness_check(circle)
    yield _result("linearization-exactness", "closed loop matches integrator chains under identical v",
                  rep.worst, 1e-6)

    x0, _ = hover_trim(p)
    pulse = Scenario(duration=3.0, params=p, initial=x0.to_array(), controller="open_loop",
                     pulses=(Pulse(0.5, 1.0, (1.0, 0.0, 0.0, 0.0)),))
    rep = linearization_exactness_check(pulse)
    other = np.abs(rep.telemetry.z[:, [1, 2, 12]] - rep.telemetry.z[0, [1, 2, 12]]).max()
    yield _result("channel-decoupling", "x-snap pulse leaves y, z and psi at rest", other, 1e-8)

    cond = pitch_sweep_condition()
    yield CheckResult("condition-growth", "cond(E) increases strictly as pitch approaches pi/2",
                      "pass" if np.all(np.diff(cond) > 0) else "fail", float(cond[-1]), None,
                      "value is cond(E) at the end of the sweep")

    try:
        simulate(crossing_scenario())
    except DomainError as exc:
        tel = getattr(exc, "telemetry", None)
        finite = tel is None or bool(np.all(np.isfinite(tel.table())))
        yield CheckResult("domain-guard", "domain-crossing run aborts with finite telemetry",
                          "pass" if finite else "fail", detail=str(exc).split(";")[0])
    else:
        yield CheckResult("domain-guard", "domain-crossing run aborts with finite telemetry",
                          "fail", detail="scenario completed without leaving the domain")


def kinematic_residual(sc: Scenario) -> float:
    """Max forward-difference error of ``R' = R S(omega)`` along a simulated run."""
    tel = simulate(sc)
    R = rot_body_to_inertial(tel.x[:, 6:9])
    fd = (R[1:] - R[:-1]) / sc.step
    return float(np.abs(fd - R[:-1] @ skew(tel.x[:-1, 9:12])).max())


def run_suite(samples: int = 10_000, seed: int = 0,
              on_result: Callable[[CheckResult], None] | None = None) -> list[CheckResult]:
    """Run every check; ``samples=0`` skips the random-sample identities."""
    p = VehicleParams(J=VERIFY_INERTIA)
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    def emit(r):
        results.append(r)
        if on_result:
            on_result(r)

    if samples > 0:
        for r in _sample_checks(samples, rng, p):
            emit(r)
    else:
        for key in ("heading-rate-row", "snap-identity", "heading-accel-identity",
                    "transformed-command", "decoupling-determinant", "disturbance-scaling",
                    "feedback-round-trip", "flat-map-rank"):
            emit(CheckResult(key, "random-sample identity", "skipped", detail="samples=0"))
    for r in _simulation_checks(p):
        emit(r)
    return results
