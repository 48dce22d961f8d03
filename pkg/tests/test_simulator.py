"""Integrator, scenarios, telemetry and simulation oracles."""

import csv
import math

import numpy as np
import pytest

from quadfl.extended_model import VehicleParams, hover_trim, rhs
from quadfl.linear_control import CircleReference, HoverReference
from quadfl.simulator import (
    DisturbanceSpec,
    DomainExitError,
    IntegrationError,
    Pulse,
    Scenario,
    Signal,
    central_difference,
    chain_transition,
    disturbance_eval,
    fd_derivative_check,
    linearization_exactness_check,
    propagate_chains,
    rk4_step,
    simulate,
)
from quadfl.verification import crossing_scenario, excited_circle


# -- integrator -----------------------------------------------------------

def test_rk4_scalar_decay():
    x = rk4_step(np.array([1.0]), 0.0, 0.1, lambda t, x: -x)
    assert x[0] == pytest.approx(0.9048375, abs=1e-7)
    assert abs(x[0] - math.exp(-0.1)) < 1e-6


def test_rk4_constant_state():
    x0 = np.array([1.0, -2.0])
    np.testing.assert_array_equal(rk4_step(x0, 0.0, 0.3, lambda t, x: np.zeros(2)), x0)


def test_rk4_order_four():
    A = np.array([[0.0, 1.0], [-4.0, -0.4]])
    w, V = np.linalg.eig(A)
    exact = (V @ np.diag(np.exp(2.0 * w)) @ np.linalg.solve(V, [1.0, 0.0])).real
    hs = np.array([0.1, 0.05, 0.025, 0.0125])
    errs = []
    for h in hs:
        x = np.array([1.0, 0.0])
        for k in range(int(round(2.0 / h))):
            x = rk4_step(x, k * h, h, lambda t, y: A @ y)
        errs.append(np.abs(x - exact).max())
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope == pytest.approx(4.0, abs=0.1)


def test_rk4_rejects_non_finite():
    with pytest.raises(IntegrationError):
        rk4_step(np.array([1.0]), 0.0, 1.0, lambda t, x: np.array([np.inf]))


def test_isotropic_spin_keeps_rate_norm():
    p = VehicleParams(J=np.eye(3) * 0.02)
    x = hover_trim(p)[0].to_array()
    x[9:12] = [0.4, -0.3, 0.8]
    x[6:8] = [0.2, 0.1]
    n0 = np.linalg.norm(x[9:12])
    for k in range(2000):
        x = rk4_step(x, k * 5e-3, 5e-3, lambda t, y: rhs(y, np.zeros(4), None, p))
    assert abs(np.linalg.norm(x[9:12]) - n0) < 1e-8


# -- disturbances -----------------------------------------------------------

def test_zero_disturbance():
    w = disturbance_eval(DisturbanceSpec(), np.linspace(0, 1, 5))
    assert np.all(w.to_array() == 0)
    assert DisturbanceSpec().is_zero


def test_sinusoid_derivatives():
    a, om, ph = 0.7, 2.5, 0.3
    sig = Signal(kind="sinusoid", amplitude=a, frequency=om, phase=ph)
    spec = DisturbanceSpec(a_d=(sig, Signal(), Signal()))
    t = np.linspace(0, 3, 11)
    w = disturbance_eval(spec, t)
    np.testing.assert_allclose(w.a_d[:, 0], a * np.sin(om * t + ph))
    np.testing.assert_allclose(w.a_d_dot[:, 0], a * om * np.cos(om * t + ph))
    np.testing.assert_allclose(w.a_d_ddot[:, 0], -a * om**2 * np.sin(om * t + ph))


def test_constant_bias_has_zero_derivatives():
    spec = DisturbanceSpec(d=(Signal(kind="constant", value=0.2), Signal(), Signal()))
    w = disturbance_eval(spec, np.linspace(0, 1, 4))
    np.testing.assert_array_equal(w.d[:, 0], 0.2)
    assert not spec.is_zero


def test_signal_rejects_unknown_kind():
    with pytest.raises(ValueError):
        Signal(kind="noise")


# -- scenarios and closed loop -------------------------------------------

def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(step=0.0)
    with pytest.raises(ValueError):
        Scenario(controller="pid")
    with pytest.raises(ValueError):
        Scenario(initial=np.zeros(3))


def test_hover_stays_at_trim():
    p = VehicleParams()
    x0 = hover_trim(p, (0, 0, 1))[0].to_array()
    tel = simulate(Scenario(initial=x0, reference=HoverReference((0, 0, 1))))
    assert len(tel) == 10001
    assert np.abs(tel.x - x0).max() < 1e-9


def test_refuses_zero_thrust():
    x0 = hover_trim()[0].to_array()
    x0[12] = 0.0
    with pytest.raises(DomainExitError) as info:
        simulate(Scenario(initial=x0, duration=0.1))
    assert info.value.telemetry is None


def test_circle_tracking_settles():
    sc = Scenario(reference=CircleReference(radius=2.0, rate=0.5))
    tel = simulate(sc)
    assert tel.tracking_error[tel.t >= 5.0 / sc.gains.lambda_pos].max() < 1e-3
    assert tel.cond_E.max() < 1e3


def test_offset_start_converges_at_order_four():
    sc = excited_circle(step=4e-3, duration=4.0)
    fine = [simulate(excited_circle(step=h, duration=4.0)).x[-1] for h in (4e-3, 2e-3, 1e-3)]
    d1 = np.abs(fine[0] - fine[1]).max()
    d2 = np.abs(fine[1] - fine[2]).max()
    assert 12 < d1 / d2 < 20
    assert sc.nsteps == 1000


def test_domain_guard_aborts_cleanly():
    with pytest.raises(DomainExitError) as info:
        simulate(crossing_scenario())
    tel = info.value.telemetry
    assert tel is not None and np.all(np.isfinite(tel.table()))
    assert np.all(np.abs(tel.x[:, 7]) < np.pi / 2)
    assert 0 < info.value.t < 6.0


def test_saturation_warnings_are_logged(caplog):
    p = VehicleParams(zeta_max=9.82, omega_dot_max=0.01)
    sc = Scenario(params=p, reference=CircleReference(), duration=1.0)
    tel = simulate(sc)
    assert len(tel.warnings) == 2
    assert any("thrust above" in r.message for r in caplog.records)


def test_open_loop_pulse_program():
    x0 = hover_trim()[0].to_array()
    sc = Scenario(duration=1.0, step=1e-2, initial=x0, controller="open_loop",
                  pulses=(Pulse(0.2, 0.5, (0.0, 1.0, 0.0, 0.0)),))
    tel = simulate(sc)
    np.testing.assert_array_equal(tel.v[20:50, 1], 1.0)
    assert np.all(tel.v[:20] == 0) and np.all(tel.v[50:] == 0)


def test_step_command_jumps_only_in_snap():
    x0 = hover_trim()[0].to_array()
    sc = Scenario(duration=1.0, step=1e-3, initial=x0, controller="open_loop",
                  pulses=(Pulse(0.5, 1.0, (2.0, 0.0, 0.0, 0.5)),))
    tel = simulate(sc)
    k = 500
    jumps = np.abs(tel.z[k + 1] - tel.z[k - 1])
    assert jumps.max() < 1e-2
    assert abs(tel.snap[k + 1, 0] - tel.snap[k - 1, 0]) == pytest.approx(2.0, abs=1e-9)
    assert abs(tel.psi_ddot[k + 1] - tel.psi_ddot[k - 1]) == pytest.approx(0.5, abs=1e-9)


# -- oracles ----------------------------------------------------------------

def test_chain_transition_matches_expm():
    h = 0.37
    Phi, Gam = chain_transition(h)
    A = np.zeros((14, 14))
    B = np.zeros((14, 4))
    for ax in range(3):
        A[ax, 3 + ax] = A[3 + ax, 6 + ax] = A[6 + ax, 9 + ax] = 1.0
        B[9 + ax, ax] = 1.0
    A[12, 13] = 1.0
    B[13, 3] = 1.0
    # augmented matrix exponential by series (A is nilpotent)
    M = np.zeros((18, 18))
    M[:14, :14], M[:14, 14:] = A * h, B * h
    E, term = np.eye(18), np.eye(18)
    for k in range(1, 8):
        term = term @ M / k
        E = E + term
    np.testing.assert_allclose(Phi, E[:14, :14], atol=1e-15)
    np.testing.assert_allclose(Gam, E[:14, 14:], atol=1e-15)


def test_propagate_chains_shape():
    z = propagate_chains(np.zeros(14), np.ones((5, 4)), 0.1)
    assert z.shape == (6, 14)
    assert z[-1, 0] == pytest.approx(0.5**4 / 24)


def test_exactness_at_hover_is_zero():
    rep = linearization_exactness_check(Scenario(initial=hover_trim()[0].to_array(), duration=1.0))
    assert rep.worst == 0.0


def test_exactness_rejects_disturbance():
    spec = DisturbanceSpec(d=(Signal(kind="constant", value=0.1), Signal(), Signal()))
    with pytest.raises(ValueError):
        linearization_exactness_check(Scenario(disturbance=spec))


def test_channel_decoupling():
    x0 = hover_trim()[0].to_array()
    sc = Scenario(duration=2.0, initial=x0, controller="open_loop",
                  pulses=(Pulse(0.5, 1.0, (1.0, 0.0, 0.0, 0.0)),))
    rep = linearization_exactness_check(sc)
    np.testing.assert_array_equal(rep.chain[:, [1, 2, 12]], 0.0)
    assert np.abs(rep.telemetry.z[:, [1, 2, 12]]).max() < 1e-8
    assert np.abs(rep.telemetry.z[-1, 0]) > 0.01


def test_constant_signal_fd_exact():
    f = np.full((20, 2), 3.25)
    for k in (1, 2, 3, 4):
        assert np.all(central_difference(f, k, 0.01) == 0.0)


@pytest.mark.parametrize("channel, k, stride", [
    ("r", 1, 1), ("r", 2, 1), ("r", 3, 1), ("r", 4, 20), ("psi", 1, 1), ("psi", 2, 1), ("eta", 1, 1),
])
def test_fd_checks_on_excited_run(channel, k, stride):
    tel = simulate(excited_circle(duration=3.0))
    rep = fd_derivative_check(tel, k, channel, stride=stride)
    assert rep.passed, rep


def test_fd_check_rejects_bad_channel():
    tel = simulate(Scenario(duration=0.1))
    with pytest.raises(ValueError):
        fd_derivative_check(tel, 3, "psi")
    with pytest.raises(ValueError):
        fd_derivative_check(tel, 1, "omega")


# -- telemetry --------------------------------------------------------------

def test_csv_layout_and_precision(tmp_path):
    tel = simulate(Scenario(reference=CircleReference(), duration=0.5, step=1e-2))
    path = tmp_path / "t.csv"
    tel.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# quadfl-telemetry v1"
    header = lines[1].split(",")
    assert header == tel.columns() and len(header) >= 40
    rows = list(csv.reader(lines[2:]))
    assert len(rows) == len(tel) == 51
    back = np.array(rows, dtype=float)
    np.testing.assert_array_equal(back, tel.table())


def test_csv_wraps_reported_heading_only(tmp_path):
    sc = Scenario(reference=CircleReference(yaw_rate=2.0), duration=4.0, step=1e-2)
    tel = simulate(sc)
    tab = tel.table()
    cols = tel.columns()
    psi, zpsi = tab[:, cols.index("psi")], tab[:, cols.index("z_psi")]
    assert np.all((psi > -np.pi) & (psi <= np.pi))
    assert zpsi.max() > np.pi


def test_backends_agree():
    from quadfl import kernels
    if "cython" not in kernels.available_backends():
        pytest.skip("compiled kernel not built")
    sc = excited_circle(duration=2.0)
    a = simulate(sc, backend="cython")
    b = simulate(sc, backend="python")
    np.testing.assert_allclose(a.x, b.x, rtol=0, atol=1e-11)
