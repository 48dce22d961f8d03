"""Compiled and pure-Python kernels against the numpy reference model."""

import os
import subprocess
import sys

import numpy as np
import pytest

from quadfl import fl_transform as fl
from quadfl import kernels
from quadfl.extended_model import DisturbanceSample, rhs
from quadfl.kernels import _pykernel
from quadfl.linear_control import CircleReference, GainSet, tracking_command
from quadfl.math_core import rot_body_to_inertial
from quadfl.simulator import Scenario, simulate
from quadfl.verification import excited_circle, sample_domain

BACKENDS = sorted(kernels.available_backends())


def test_pack_params_layout(params):
    P = kernels.pack_params(params, 1.4)
    assert P.shape == (21,)
    np.testing.assert_array_equal(P[:9], params.J.ravel())
    np.testing.assert_array_equal(P[9:18], params.J_inv.ravel())
    assert list(P[18:]) == [params.g_mag, 1.4, params.zeta_min]


def test_scalar_helpers_match_numpy(rng, params):
    x, u, w = sample_domain(rng, 200)
    P = list(kernels.pack_params(params, 1.4))
    for i in range(len(x)):
        xi = list(x[i])
        R = _pykernel._rot(*xi[6:9])
        np.testing.assert_allclose(np.reshape(R, (3, 3)), rot_body_to_inertial(x[i, 6:9]), atol=1e-15)
        ub, hg = _pykernel._feedback(xi, R, list(u[i]), P)
        np.testing.assert_allclose(ub, fl.fl_feedback(x[i], u[i], params), rtol=1e-12, atol=1e-12)
        wi = list(w.d[i]) + list(w.a_d[i])
        xd = _pykernel._plant(xi, R, list(u[i]), hg, wi, params.g_mag)
        ws = DisturbanceSample(w.d[i], w.a_d[i], w.a_d_dot[i], w.a_d_ddot[i])
        np.testing.assert_allclose(xd, rhs(x[i], u[i], ws, params), rtol=1e-13, atol=1e-13)


def test_scalar_tracking_matches_numpy(params):
    ref = CircleReference(yaw_rate=0.4).evaluate(0.8)
    g = GainSet()
    z = ref.flat() + np.linspace(0.1, -0.1, 14)
    x = fl.state_from_flat(z, params)
    R = _pykernel._rot(*x[6:9])
    K = list(g.to_array())
    v = _pykernel._tracking(list(x), R, list(ref.to_table()), K, params.g_mag)
    np.testing.assert_allclose(v, tracking_command(fl.flat_state(x, params), ref, g), atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_backend_runs_circle(backend):
    tel = simulate(Scenario(reference=CircleReference(), duration=3.0), backend=backend)
    assert tel.backend == backend
    assert tel.tracking_error[-1] < 1e-6


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernel not built")
@pytest.mark.parametrize("sampling", ["continuous", "sampled"])
def test_backends_agree_to_rounding(sampling):
    sc = excited_circle(duration=3.0, sampling=sampling)
    a = simulate(sc, backend="cython")
    b = simulate(sc, backend="python")
    np.testing.assert_allclose(a.x, b.x, rtol=0, atol=1e-11)
    np.testing.assert_allclose(a.u, b.u, rtol=0, atol=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_backend_domain_exit_status(backend):
    from quadfl.verification import crossing_scenario
    sc = crossing_scenario()
    x0 = sc.initial_state()
    n = sc.nsteps
    ref = sc.reference.evaluate(np.arange(2 * n + 1) * sc.step / 2).to_table()
    vprog = np.zeros((n + 1, 4))
    vprog[:, 0] = 20.0
    status, n_valid, X, *_ , xbad = kernels.run_closed_loop(
        x0, sc.step, n, ref, np.zeros((2 * n + 1, 12)), vprog, sc.gains.to_array(),
        kernels.pack_params(sc.params, np.pi / 2 - sc.tilt_margin), tracking=False, backend=backend)
    assert status == kernels.DOMAIN_EXIT
    assert 0 < n_valid < n and len(X) == n_valid
    assert np.all(np.isfinite(xbad))


def test_env_forces_pure_python():
    env = dict(os.environ, QUADFL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import quadfl; print(quadfl.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
