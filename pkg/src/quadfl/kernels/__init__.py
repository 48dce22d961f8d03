"""Closed-loop integration kernels.

The compiled extension ``_ckernel`` is used when it was built; otherwise the
pure-Python ``_pykernel`` is loaded. Set ``QUADFL_PURE_PYTHON=1`` to force the
fallback. Both expose ``simulate_loop`` with the same arguments.

Table layouts (``n`` steps, rows at half-step spacing ``t0 + i*dt/2``):

``ref``    ``(2n+1, 18)``: r, r', r'', r''', r'''' (3 each), psi, psi', psi''
``dist``   ``(2n+1, 12)``: d, a_d, a_d', a_d''
``vprog``  ``(n+1, 4)``: held virtual command per step (open-loop mode)
``params`` ``(21,)``: J (9, row-major), J^-1 (9), g, tilt limit, zeta floor
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernel

OK, DOMAIN_EXIT, NON_FINITE = _pykernel.OK, _pykernel.DOMAIN_EXIT, _pykernel.NON_FINITE


def _load():
    if os.environ.get("QUADFL_PURE_PYTHON") == "1":
        return _pykernel, "python"
    try:
        from . import _ckernel
    except ImportError:
        return _pykernel, "python"
    return _ckernel, "cython"


_impl, BACKEND = _load()


def available_backends() -> dict:
    out = {"python": _pykernel}
    try:
        from . import _ckernel
    except ImportError:
        pass
    else:
        out["cython"] = _ckernel
    return out


def pack_params(p, tilt_limit: float) -> np.ndarray:
    return np.concatenate(
        [p.J.ravel(), p.J_inv.ravel(), [p.g_mag, tilt_limit, p.zeta_min]]
    ).astype(np.float64)


def run_closed_loop(x0, dt, nsteps, ref, dist, vprog, gains, params,
                    tracking=True, sampled=False, backend=None):
    """Allocate outputs and call the selected kernel.

    Returns ``(status, n_valid, X, U, V, xbad)`` with arrays trimmed to
    ``n_valid`` rows.
    """
    mod = _impl if backend is None else available_backends()[backend]
    X = np.zeros((nsteps + 1, 14))
    U = np.zeros((nsteps + 1, 4))
    V = np.zeros((nsteps + 1, 4))
    xbad = np.full(14, np.nan)
    status, n_valid = mod.simulate_loop(
        np.ascontiguousarray(x0, dtype=np.float64), float(dt), int(nsteps),
        np.ascontiguousarray(ref, dtype=np.float64),
        np.ascontiguousarray(dist, dtype=np.float64),
        np.ascontiguousarray(vprog, dtype=np.float64),
        np.ascontiguousarray(gains, dtype=np.float64),
        np.ascontiguousarray(params, dtype=np.float64),
        bool(tracking), bool(sampled), X, U, V, xbad,
    )
    return status, n_valid, X[:n_valid], U[:n_valid], V[:n_valid], xbad
