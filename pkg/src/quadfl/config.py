"""Scenario files: YAML with SI units spelled out in every key name.

Unknown keys are rejected so a misspelt unit never silently falls back to a
default. See README.md for the full schema.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .extended_model import VehicleParams, hover_trim
from .fl_transform import DEFAULT_TILT_MARGIN
from .linear_control import CircleReference, GainSet, HoverReference, WaypointReference
from .simulator import DisturbanceSpec, Pulse, Scenario, Signal


class ConfigError(ValueError):
    pass


_TOP = {"name", "duration_s", "step_s", "vehicle", "reference", "initial",
        "controller", "domain", "disturbance", "verification"}


def _take(section: dict, allowed: set, where: str) -> dict:
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected a mapping")
    extra = set(section) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    return section


def _num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _vec(v, n: int, where: str) -> np.ndarray:
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ConfigError(f"{where}: expected a list of {n} numbers")
    return np.array([_num(c, where) for c in v])


def _opt(d: dict, key: str, where: str):
    return None if d.get(key) is None else _num(d[key], f"{where}.{key}")


def _vehicle(sec) -> VehicleParams:
    sec = _take(sec, {"inertia_kg_m2", "gravity_m_s2", "zeta_min_m_s2", "zeta_max_m_s2",
                      "omega_dot_max_rad_s2", "u1_ddot_max_m_s4"}, "vehicle")
    kw: dict[str, Any] = {}
    if "inertia_kg_m2" in sec:
        J = sec["inertia_kg_m2"]
        if isinstance(J, list) and len(J) == 3 and all(isinstance(r, list) for r in J):
            kw["J"] = np.array([_vec(r, 3, "vehicle.inertia_kg_m2") for r in J])
        else:
            kw["J"] = np.diag(_vec(J, 3, "vehicle.inertia_kg_m2"))
    if "gravity_m_s2" in sec:
        kw["g_mag"] = _num(sec["gravity_m_s2"], "vehicle.gravity_m_s2")
    if "zeta_min_m_s2" in sec:
        kw["zeta_min"] = _num(sec["zeta_min_m_s2"], "vehicle.zeta_min_m_s2")
    kw["zeta_max"] = _opt(sec, "zeta_max_m_s2", "vehicle")
    kw["omega_dot_max"] = _opt(sec, "omega_dot_max_rad_s2", "vehicle")
    kw["u1_ddot_max"] = _opt(sec, "u1_ddot_max_m_s4", "vehicle")
    try:
        return VehicleParams(**kw)
    except ValueError as exc:
        raise ConfigError(f"vehicle: {exc}") from None


def _reference(sec):
    sec = dict(sec or {"kind": "hover"})
    kind = sec.pop("kind", "hover")
    try:
        if kind == "hover":
            s = _take(sec, {"position_m", "psi_rad"}, "reference")
            return HoverReference(
                r0=tuple(_vec(s.get("position_m", [0, 0, 0]), 3, "reference.position_m")),
                psi0=_num(s.get("psi_rad", 0.0), "reference.psi_rad"),
            )
        if kind == "circle":
            s = _take(sec, {"radius_m", "rate_rad_s", "center_m", "psi_rad", "yaw_rate_rad_s"},
                      "reference")
            return CircleReference(
                radius=_num(s.get("radius_m", 2.0), "reference.radius_m"),
                rate=_num(s.get("rate_rad_s", 0.5), "reference.rate_rad_s"),
                center=tuple(_vec(s.get("center_m", [0, 0, 0]), 3, "reference.center_m")),
                psi0=_num(s.get("psi_rad", 0.0), "reference.psi_rad"),
                yaw_rate=_num(s.get("yaw_rate_rad_s", 0.0), "reference.yaw_rate_rad_s"),
            )
        if kind == "waypoint-smooth":
            s = _take(sec, {"waypoints_m", "headings_rad", "segment_time_s"}, "reference")
            wps = s.get("waypoints_m")
            if not isinstance(wps, list):
                raise ConfigError("reference.waypoints_m: expected a list of points")
            pts = tuple(tuple(_vec(w, 3, "reference.waypoints_m")) for w in wps)
            heads = s.get("headings_rad", [0.0] * len(pts))
            return WaypointReference(
                waypoints=pts,
                headings=tuple(_num(h, "reference.headings_rad") for h in heads),
                segment_time=_num(s.get("segment_time_s", 4.0), "reference.segment_time_s"),
            )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"reference: {exc}") from None
    raise ConfigError(f"reference.kind: unknown kind {kind!r}")


def _initial(sec, params: VehicleParams):
    sec = dict(sec or {"mode": "reference"})
    mode = sec.pop("mode", "reference")
    if mode == "reference":
        s = _take(sec, {"offset"}, "initial")
        off = _take(s.get("offset"), {"position_m", "velocity_m_s", "acceleration_m_s2",
                                      "jerk_m_s3", "psi_rad", "psi_rate_rad_s"}, "initial.offset")
        if not off:
            return None, None
        z = np.zeros(14)
        for i, key in enumerate(("position_m", "velocity_m_s", "acceleration_m_s2", "jerk_m_s3")):
            if key in off:
                z[3 * i:3 * i + 3] = _vec(off[key], 3, f"initial.offset.{key}")
        z[12] = _num(off.get("psi_rad", 0.0), "initial.offset.psi_rad")
        z[13] = _num(off.get("psi_rate_rad_s", 0.0), "initial.offset.psi_rate_rad_s")
        return None, z
    if mode == "trim":
        s = _take(sec, {"position_m", "psi_rad"}, "initial")
        state, _ = hover_trim(params, _vec(s.get("position_m", [0, 0, 0]), 3, "initial.position_m"),
                              _num(s.get("psi_rad", 0.0), "initial.psi_rad"))
        return state.to_array(), None
    if mode == "state":
        s = _take(sec, {"position_m", "velocity_m_s", "euler_rad", "omega_rad_s",
                        "zeta_m_s2", "chi_m_s3"}, "initial")
        x = np.concatenate([
            _vec(s.get("position_m", [0, 0, 0]), 3, "initial.position_m"),
            _vec(s.get("velocity_m_s", [0, 0, 0]), 3, "initial.velocity_m_s"),
            _vec(s.get("euler_rad", [0, 0, 0]), 3, "initial.euler_rad"),
            _vec(s.get("omega_rad_s", [0, 0, 0]), 3, "initial.omega_rad_s"),
            [_num(s.get("zeta_m_s2", params.g_mag), "initial.zeta_m_s2"),
             _num(s.get("chi_m_s3", 0.0), "initial.chi_m_s3")],
        ])
        return x, None
    raise ConfigError(f"initial.mode: unknown mode {mode!r}")


def _signal(spec, where: str) -> Signal:
    s = _take(spec, {"kind", "value", "amplitude", "frequency_rad_s", "phase_rad"}, where)
    kind = s.get("kind", "zero")
    if kind not in ("zero", "constant", "sinusoid"):
        raise ConfigError(f"{where}.kind: unknown signal kind {kind!r}")
    return Signal(
        kind=kind,
        value=_num(s.get("value", 0.0), f"{where}.value"),
        amplitude=_num(s.get("amplitude", 0.0), f"{where}.amplitude"),
        frequency=_num(s.get("frequency_rad_s", 0.0), f"{where}.frequency_rad_s"),
        phase=_num(s.get("phase_rad", 0.0), f"{where}.phase_rad"),
    )


def _disturbance(sec) -> DisturbanceSpec:
    sec = _take(sec, {"d_rad_s2", "a_d_m_s2"}, "disturbance")
    out = {}
    for key, name in (("d_rad_s2", "d"), ("a_d_m_s2", "a_d")):
        chans = sec.get(key)
        if chans is None:
            continue
        if not isinstance(chans, list) or len(chans) != 3:
            raise ConfigError(f"disturbance.{key}: expected three channel descriptors")
        out[name] = tuple(_signal(c, f"disturbance.{key}[{i}]") for i, c in enumerate(chans))
    return DisturbanceSpec(**out)


def _override(override, value, where: str) -> float:
    return float(override) if override is not None else _num(value, where)


def _controller(sec):
    sec = _take(sec, {"mode", "sampling", "lambda_pos_rad_s", "lambda_psi_rad_s", "pulses"},
                "controller")
    gains = GainSet(
        lambda_pos=_num(sec.get("lambda_pos_rad_s", 2.0), "controller.lambda_pos_rad_s"),
        lambda_psi=_num(sec.get("lambda_psi_rad_s", 3.0), "controller.lambda_psi_rad_s"),
    )
    pulses = []
    for i, p in enumerate(sec.get("pulses") or []):
        p = _take(p, {"start_s", "stop_s", "v"}, f"controller.pulses[{i}]")
        where = f"controller.pulses[{i}]"
        pulses.append(Pulse(_num(p.get("start_s"), f"{where}.start_s"),
                            _num(p.get("stop_s"), f"{where}.stop_s"),
                            tuple(_vec(p.get("v"), 4, f"{where}.v"))))
    return gains, sec.get("mode", "tracking"), sec.get("sampling", "continuous"), tuple(pulses)


def scenario_from_dict(data: dict, *, step: float | None = None,
                       duration: float | None = None,
                       lambda_pos: float | None = None,
                       lambda_psi: float | None = None) -> Scenario:
    """Build a :class:`Scenario` from parsed YAML plus command-line overrides."""
    data = _take(data, _TOP, "scenario")
    params = _vehicle(data.get("vehicle"))
    ref = _reference(data.get("reference"))
    initial, offset = _initial(data.get("initial"), params)
    try:
        gains, mode, sampling, pulses = _controller(data.get("controller"))
        if lambda_pos is not None or lambda_psi is not None:
            gains = GainSet(lambda_pos if lambda_pos is not None else gains.lambda_pos,
                            lambda_psi if lambda_psi is not None else gains.lambda_psi)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"controller: {exc}") from None
    dom = _take(data.get("domain"), {"tilt_margin_rad"}, "domain")
    ver = _take(data.get("verification"), {"residuals"}, "verification")
    try:
        return Scenario(
            duration=_override(duration, data.get("duration_s", 10.0), "duration_s"),
            step=_override(step, data.get("step_s", 1e-3), "step_s"),
            params=params, reference=ref, gains=gains,
            disturbance=_disturbance(data.get("disturbance")),
            initial=initial, initial_offset=offset,
            controller=mode, sampling=sampling, pulses=pulses,
            tilt_margin=_num(dom.get("tilt_margin_rad", DEFAULT_TILT_MARGIN), "domain.tilt_margin_rad"),
            residuals=bool(ver.get("residuals", True)),
            name=str(data.get("name", "scenario")),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_scenario(path, **overrides) -> Scenario:
    """Parse a YAML scenario file.

    Raises:
        ConfigError: unreadable file, YAML syntax error or schema violation.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return scenario_from_dict(data, **overrides)
