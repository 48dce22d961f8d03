"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 domain abort (or non-finite
state), 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .config import ConfigError, load_scenario
from .extended_model import VehicleParams, hover_trim
from .simulator import DomainExitError, IntegrationError, Scenario, Telemetry, simulate
from .verification import run_suite

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_VERIFY = 0, 2, 3, 4

log = logging.getLogger("quadfl")


def summarize(sc: Scenario, tel: Telemetry | None, abort: str | None = None) -> str:
    lines = [
        f"scenario: {sc.name}",
        f"backend: {tel.backend if tel is not None else kernels.BACKEND}",
        f"dt: {sc.step:g} s  duration: {sc.duration:g} s  steps: {sc.nsteps}",
    ]
    if tel is not None and len(tel):
        err = tel.tracking_error
        settle = tel.t >= 5.0 / sc.gains.lambda_pos
        drift = np.linalg.norm(tel.x[:, 0:3] - tel.x[0, 0:3], axis=1).max()
        lines += [
            f"samples recorded: {len(tel)}",
            f"final tracking error: {err[-1]:.6e} m",
            f"max tracking error after {5.0 / sc.gains.lambda_pos:g} s: "
            + (f"{err[settle].max():.6e} m" if settle.any() else "n/a"),
            f"max position drift from initial: {drift:.6e} m",
            f"max cond(E): {tel.cond_E.max():.6e}",
            f"domain violations: {int((~tel.in_domain).sum())}",
            f"max snap residual: {np.abs(tel.snap_residual).max():.6e} m/s^4",
            f"max heading residual: {np.abs(tel.psi_residual).max():.6e} rad/s^2",
        ]
        lines += [f"warning: {w}" for w in tel.warnings]
    lines.append(f"status: {'aborted: ' + abort if abort else 'ok'}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    try:
        sc = load_scenario(args.scenario, step=args.dt, duration=args.duration,
                           lambda_pos=args.lambda_pos, lambda_psi=args.lambda_psi)
        backend = None if args.backend == "auto" else args.backend
        if backend is not None and backend not in kernels.available_backends():
            raise ConfigError(f"backend {backend!r} is not available")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tel, abort, code = None, None, EXIT_OK
    try:
        tel = simulate(sc, backend=backend)
    except DomainExitError as exc:
        tel, abort, code = exc.telemetry, str(exc), EXIT_DOMAIN
    except IntegrationError as exc:
        abort, code = str(exc), EXIT_DOMAIN
    if tel is not None:
        tel.to_csv(out / "telemetry.csv")
    text = summarize(sc, tel, abort)
    (out / "summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    if abort:
        print(f"error: {abort}", file=sys.stderr)
    return code


def cmd_verify(args) -> int:
    if args.samples < 0:
        print("config error: --samples must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    results = run_suite(samples=args.samples, seed=args.seed,
                        on_result=lambda r: print(r.line(), flush=True))
    failed = [r.key for r in results if r.status == "fail"]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify_ledger.txt").write_text("\n".join(r.line() for r in results) + "\n")
        (out / "verify_ledger.jsonl").write_text("\n".join(r.json() for r in results) + "\n")
    n_skip = sum(r.status == "skipped" for r in results)
    print(f"{len(results) - len(failed) - n_skip} passed, {len(failed)} failed, {n_skip} skipped")
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_trim(args) -> int:
    try:
        p = VehicleParams(g_mag=args.gravity)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    state, cmd = hover_trim(p, args.position, args.psi)
    if args.json:
        print(json.dumps({"state": state.to_array().tolist(), "command": cmd.to_array().tolist()}))
        return EXIT_OK
    x = state
    print(f"position_m:   {x.r.tolist()}")
    print(f"velocity_m_s: {x.v.tolist()}")
    print(f"euler_rad:    {x.theta.tolist()}")
    print(f"omega_rad_s:  {x.omega_b.tolist()}")
    print(f"zeta_m_s2:    {x.zeta}")
    print(f"chi_m_s3:     {x.chi}")
    print(f"command:      {cmd.to_array().tolist()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quadfl", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario file and write telemetry")
    s.add_argument("scenario", help="YAML scenario file")
    s.add_argument("--out", default="out", help="output directory (default: out)")
    s.add_argument("--dt", type=float, help="override step [s]")
    s.add_argument("--duration", type=float, help="override duration [s]")
    s.add_argument("--lambda-pos", type=float, help="override position pole magnitude [rad/s]")
    s.add_argument("--lambda-psi", type=float, help="override heading pole magnitude [rad/s]")
    s.add_argument("--backend", choices=("auto", "cython", "python"), default="auto")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run the property suite")
    v.add_argument("--samples", type=int, default=10_000, help="random states per identity")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="directory for the text and JSON-lines ledgers")
    v.set_defaults(func=cmd_verify)

    t = sub.add_parser("trim", help="print the hover trim state and command")
    t.add_argument("--psi", type=float, default=0.0, help="heading [rad]")
    t.add_argument("--position", type=float, nargs=3, default=(0.0, 0.0, 0.0), metavar=("X", "Y", "Z"))
    t.add_argument("--gravity", type=float, default=9.81, help="gravity magnitude [m/s^2]")
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_trim)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
