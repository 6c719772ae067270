"""
Command-line front end.

Subcommands: ``trajectory`` (CSV time series), ``ensemble`` (JSON report),
``sweep`` (CSV of reduction times over g and epsilon) and ``verify``.

Exit codes: 0 success, 1 configuration error, 2 integration error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .diagnostics import run_checks
from .ensemble import PhaseSampler, chi_square_test, expected_collapse_time, run_ensemble, sample_phases
from .errors import CollapseError, LowExpectedCount, SingularPhase
from .integrator import IntegratorConfig, Law, Trajectory, integrate
from .model import ModelParams, PhaseMode, RateConvention, StateVector, alpha_vector

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3


class ConfigError(Exception):
    pass


_PI_TERM = re.compile(r"^([+-]?(?:\d+(?:\.\d*)?|\.\d+)?)\*?pi(?:/(\d+(?:\.\d*)?))?$")


def parse_number(token: str) -> float:
    """Parse a float, also accepting multiples of pi such as ``pi/2`` or ``-3*pi/4``."""
    tok = token.strip().lower()
    try:
        return float(tok)
    except ValueError:
        pass
    m = _PI_TERM.match(tok)
    if not m:
        raise ValueError(f"cannot parse number {token!r}")
    coef, denom = m.groups()
    if coef in ("", "+"):
        c = 1.0
    elif coef == "-":
        c = -1.0
    else:
        c = float(coef)
    return c * math.pi / (float(denom) if denom else 1.0)


def parse_list(values, name: str) -> Optional[list[float]]:
    """Flatten ``["0.5,0.5"]``, ``["0.5", "0.5"]`` or a JSON list into floats."""
    if values is None:
        return None
    if isinstance(values, (int, float)):
        values = [values]
    tokens = []
    for v in values:
        if isinstance(v, (int, float)):
            tokens.append(str(v))
        else:
            tokens.extend(t for t in re.split(r"[,\s]+", str(v)) if t)
    try:
        return [parse_number(t) for t in tokens]
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    cfg: IntegratorConfig
    x0: tuple[float, ...]
    law: Law = Law.REDUCTION
    theta0: Optional[tuple[float, ...]] = None
    sampler: Optional[PhaseSampler] = None
    runs: int = 1
    run_index: int = 0
    workers: int = 1
    out: Optional[Path] = None
    g_grid: tuple[float, ...] = ()
    epsilon_grid: tuple[float, ...] = ()
    dt_given: bool = False
    t_max_given: bool = False


# flag dests that may also come from the JSON config file
_KEYS = (
    "states", "x0", "theta0", "omega", "h_matrix", "g", "dt", "t_max", "epsilon",
    "sample_stride", "seed", "phase_mode", "law", "frozen_phase", "rate_convention",
    "runs", "run_index", "workers", "out", "g_grid", "epsilon_grid", "stop_on_collapse",
)


def _merged(args: argparse.Namespace) -> dict:
    values = {}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config: top level must be a JSON object")
        for key, val in loaded.items():
            key = key.replace("-", "_")
            if key not in _KEYS:
                raise ConfigError(f"config: unknown field {key!r}")
            values[key] = val
    for key in _KEYS:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            values[key] = val
    return values


def build_run_config(args: argparse.Namespace) -> RunConfig:
    v = _merged(args)
    command = args.command

    x0 = parse_list(v.get("x0"), "x0")
    if not x0:
        raise ConfigError("x0: required (initial probabilities, e.g. --x0 0.5,0.5)")
    n = int(v.get("states", len(x0)))
    if n < 2:
        raise ConfigError("states: need at least 2")
    if len(x0) != n:
        raise ConfigError(f"x0: expected {n} values, got {len(x0)}")
    if not all(0.0 <= x <= 1.0 for x in x0):
        raise ConfigError("x0: probabilities must lie in [0, 1]")

    omega = parse_list(v.get("omega"), "omega") or [0.0] * n
    if len(omega) != n:
        raise ConfigError(f"omega: expected {n} values, got {len(omega)}")
    h = parse_list(v.get("h_matrix"), "h_matrix") or [0.0] * (n * n)
    if len(h) != n * n:
        raise ConfigError(f"h_matrix: expected {n * n} row-major values, got {len(h)}")

    try:
        g = float(v.get("g", 1.0))
        params = ModelParams(
            omega=omega,
            h_matrix=np.reshape(h, (n, n)),
            g=g,
            rate_convention=RateConvention(v.get("rate_convention", "ode-consistent")),
            phase_mode=PhaseMode(v.get("phase_mode", "independent")),
            frozen_phase=bool(v.get("frozen_phase", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"model parameters: {exc}") from None

    try:
        cfg = IntegratorConfig(
            dt=float(v.get("dt", 1e-3 / g)),
            t_max=float(v.get("t_max", 50.0 / g)),
            epsilon=float(v.get("epsilon", 1e-3)),
            sample_stride=int(v.get("sample_stride", 10)),
            # a trajectory shows the whole transient and saturation unless asked to stop
            stop_on_collapse=bool(v.get("stop_on_collapse", False)) if command == "trajectory" else True,
        )
        law = Law(v.get("law", "reduction"))
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from None

    theta0 = parse_list(v.get("theta0"), "theta0")
    sampler = None
    if "seed" in v:
        try:
            sampler = PhaseSampler(params.phase_mode, int(v["seed"]))
        except ValueError as exc:
            raise ConfigError(f"seed: {exc}") from None

    if command == "trajectory":
        if (theta0 is None) == (sampler is None):
            raise ConfigError("theta0/seed: give exactly one of --theta0 or --seed")
        if theta0 is not None and len(theta0) != n:
            raise ConfigError(f"theta0: expected {n} values, got {len(theta0)}")
    else:
        if theta0 is not None:
            raise ConfigError(f"theta0: not accepted by {command}; phases are sampled")
        if sampler is None:
            sampler = PhaseSampler(params.phase_mode, 0)
        if not all(0.0 < x < 1.0 for x in x0):
            raise ConfigError("x0: ensemble runs need probabilities strictly inside (0, 1)")

    runs = int(v.get("runs", 1000))
    if command in ("ensemble", "sweep") and runs < 1:
        raise ConfigError(f"runs: must be at least 1, got {runs}")
    workers = int(v.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers: must be at least 1")

    out = v.get("out")
    if out is None:
        raise ConfigError("out: required output path (--out)")
    out = Path(out)
    if not out.parent.exists():
        raise ConfigError(f"out: directory {out.parent} does not exist")

    g_grid = tuple(parse_list(v.get("g_grid"), "g_grid") or ())
    eps_grid = tuple(parse_list(v.get("epsilon_grid"), "epsilon_grid") or ())
    if command == "sweep":
        if "g_grid" not in v and "epsilon_grid" not in v:
            raise ConfigError("g_grid/epsilon_grid: sweep grid is empty")
        if ("g_grid" in v and not g_grid) or ("epsilon_grid" in v and not eps_grid):
            raise ConfigError("g_grid/epsilon_grid: sweep grid is empty")
        g_grid = g_grid or (g,)
        eps_grid = eps_grid or (cfg.epsilon,)
        if not all(x > 0 for x in g_grid):
            raise ConfigError("g_grid: values must be positive")
        if not all(0.0 < e < 0.5 for e in eps_grid):
            raise ConfigError("epsilon_grid: values must lie in (0, 0.5)")

    return RunConfig(
        params=params,
        cfg=cfg,
        x0=tuple(x0),
        law=law,
        theta0=None if theta0 is None else tuple(theta0),
        sampler=sampler,
        runs=runs,
        run_index=int(v.get("run_index", 0)),
        workers=workers,
        out=out,
        g_grid=g_grid,
        epsilon_grid=eps_grid,
        dt_given="dt" in v,
        t_max_given="t_max" in v,
    )


def _fmt(v: float) -> str:
    # repr gives the shortest string that round-trips exactly
    return repr(float(v))


def write_trajectory_csv(traj: Trajectory, path: Path) -> None:
    n = traj.n
    header = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"theta_{i + 1}" for i in range(n)]
    if traj.q_series is not None:
        header.append("q")
    header.append("norm")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(traj.times):
            row = [_fmt(t)] + [_fmt(x) for x in traj.x[i]] + [_fmt(th) for th in traj.theta[i]]
            if traj.q_series is not None:
                row.append(_fmt(traj.q_series[i]))
            row.append(_fmt(traj.norm_series[i]))
            w.writerow(row)


def cmd_trajectory(rc: RunConfig) -> int:
    if rc.theta0 is not None:
        theta = np.array(rc.theta0)
    else:
        theta = sample_phases(rc.sampler, rc.run_index, len(rc.x0))
    initial = StateVector(rc.x0, theta)
    if rc.law is Law.REDUCTION:
        try:
            alpha_vector(initial)
        except SingularPhase as exc:
            raise ConfigError(f"theta0: {exc}") from None
    traj = integrate(rc.law, initial, rc.params, rc.cfg)
    write_trajectory_csv(traj, rc.out)
    print(f"outcome: {traj.outcome.label}")
    print(f"collapse_time: {'none' if traj.collapse_time is None else _fmt(traj.collapse_time)}")
    return EXIT_OK


def cmd_ensemble(rc: RunConfig) -> int:
    report = run_ensemble(rc.runs, rc.x0, rc.params, rc.cfg, rc.sampler, workers=rc.workers)
    doc = report.to_dict()
    try:
        chi = chi_square_test(report)
        doc["chi_square"] = {"statistic": chi.statistic, "p_value": chi.p_value, "dof": chi.dof}
    except LowExpectedCount:
        doc["chi_square"] = None
    rc.out.write_text(json.dumps(doc, indent=2) + "\n")
    print(" ".join(f"{k}={c}" for k, c in report.counts.items()))
    return EXIT_OK


def cmd_sweep(rc: RunConfig) -> int:
    rows = []
    for g, eps in itertools.product(rc.g_grid, rc.epsilon_grid):
        params = ModelParams(
            omega=rc.params.omega,
            h_matrix=rc.params.h_matrix,
            g=g,
            rate_convention=rc.params.rate_convention,
            phase_mode=rc.params.phase_mode,
        )
        cfg = IntegratorConfig(
            dt=rc.cfg.dt if rc.dt_given else 1e-3 / g,
            t_max=rc.cfg.t_max if rc.t_max_given else 50.0 / g,
            epsilon=eps,
            sample_stride=rc.cfg.sample_stride,
        )
        report = run_ensemble(rc.runs, rc.x0, params, cfg, rc.sampler, workers=rc.workers)
        tau_mean = math.nan if report.collapse_time_mean is None else report.collapse_time_mean
        tau_analytic = expected_collapse_time(rc.x0, params, eps, rc.sampler.mode)
        rows.append([g, eps, tau_mean, tau_analytic])
    with open(rc.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["g", "epsilon", "tau_mean", "tau_analytic"])
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    print(f"{len(rows)} grid points written to {rc.out}")
    return EXIT_OK


def cmd_verify() -> int:
    checks = run_checks()
    for c in checks:
        print(c.line())
    failed = [c.name for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_VERIFY


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with any of the flag values; flags override it")
    p.add_argument("--states", type=int, help="number of basis states N (default: len(x0))")
    p.add_argument("--x0", nargs="+", help="initial probabilities, comma or space separated")
    p.add_argument("--theta0", nargs="+", help="initial phases; accepts forms like pi/2")
    p.add_argument("--omega", nargs="+", help="eigenfrequencies (default zeros)")
    p.add_argument("--h-matrix", dest="h_matrix", nargs="+", help="interaction matrix, flat row-major")
    p.add_argument("--g", type=float, help="interaction strength (default 1)")
    p.add_argument("--dt", type=float, help="time step (default 1e-3/g)")
    p.add_argument("--t-max", dest="t_max", type=float, help="horizon (default 50/g)")
    p.add_argument("--epsilon", type=float, help="collapse threshold (default 1e-3)")
    p.add_argument("--sample-stride", dest="sample_stride", type=int, help="record every k-th step (default 10)")
    p.add_argument("--seed", type=int, help="phase sampler seed")
    p.add_argument("--run-index", dest="run_index", type=int, help="run index for a sampled trajectory")
    p.add_argument("--phase-mode", dest="phase_mode", choices=[m.value for m in PhaseMode])
    p.add_argument("--law", choices=[m.value for m in Law])
    p.add_argument("--frozen-phase", dest="frozen_phase", action="store_true", default=None)
    p.add_argument(
        "--stop-on-collapse",
        dest="stop_on_collapse",
        action="store_true",
        default=None,
        help="trajectory only: stop at the first detected outcome instead of t_max",
    )
    p.add_argument("--rate-convention", dest="rate_convention", choices=[c.value for c in RateConvention])
    p.add_argument("--runs", type=int, help="number of ensemble runs (default 1000)")
    p.add_argument("--workers", type=int, help="worker threads for ensembles (default 1)")
    p.add_argument("--out", help="output file")


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors: exit 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chaotic-collapse", description=__doc__.splitlines()[1])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in (
        ("trajectory", "integrate one trajectory and write it as CSV"),
        ("ensemble", "run a Monte Carlo ensemble and write a JSON report"),
        ("sweep", "tabulate mean and analytic reduction times over g and epsilon"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_run_flags(p)
        if name == "sweep":
            p.add_argument("--g-grid", dest="g_grid", nargs="+", help="values of g")
            p.add_argument("--epsilon-grid", dest="epsilon_grid", nargs="+", help="values of epsilon")
    sub.add_parser("verify", help="run the numerical self-checks")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command == "verify":
        return cmd_verify()
    try:
        rc = build_run_config(args)
        handler = {"trajectory": cmd_trajectory, "ensemble": cmd_ensemble, "sweep": cmd_sweep}[args.command]
        return handler(rc)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CollapseError as exc:
        where = f" (run {exc.run_index})" if hasattr(exc, "run_index") else ""
        print(f"integration error{where}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
