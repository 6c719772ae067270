"""
Numerical cross-checks of the model's analytic statements.

Each check reduces to one number compared against a tolerance; `run_checks`
bundles them for the ``verify`` command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .ensemble import PhaseSampler, run_ensemble
from .integrator import (
    IntegratorConfig,
    Law,
    Trajectory,
    collapse_time_analytic,
    integrate,
    rk4,
)
from .model import (
    AlphaVector,
    ModelParams,
    PhaseMode,
    RateConvention,
    StateVector,
    closed_form_x,
    coupling_f,
    logistic_rate,
)

__all__ = [
    "Check",
    "verify_closed_form",
    "closed_form_mismatch",
    "convention_gap",
    "frozen_phase_baseline",
    "norm_drift_scan",
    "convergence_order",
    "coupling_table",
    "run_checks",
]


def _integrate_scalar(x0: float, rate: float, dt: float, t_end: float) -> tuple[np.ndarray, np.ndarray]:
    """RK4 for dx/dt = rate x (1 - x^2) on plain floats; returns (t, x) on the step grid."""
    n = int(round(t_end / dt))
    field_fn = lambda v: rate * v * (1.0 - v * v)  # noqa: E731
    xs = [x0]
    x = x0
    for _ in range(n):
        x = rk4(field_fn, x, dt)
        xs.append(x)
    return np.arange(n + 1) * dt, np.array(xs)


def verify_closed_form(
    x0: float,
    g: float,
    f_alpha: float,
    convention: RateConvention = RateConvention.ODE_CONSISTENT,
    dt: float = 1e-4,
) -> float:
    """
    Max deviation between the closed form and an RK4 solution over [0, 10/g].

    The ODE is integrated at the rate the chosen convention actually solves:
    ``g f alpha`` for ODE_CONSISTENT, half of that for AS_PRINTED.
    """
    convention = RateConvention(convention)
    rate = g * f_alpha if convention is RateConvention.ODE_CONSISTENT else 0.5 * g * f_alpha
    t, xs = _integrate_scalar(x0, rate, dt, 10.0 / g)
    exact = closed_form_x(t, x0, f_alpha, 1.0, g, convention)
    return float(np.max(np.abs(xs - exact)))


def closed_form_mismatch(x0: float, g: float, f_alpha: float, dt: float = 1e-4) -> float:
    """Max deviation of the as-printed closed form from the full-rate reduction ODE."""
    t, xs = _integrate_scalar(x0, g * f_alpha, dt, 10.0 / g)
    printed = closed_form_x(t, x0, f_alpha, 1.0, g, RateConvention.AS_PRINTED)
    return float(np.max(np.abs(xs - printed)))


def convention_gap(x0: float, g: float, f_alpha: float, t: float) -> float:
    """ODE_CONSISTENT minus AS_PRINTED closed form at time ``t``."""
    a = closed_form_x(t, x0, f_alpha, 1.0, g, RateConvention.ODE_CONSISTENT)
    b = closed_form_x(t, x0, f_alpha, 1.0, g, RateConvention.AS_PRINTED)
    return a - b


def frozen_phase_baseline(initial: StateVector, params: ModelParams, cfg: IntegratorConfig) -> Trajectory:
    """Full dynamics with every phase held at its initial value."""
    return integrate(Law.FULL, initial, replace(params, frozen_phase=True), cfg)


def norm_drift_scan(trajectory: Trajectory) -> float:
    norms = trajectory.norm_series
    return float(np.max(np.abs(norms - norms[0])))


def convergence_order(
    dts: Sequence[float] = (0.1, 0.05, 0.025, 0.0125),
    x0: float = 0.5,
    g: float = 1.0,
    t_end: float = 5.0,
) -> tuple[float, list[float]]:
    """
    Observed order of `integrate` on the reduction law.

    Uses the two-state configuration alpha = (+1, -1), where one component
    grows and the other decays, and measures the max error against the
    closed form over all steps. Returns the log-log slope and the errors.
    """
    initial = StateVector([x0, x0], [0.0, math.pi])
    params = ModelParams.free(2, g=g)
    # f alpha = (+1, -1) for this configuration
    signs = (1.0, -1.0)
    errors = []
    for dt in dts:
        cfg = IntegratorConfig(dt=dt, t_max=t_end, sample_stride=1, stop_on_collapse=False)
        traj = integrate(Law.REDUCTION, initial, params, cfg)
        err = 0.0
        for k, s in enumerate(signs):
            exact = closed_form_x(traj.times, x0, s, 1.0, g)
            err = max(err, float(np.max(np.abs(traj.x[:, k] - exact))))
        errors.append(err)
    slope = np.polyfit(np.log(dts), np.log(errors), 1)[0]
    return float(slope), errors


def coupling_table() -> dict[tuple[int, int], tuple[int, int]]:
    """f_n alpha_n for every two-state sign configuration."""
    table = {}
    for a in ((1, -1), (-1, 1), (1, 1), (-1, -1)):
        alpha = AlphaVector(a)
        table[a] = tuple(int(coupling_f(n, alpha) * a[n]) for n in range(2))
    return table


EXPECTED_COUPLING_TABLE = {
    (1, -1): (1, -1),
    (-1, 1): (-1, 1),
    (1, 1): (-1, -1),
    (-1, -1): (1, 1),
}


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    relation: str = "<="
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        note = f"  [{self.note}]" if self.note else ""
        return f"{status}  {self.name:<32} value={self.value:.6g}  {self.relation} {self.threshold:.6g}{note}"


def _at_most(name, value, threshold, note=""):
    return Check(name, float(value), threshold, bool(value <= threshold), "<=", note)


def _above(name, value, threshold, note=""):
    return Check(name, float(value), threshold, bool(value > threshold), ">", note)


def _symmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    h = rng.uniform(-1.0, 1.0, (n, n))
    return np.triu(h) + np.triu(h, 1).T


def run_checks(dt_closed_form: float = 1e-4) -> list[Check]:
    checks = []

    worst = max(
        verify_closed_form(x0, g, 1.0, RateConvention.ODE_CONSISTENT, dt_closed_form)
        for x0 in (0.1, 0.3, 0.5, 0.7, 0.9)
        for g in (0.5, 1.0, 2.0)
    )
    checks.append(_at_most("closed_form_ode_consistent", worst, 1e-8))

    checks.append(
        _above(
            "as_printed_vs_full_rate",
            closed_form_mismatch(0.5, 1.0, 1.0, dt_closed_form),
            0.05,
            note="expected mismatch (documented)",
        )
    )

    x0 = math.sqrt(0.5)
    at_zero = abs(convention_gap(x0, 1.0, 1.0, 0.0))
    checks.append(_at_most("conventions_agree_at_t0", at_zero, 0.0))
    predicted = 3.0 / math.sqrt(10.0) - math.sqrt(3.0) / 2.0
    gap = convention_gap(x0, 1.0, 1.0, math.log(3.0))
    checks.append(_at_most("convention_gap_at_ln3", abs(gap - predicted), 1e-12))

    table = coupling_table()
    mismatches = sum(table[k] != v for k, v in EXPECTED_COUPLING_TABLE.items())
    checks.append(_at_most("coupling_table_n2", mismatches, 0))

    rng = np.random.default_rng(2024)
    n = 4
    initial = StateVector(np.full(n, 1.0 / n), rng.uniform(0.0, 2.0 * math.pi, n))
    params = ModelParams(omega=3.0 * np.arange(n), h_matrix=_symmetric(rng, n))
    cfg = IntegratorConfig(dt=1e-3, t_max=20.0, stop_on_collapse=False)
    traj = integrate(Law.FULL, initial, params, cfg)
    checks.append(_at_most("full_norm_conservation", np.max(np.abs(traj.norm_series - 1.0)), 1e-6))

    free = ModelParams(omega=[0.5, -1.3, 2.0], h_matrix=np.zeros((3, 3)))
    init3 = StateVector([0.2, 0.3, 0.5], [0.1, 1.0, -2.0])
    traj = integrate(Law.FULL, init3, free, cfg)
    expected = init3.theta[None, :] - free.omega[None, :] * traj.times[:, None]
    checks.append(_at_most("free_evolution_phase", np.max(np.abs(traj.theta - expected)), 1e-8))

    coupled = ModelParams(omega=[0.0, 0.0], h_matrix=[[0.0, 1.0], [1.0, 0.0]])
    traj = frozen_phase_baseline(StateVector([0.5, 0.5], [0.0, math.pi / 2]), coupled, IntegratorConfig.default())
    checks.append(_at_most("frozen_phase_constant", np.max(np.abs(traj.theta - traj.theta[0])), 0.0))
    checks.append(_at_most("frozen_phase_norm", norm_drift_scan(traj), 1e-6))

    slope, _ = convergence_order()
    checks.append(_at_most("rk4_convergence_order", abs(slope - 4.0), 0.3, note=f"slope={slope:.3f}"))

    cfg = IntegratorConfig.default()
    traj = integrate(Law.REDUCTION, StateVector([0.3, 0.6], [0.0, math.pi]), ModelParams.free(2), cfg)
    lams = [logistic_rate(1.0, 1.0, 1.0), logistic_rate(1.0, 1.0, -1.0)]
    predicted_t = collapse_time_analytic([0.3, 0.6], lams, cfg.epsilon)
    tau_err = math.inf if traj.collapse_time is None else abs(traj.collapse_time - predicted_t)
    checks.append(_at_most("collapse_time_vs_analytic", tau_err, 2 * cfg.dt))

    report = run_ensemble(1000, [0.5, 0.5], ModelParams.free(2), cfg, PhaseSampler(PhaseMode.COMMON, seed=7))
    collapses = sum(c for k, c in report.counts.items() if k.startswith("collapse_to"))
    checks.append(_at_most("common_phase_no_collapse", collapses, 0))

    return checks
