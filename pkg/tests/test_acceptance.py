"""End-to-end acceptance checks, each with its tolerance and wall-clock limit."""

import csv
import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from chaotic_collapse.cli import main
from chaotic_collapse.diagnostics import (
    EXPECTED_COUPLING_TABLE,
    closed_form_mismatch,
    convergence_order,
    coupling_table,
    verify_closed_form,
)
from chaotic_collapse.ensemble import PhaseSampler, chi_square_test, compare_reports, run_ensemble
from chaotic_collapse.integrator import (
    IntegratorConfig,
    Law,
    Outcome,
    collapse_time_analytic,
    integrate,
)
from chaotic_collapse.model import (
    AlphaVector,
    ModelParams,
    PhaseMode,
    RateConvention,
    StateVector,
    coupling_vector,
    logistic_rate,
)

acceptance = pytest.mark.acceptance


@contextmanager
def within(limit):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < limit, f"took {elapsed:.2f} s, limit {limit} s"


def _random_symmetric(rng, n):
    a = rng.uniform(-1.0, 1.0, (n, n))
    return np.triu(a) + np.triu(a, 1).T


@acceptance(1, "closed form solves the reduction ODE; as-printed rate does not", 10)
def test_closed_form_consistency():
    with within(10):
        worst = 0.0
        for x0 in (0.1, 0.3, 0.5, 0.7, 0.9):
            for g in (0.5, 1.0, 2.0):
                for f_alpha in (1.0, -1.0):
                    err = verify_closed_form(x0, g, f_alpha, RateConvention.ODE_CONSISTENT, dt=1e-4)
                    worst = max(worst, err)
        assert worst <= 1e-8
        assert closed_form_mismatch(0.5, 1.0, 1.0, dt=1e-4) > 0.05


@acceptance(2, "two-state coupling table", 1)
def test_coupling_table():
    with within(1):
        table = coupling_table()
        assert table == EXPECTED_COUPLING_TABLE
        assert table[(1, -1)] == (1, -1)
        assert table[(-1, 1)] == (-1, 1)
        assert table[(1, 1)] == (-1, -1)
        assert table[(-1, -1)] == (1, 1)


@acceptance(3, "attractor grid: predicted collapse and analytic collapse time", 30)
def test_attractor_grid():
    grid = [round(0.1 * k, 1) for k in range(1, 10)]
    params = ModelParams.free(2)
    cfg = IntegratorConfig.default()
    with within(30):
        for alpha, winner in (((1, -1), 0), ((-1, 1), 1)):
            theta = [0.0 if a > 0 else math.pi for a in alpha]
            f = coupling_vector(AlphaVector(alpha))
            lams = [logistic_rate(params.g, f[n], alpha[n]) for n in range(2)]
            for x1 in grid:
                for x2 in grid:
                    traj = integrate(Law.REDUCTION, StateVector([x1, x2], theta), params, cfg)
                    assert traj.outcome == Outcome.collapse_to(winner), (alpha, x1, x2)
                    expected = collapse_time_analytic((x1, x2), lams, cfg.epsilon)
                    assert abs(traj.collapse_time - expected) <= 2 * cfg.dt, (alpha, x1, x2)


@acceptance(4, "ensemble frequencies match the sign-configuration oracle", 60)
def test_ensemble_vs_oracle():
    n_runs = 100_000
    params = ModelParams.free(2)
    cfg = IntegratorConfig.default()
    with within(60):
        first = run_ensemble(n_runs, (0.5, 0.5), params, cfg, PhaseSampler(PhaseMode.INDEPENDENT, seed=1))
        sigma = math.sqrt(0.25 * 0.75 / n_runs)
        assert set(first.counts) == {"collapse_to_0", "collapse_to_1", "all_decay", "all_grow"}
        for label, freq in first.frequencies.items():
            assert abs(freq - 0.25) <= 3 * sigma, (label, freq)
        assert chi_square_test(first).p_value > 1e-3

        second = run_ensemble(n_runs, (0.9, 0.1), params, cfg, PhaseSampler(PhaseMode.INDEPENDENT, seed=2))
        assert compare_reports(first, second).p_value > 1e-3


@acceptance(5, "common phase never collapses", 10)
def test_common_phase_degeneracy():
    with within(10):
        rep = run_ensemble(
            10_000, (0.5, 0.5), ModelParams.free(2), IntegratorConfig.default(), PhaseSampler(PhaseMode.COMMON, seed=3)
        )
        assert sum(rep.counts.values()) == 10_000
        assert rep.counts.get("collapse_to_0", 0) == 0
        assert rep.counts.get("collapse_to_1", 0) == 0


@acceptance(6, "full dynamics conserve the norm; free phases rotate at -omega", 10)
def test_full_dynamics_conservation():
    cfg = IntegratorConfig(dt=1e-3, t_max=20.0, stop_on_collapse=False)
    rng = np.random.default_rng(2024)
    with within(10):
        for n in (2, 4):
            # equal populations and well separated eigenfrequencies keep every
            # amplitude away from zero, where sqrt(x) in the polar form is singular
            omega = 3.0 * np.arange(1, n + 1)
            params = ModelParams(omega=omega, h_matrix=_random_symmetric(rng, n))
            initial = StateVector(np.full(n, 1.0 / n), rng.uniform(0, 2 * math.pi, n))
            traj = integrate(Law.FULL, initial, params, cfg)
            assert traj.times[-1] == pytest.approx(20.0)
            assert np.max(np.abs(traj.norm_series - 1.0)) <= 1e-6

        omega = rng.uniform(-3.0, 3.0, 4)
        initial = StateVector(np.full(4, 0.25), rng.uniform(0, 2 * math.pi, 4))
        traj = integrate(Law.FULL, initial, ModelParams(omega=omega, h_matrix=np.zeros((4, 4))), cfg)
        drift = traj.theta - (initial.theta[None, :] - np.outer(traj.times, omega))
        assert np.max(np.abs(drift)) <= 1e-8


@acceptance(7, "integrator convergence order", 10)
def test_integrator_order():
    with within(10):
        slope, _ = convergence_order()
        assert abs(slope - 4.0) <= 0.3


@acceptance(8, "ensemble counts are reproducible across invocations and thread counts", 30)
def test_reproducibility(tmp_path):
    base = ["ensemble", "--x0", "0.5,0.5", "--runs", "20000", "--seed", "42"]
    with within(30):
        blobs = []
        for i, workers in enumerate((1, 1, 4)):
            out = tmp_path / f"run{i}.json"
            assert main(base + ["--workers", str(workers), "--out", str(out)]) == 0
            blobs.append(json.dumps(json.loads(out.read_text())["counts"], sort_keys=True).encode())
        assert blobs[0] == blobs[1] == blobs[2]


@acceptance(9, "two-state collapse transient of q", 5)
def test_collapse_transient(tmp_path):
    out = tmp_path / "traj.csv"
    with within(5):
        assert main(["trajectory", "--x0", "0.5,0.5", "--theta0", "0,pi", "--out", str(out)]) == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        t = np.array([float(r["t"]) for r in rows])
        q = np.array([float(r["q"]) for r in rows])
        assert t[0] == 0.0 and q[0] == 0.0
        assert np.all(np.diff(q) >= 0.0)
        assert q[-1] >= 0.999
