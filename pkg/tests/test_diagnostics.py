import math

import numpy as np
import pytest

from chaotic_collapse.diagnostics import (
    EXPECTED_COUPLING_TABLE,
    closed_form_mismatch,
    convention_gap,
    convergence_order,
    coupling_table,
    frozen_phase_baseline,
    norm_drift_scan,
    run_checks,
    verify_closed_form,
)
from chaotic_collapse.errors import StepOverflow
from chaotic_collapse.integrator import IntegratorConfig, Law, Outcome, integrate
from chaotic_collapse.model import ModelParams, RateConvention, StateVector


@pytest.mark.parametrize("convention", list(RateConvention))
@pytest.mark.parametrize("x0, f_alpha", [(0.5, 1.0), (0.5, -1.0), (0.1, 1.0), (0.9, -1.0)])
def test_closed_form_solves_its_ode(x0, f_alpha, convention):
    assert verify_closed_form(x0, 1.0, f_alpha, convention) <= 1e-8


def test_closed_form_other_coupling_strength():
    assert verify_closed_form(0.3, 2.5, 1.0, dt=4e-5) <= 1e-8


def test_as_printed_does_not_solve_full_rate_ode():
    assert closed_form_mismatch(0.5, 1.0, 1.0, dt=1e-3) > 0.05


def test_convention_gap():
    assert convention_gap(0.5, 1.0, 1.0, 0.0) == 0.0
    # at t = ln 3 the exponentials are 1/9 and 1/3
    expected = math.sqrt(3) / 2 - 1 / math.sqrt(2)
    assert convention_gap(0.5, 1.0, 1.0, math.log(3)) == pytest.approx(expected, abs=1e-14)


def test_coupling_table():
    assert coupling_table() == EXPECTED_COUPLING_TABLE
    assert EXPECTED_COUPLING_TABLE == {(1, -1): (1, -1), (-1, 1): (-1, 1), (1, 1): (-1, -1), (-1, -1): (1, 1)}


def test_frozen_baseline_equal_phases_is_static():
    s = StateVector([0.4, 0.6], [1.0, 1.0])
    p = ModelParams(omega=[2.0, 5.0], h_matrix=[[0.3, 1.0], [1.0, -0.2]])
    traj = frozen_phase_baseline(s, p, IntegratorConfig(dt=1e-2, t_max=2.0))
    assert np.all(traj.x == s.x)
    assert np.all(traj.theta == s.theta)


def test_frozen_baseline_collapses():
    s = StateVector([0.5, 0.5], [0.0, math.pi / 2])
    p = ModelParams(omega=[0.0, 0.0], h_matrix=[[0.0, 1.0], [1.0, 0.0]])
    traj = frozen_phase_baseline(s, p, IntegratorConfig.default())
    assert traj.outcome == Outcome.collapse_to(0)
    assert norm_drift_scan(traj) <= 1e-12
    # x_1 = sin^2(t/2 + pi/4) hits 1 in finite time, where sqrt(x_2) stops being Lipschitz
    with pytest.raises(StepOverflow):
        frozen_phase_baseline(s, p, IntegratorConfig.default(stop_on_collapse=False))


def test_norm_drift_scan_free_motion_is_zero():
    s = StateVector([0.2, 0.3, 0.5], [0.0, 1.0, 2.0])
    p = ModelParams(omega=[1.0, 2.0, 3.0], h_matrix=np.zeros((3, 3)))
    traj = integrate(Law.FULL, s, p, IntegratorConfig(dt=1e-2, t_max=3.0))
    assert norm_drift_scan(traj) == 0.0


def test_norm_drift_scan_reduction_is_not_conserved():
    s = StateVector([0.5, 0.5], [0.0, 0.0])
    traj = integrate(Law.REDUCTION, s, ModelParams.free(2), IntegratorConfig.default())
    assert norm_drift_scan(traj) > 0.5


def test_convergence_order():
    slope, errors = convergence_order()
    assert abs(slope - 4.0) <= 0.3
    assert all(a > b for a, b in zip(errors, errors[1:]))


def test_run_checks_all_pass():
    checks = run_checks()
    assert len(checks) >= 6
    for c in checks:
        assert c.passed, c.line()
        assert c.name in c.line()
