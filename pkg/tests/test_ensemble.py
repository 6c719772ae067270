import itertools
import json
import math

import numpy as np
import pytest
from scipy import stats

from chaotic_collapse.errors import DimensionTooLarge, LowExpectedCount, StepOverflow
from chaotic_collapse.ensemble import (
    EnsembleReport,
    PhaseSampler,
    _growth_signs,
    chi_square_test,
    compare_reports,
    expected_collapse_time,
    predicted_outcome,
    run_ensemble,
    sample_phases,
    sign_config_oracle,
    sign_configurations,
    wilson_interval,
)
from chaotic_collapse.integrator import ALL_DECAY, ALL_GROW, IntegratorConfig, Outcome
from chaotic_collapse.model import AlphaVector, ModelParams, PhaseMode, coupling_f

CFG = IntegratorConfig.default()


def _report(counts, oracle, n_runs=None):
    n_runs = n_runs if n_runs is not None else sum(counts.values())
    return EnsembleReport(
        n_runs=n_runs, x0=(0.5, 0.5), counts=counts, oracle=oracle, seed=0, phase_mode="independent",
        distribution="uniform-circle", params={}, cfg={}, rejected_samples=0, collapse_time_mean=None,
        wall_time=0.0,
    )


# --- sampling --------------------------------------------------------------------


def test_common_mode_repeats_one_angle():
    s = PhaseSampler(PhaseMode.COMMON, seed=3)
    for i in range(20):
        ph = sample_phases(s, i, 5)
        assert np.all(ph == ph[0])


def test_sampling_is_deterministic_per_run_index():
    s = PhaseSampler(seed=11)
    assert np.array_equal(sample_phases(s, 7, 3), sample_phases(PhaseSampler(seed=11), 7, 3))
    assert not np.array_equal(sample_phases(s, 7, 3), sample_phases(s, 8, 3))


def test_right_half_circle_fraction():
    s = PhaseSampler(seed=2024)
    ph = np.concatenate([sample_phases(s, i, 1) for i in range(100_000)])
    assert np.all((ph >= 0) & (ph < 2 * math.pi))
    assert abs(np.mean(np.cos(ph) > 0) - 0.5) <= 0.0047


def test_sampler_validation():
    with pytest.raises(ValueError):
        PhaseSampler(distribution="gaussian")
    with pytest.raises(ValueError):
        PhaseSampler(seed=-1)


# --- oracle --------------------------------------------------------------------------


def test_oracle_two_states():
    assert sign_config_oracle(2) == {
        Outcome.collapse_to(0): 0.25,
        Outcome.collapse_to(1): 0.25,
        ALL_DECAY: 0.25,
        ALL_GROW: 0.25,
    }


def test_oracle_common_mode():
    assert sign_config_oracle(2, PhaseMode.COMMON) == {ALL_DECAY: 0.5, ALL_GROW: 0.5}


def test_oracle_three_states():
    assert sign_config_oracle(3) == {
        Outcome.collapse_to(0): 0.125,
        Outcome.collapse_to(1): 0.125,
        Outcome.collapse_to(2): 0.125,
        ALL_DECAY: 0.5,
        ALL_GROW: 0.125,
    }


@pytest.mark.parametrize("n", [2, 3, 4, 5, 8])
def test_oracle_sums_to_one(n):
    assert math.isclose(sum(sign_config_oracle(n).values()), 1.0, abs_tol=1e-12)
    assert all(p > 0 for p in sign_config_oracle(n).values())


def test_oracle_dimension_limit():
    with pytest.raises(DimensionTooLarge):
        sign_configurations(21)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_vectorized_signs_match_coupling(n):
    for alpha in itertools.product((1, -1), repeat=n):
        a = np.array([alpha])
        expected = [np.sign(coupling_f(k, AlphaVector(alpha)) * alpha[k]) for k in range(n)]
        assert list(_growth_signs(a)[0]) == expected


def test_predicted_outcome():
    assert predicted_outcome(AlphaVector((1, -1, -1))) == Outcome.collapse_to(0)
    assert predicted_outcome(AlphaVector((1, 1, -1))) == ALL_DECAY


def test_expected_collapse_time_common_mode_is_nan():
    assert math.isnan(expected_collapse_time((0.5, 0.5), ModelParams.free(2), 1e-3, PhaseMode.COMMON))


# --- ensemble runs ---------------------------------------------------------------------


def test_single_run():
    rep = run_ensemble(1, (0.5, 0.5), ModelParams.free(2), CFG, PhaseSampler(seed=5))
    assert sum(rep.counts.values()) == 1
    assert rep.n_runs == 1


def test_worker_count_invariance():
    args = (2000, (0.3, 0.6, 0.4), ModelParams.free(3), CFG, PhaseSampler(seed=9))
    a = run_ensemble(*args, workers=1)
    b = run_ensemble(*args, workers=4)
    assert a == b
    assert a.collapse_time_mean == b.collapse_time_mean


def test_common_mode_never_collapses():
    rep = run_ensemble(1000, (0.5, 0.5), ModelParams.free(2), CFG, PhaseSampler(PhaseMode.COMMON, seed=1))
    assert sum(c for k, c in rep.counts.items() if k.startswith("collapse_to")) == 0
    assert rep.collapse_time_mean is None


def test_ensemble_collapse_time_matches_analytic():
    x0 = (0.3, 0.6)
    rep = run_ensemble(500, x0, ModelParams.free(2), CFG, PhaseSampler(seed=4))
    # both collapsing configurations have equal weight; the sample mean mixes them binomially
    a = expected_collapse_time(x0, ModelParams.free(2), CFG.epsilon)
    assert rep.collapse_time_mean == pytest.approx(a, rel=0.1)


def test_report_json_round_trip():
    rep = run_ensemble(50, (0.5, 0.5), ModelParams.free(2), CFG, PhaseSampler(seed=0))
    d = json.loads(rep.to_json())
    assert d["counts"] == rep.counts
    assert set(d["ci99"]) == set(rep.counts)


def test_run_index_attached_to_errors():
    cfg = IntegratorConfig(dt=0.5, t_max=5.0)
    with pytest.raises(StepOverflow) as info:
        run_ensemble(10, (0.9, 0.1), ModelParams.free(2, g=50.0), cfg, PhaseSampler(seed=0))
    assert info.value.run_index == 0


def test_input_validation():
    with pytest.raises(ValueError):
        run_ensemble(0, (0.5, 0.5), ModelParams.free(2), CFG, PhaseSampler())
    with pytest.raises(ValueError):
        run_ensemble(5, (0.5, 0.5, 0.5), ModelParams.free(2), CFG, PhaseSampler())
    with pytest.raises(ValueError):
        run_ensemble(5, (0.0, 0.5), ModelParams.free(2), CFG, PhaseSampler())


# --- statistics ------------------------------------------------------------------------


def test_wilson_interval_contains_estimate():
    lo, hi = wilson_interval(250, 1000)
    assert lo < 0.25 < hi
    assert wilson_interval(0, 10)[0] == 0.0


def test_chi_square_exact_proportions():
    oracle = {"collapse_to_0": 0.25, "collapse_to_1": 0.25, "all_decay": 0.25, "all_grow": 0.25}
    res = chi_square_test(_report({k: 100 for k in oracle}, oracle))
    assert res.statistic == 0.0
    assert res.p_value == 1.0
    assert res.dof == 3


def test_chi_square_impossible_class():
    res = chi_square_test(_report({"all_decay": 50, "all_grow": 49, "collapse_to_0": 1},
                                  {"all_decay": 0.5, "all_grow": 0.5, "collapse_to_0": 0.0}))
    assert res.statistic == math.inf
    assert res.p_value == 0.0


def test_chi_square_low_expected():
    oracle = {"collapse_to_0": 0.25, "collapse_to_1": 0.25, "all_decay": 0.25, "all_grow": 0.25}
    with pytest.raises(LowExpectedCount):
        chi_square_test(_report({k: 3 for k in oracle}, oracle))


@pytest.mark.slow
def test_chi_square_null_calibration():
    # under the null, p-values are uniform: about 1 in 1000 seeds falls below 0.001.
    # outcomes only depend on the sign configuration, so a coarse step suffices
    cfg = IntegratorConfig(dt=1e-2, t_max=50.0)
    pvals = np.array([
        chi_square_test(run_ensemble(100, (0.5, 0.5), ModelParams.free(2), cfg, PhaseSampler(seed=s))).p_value
        for s in range(1000)
    ])
    assert np.sum(pvals <= 1e-3) <= 5
    assert stats.kstest(pvals, "uniform").pvalue > 1e-3


def test_compare_reports_same_distribution():
    a = _report({"all_decay": 250, "all_grow": 250}, {})
    b = _report({"all_decay": 260, "all_grow": 240}, {})
    res = compare_reports(a, b)
    assert res.dof == 1
    assert res.p_value > 0.5
    c = _report({"all_decay": 400, "all_grow": 100}, {})
    assert compare_reports(a, c).p_value < 1e-10


@pytest.mark.slow
def test_three_state_frequencies_match_oracle():
    n_runs = 100_000
    rep = run_ensemble(n_runs, (0.2, 0.3, 0.5), ModelParams.free(3), CFG, PhaseSampler(seed=17))
    assert set(rep.counts) == {o.label for o in sign_config_oracle(3)}
    for label, p in rep.oracle.items():
        sigma = math.sqrt(p * (1 - p) / n_runs)
        assert abs(rep.frequencies[label] - p) <= 3 * sigma, label
    assert chi_square_test(rep).p_value > 1e-3
