"""
Monte Carlo ensembles over random initial phases.

Every run draws its phases from a generator seeded by ``(seed, run_index)``,
so a run can be reproduced on its own and the aggregate does not depend on
execution order or on the number of worker threads.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import stats

from .errors import CollapseError, DimensionTooLarge, LowExpectedCount
from .integrator import (
    ALL_DECAY,
    ALL_GROW,
    UNRESOLVED,
    IntegratorConfig,
    Law,
    Outcome,
    collapse_time_analytic,
    integrate,
)
from .model import (
    SINGULAR_TOLERANCE,
    AlphaVector,
    ModelParams,
    PhaseMode,
    StateVector,
    alpha_vector,
    coupling_vector,
    logistic_rate,
)

__all__ = [
    "DISTRIBUTIONS",
    "MAX_ORACLE_DIM",
    "PhaseSampler",
    "EnsembleReport",
    "ChiSquareResult",
    "sample_phases",
    "sign_configurations",
    "predicted_outcome",
    "sign_config_oracle",
    "run_ensemble",
    "chi_square_test",
    "compare_reports",
    "wilson_interval",
    "expected_collapse_time",
]

MAX_ORACLE_DIM = 20
MAX_ATTEMPTS = 1000
CI_LEVEL = 0.99

# name -> draw(rng, size) returning angles in radians
DISTRIBUTIONS: dict[str, Callable[[np.random.Generator, int], np.ndarray]] = {
    "uniform-circle": lambda rng, size: rng.uniform(0.0, 2.0 * math.pi, size),
}


@dataclass(frozen=True)
class PhaseSampler:
    mode: PhaseMode = PhaseMode.INDEPENDENT
    seed: int = 0
    distribution: str = "uniform-circle"

    def __post_init__(self):
        object.__setattr__(self, "mode", PhaseMode(self.mode))
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown phase distribution {self.distribution!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")


def _draw(sampler: PhaseSampler, run_index: int, n: int) -> tuple[np.ndarray, int]:
    rng = np.random.default_rng([int(sampler.seed), int(run_index)])
    draw = DISTRIBUTIONS[sampler.distribution]
    size = 1 if sampler.mode is PhaseMode.COMMON else n
    for attempt in range(MAX_ATTEMPTS):
        phases = draw(rng, size)
        if np.all(np.abs(np.cos(phases)) > SINGULAR_TOLERANCE):
            if size == 1:
                phases = np.repeat(phases, n)
            return phases, attempt
    raise RuntimeError(f"phase generator produced {MAX_ATTEMPTS} singular draws in a row")


def sample_phases(sampler: PhaseSampler, run_index: int, n: int) -> np.ndarray:
    """Initial phases for run ``run_index``; never contains a singular phase."""
    return _draw(sampler, run_index, n)[0]


def sign_configurations(n: int, mode: PhaseMode = PhaseMode.INDEPENDENT) -> list[tuple[AlphaVector, float]]:
    """All reachable sign vectors with their probability under uniform phases."""
    if n < 2:
        raise ValueError("need at least 2 states")
    if n > MAX_ORACLE_DIM:
        raise DimensionTooLarge(f"N={n} exceeds the enumeration limit {MAX_ORACLE_DIM}")
    if PhaseMode(mode) is PhaseMode.COMMON:
        return [(AlphaVector((1,) * n), 0.5), (AlphaVector((-1,) * n), 0.5)]
    w = 0.5**n
    return [(AlphaVector(a), w) for a in itertools.product((1, -1), repeat=n)]


def _growth_signs(alphas: np.ndarray) -> np.ndarray:
    """sign(f_n alpha_n) for each row of a (configs, N) array of +-1 entries."""
    step = lambda v: (v > 0).astype(np.int64)  # noqa: E731  step is 0 at 0
    pos = step(alphas)
    not_neg = 1 - step(-alphas)
    s_pos = pos.sum(axis=1, keepdims=True) - pos
    s_not_neg = not_neg.sum(axis=1, keepdims=True) - not_neg
    f = (1 - 2 * s_pos) * alphas + (1 - s_pos) * step(s_not_neg) * (1 - alphas)
    return np.sign(f * alphas)


def predicted_outcome(alpha: AlphaVector) -> Outcome:
    """Asymptotic outcome implied by the growth signs of a sign configuration."""
    signs = _growth_signs(np.array([alpha.alpha]))[0]
    return _outcome_from_signs(signs)


def _outcome_from_signs(signs) -> Outcome:
    n = len(signs)
    growing = [k for k, s in enumerate(signs) if s > 0]
    decaying = sum(1 for s in signs if s < 0)
    if decaying == n:
        return ALL_DECAY
    if len(growing) == n:
        return ALL_GROW
    if len(growing) == 1 and decaying == n - 1:
        return Outcome.collapse_to(growing[0])
    return UNRESOLVED


def sign_config_oracle(n: int, mode: PhaseMode = PhaseMode.INDEPENDENT) -> dict[Outcome, float]:
    """
    Exact outcome probabilities from enumerating every sign configuration.

    Only outcomes with nonzero probability are returned.
    """
    configs = sign_configurations(n, mode)
    alphas = np.array([a.alpha for a, _ in configs], dtype=np.int64)
    signs = _growth_signs(alphas)
    probs: dict[Outcome, float] = {}
    for row, (_, w) in zip(signs, configs):
        out = _outcome_from_signs(row)
        probs[out] = probs.get(out, 0.0) + w
    return dict(sorted(probs.items(), key=lambda kv: kv[0].sort_key()))


def expected_collapse_time(x0, params: ModelParams, epsilon: float, mode: PhaseMode = PhaseMode.INDEPENDENT) -> float:
    """
    Analytic collapse time averaged over the collapsing sign configurations.

    Each configuration is weighted by its phase probability, conditional on
    a collapse happening; NaN when no configuration collapses.
    """
    total = 0.0
    weight = 0.0
    for alpha, w in sign_configurations(len(x0), mode):
        if not predicted_outcome(alpha).is_collapse:
            continue
        f = coupling_vector(alpha)
        lams = [logistic_rate(params.g, fn, an, params.rate_convention) for fn, an in zip(f, alpha)]
        total += w * collapse_time_analytic(x0, lams, epsilon)
        weight += w
    return total / weight if weight else math.nan


def wilson_interval(count: int, n: int, level: float = CI_LEVEL) -> tuple[float, float]:
    z = stats.norm.ppf(0.5 + level / 2)
    p = count / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class EnsembleReport:
    n_runs: int
    x0: tuple[float, ...]
    counts: dict[str, int]
    oracle: dict[str, float]
    seed: int
    phase_mode: str
    distribution: str
    params: dict
    cfg: dict
    rejected_samples: int
    collapse_time_mean: Optional[float]
    wall_time: float = field(compare=False)

    @property
    def frequencies(self) -> dict[str, float]:
        return {k: c / self.n_runs for k, c in self.counts.items()}

    @property
    def ci99(self) -> dict[str, tuple[float, float]]:
        return {k: wilson_interval(c, self.n_runs) for k, c in self.counts.items()}

    def to_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "x0": list(self.x0),
            "counts": dict(self.counts),
            "frequencies": self.frequencies,
            "ci99": {k: list(v) for k, v in self.ci99.items()},
            "oracle": dict(self.oracle),
            "seed": self.seed,
            "phase_mode": self.phase_mode,
            "distribution": self.distribution,
            "params": self.params,
            "cfg": self.cfg,
            "rejected_samples": self.rejected_samples,
            "collapse_time_mean": self.collapse_time_mean,
            "wall_time": self.wall_time,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


class _Chunk(NamedTuple):
    counts: Counter
    rejected: int
    collapse_times: list


def _run_chunk(indices, x0, params, cfg, sampler, cache) -> _Chunk:
    counts: Counter = Counter()
    rejected = 0
    collapse_times = []
    n = len(x0)
    for i in indices:
        try:
            phases, rej = _draw(sampler, i, n)
            alpha = alpha_vector(phases)
            # x depends on the phases only through alpha, so runs sharing a
            # sign configuration share their outcome and collapse time
            hit = cache.get(alpha)
            if hit is None:
                traj = integrate(Law.REDUCTION, StateVector(x0, phases), params, cfg)
                hit = cache.setdefault(alpha, (traj.outcome, traj.collapse_time))
        except CollapseError as exc:
            exc.run_index = i
            raise
        outcome, t_collapse = hit
        counts[outcome] += 1
        rejected += rej
        if t_collapse is not None:
            collapse_times.append(t_collapse)
    return _Chunk(counts, rejected, collapse_times)


def run_ensemble(
    n_runs: int,
    x0,
    params: ModelParams,
    cfg: IntegratorConfig,
    sampler: PhaseSampler,
    workers: int = 1,
) -> EnsembleReport:
    """
    Run ``n_runs`` reduction trajectories from ``x0`` with sampled phases.

    ``workers`` threads split the run indices into contiguous blocks; the
    resulting counts are identical for any worker count.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    x0 = tuple(float(v) for v in x0)
    if len(x0) != params.n:
        raise ValueError(f"x0 has {len(x0)} components, params expect {params.n}")
    if not all(0.0 < v < 1.0 for v in x0):
        raise ValueError("x0 components must lie strictly inside (0, 1)")
    workers = max(1, min(int(workers), n_runs))

    start = time.perf_counter()
    cache: dict = {}
    bounds = np.linspace(0, n_runs, workers + 1).astype(int)
    blocks = [range(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    if workers == 1:
        chunks = [_run_chunk(blocks[0], x0, params, cfg, sampler, cache)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda b: _run_chunk(b, x0, params, cfg, sampler, cache), blocks))

    counts: Counter = Counter()
    for c in chunks:
        counts.update(c.counts)
    times = [t for c in chunks for t in c.collapse_times]
    oracle = sign_config_oracle(len(x0), sampler.mode)
    labels = sorted(set(counts) | set(oracle), key=Outcome.sort_key)
    return EnsembleReport(
        n_runs=n_runs,
        x0=x0,
        counts={o.label: counts.get(o, 0) for o in labels},
        oracle={o.label: oracle.get(o, 0.0) for o in labels},
        seed=int(sampler.seed),
        phase_mode=sampler.mode.value,
        distribution=sampler.distribution,
        params=params.to_dict(),
        cfg=cfg.to_dict(),
        rejected_samples=sum(c.rejected for c in chunks),
        # fsum is exactly rounded, hence independent of block order
        collapse_time_mean=math.fsum(times) / len(times) if times else None,
        wall_time=time.perf_counter() - start,
    )


class ChiSquareResult(NamedTuple):
    statistic: float
    p_value: float
    dof: int


def chi_square_test(report: EnsembleReport) -> ChiSquareResult:
    """Pearson goodness of fit of the report's counts against its oracle."""
    expected = {k: p * report.n_runs for k, p in report.oracle.items() if p > 0}
    low = {k: e for k, e in expected.items() if e < 5}
    if low:
        raise LowExpectedCount(f"expected counts below 5: {low}")
    dof = len(expected) - 1
    if any(c > 0 and report.oracle.get(k, 0.0) == 0.0 for k, c in report.counts.items()):
        return ChiSquareResult(math.inf, 0.0, dof)
    stat = sum((report.counts.get(k, 0) - e) ** 2 / e for k, e in expected.items())
    if dof == 0:
        return ChiSquareResult(stat, 1.0, 0)
    return ChiSquareResult(stat, float(stats.chi2.sf(stat, dof)), dof)


def compare_reports(a: EnsembleReport, b: EnsembleReport) -> ChiSquareResult:
    """Two-sample chi-square test that two reports share one class distribution."""
    labels = [k for k in dict.fromkeys([*a.counts, *b.counts]) if a.counts.get(k, 0) + b.counts.get(k, 0) > 0]
    if len(labels) < 2:
        return ChiSquareResult(0.0, 1.0, 0)
    table = np.array([[a.counts.get(k, 0) for k in labels], [b.counts.get(k, 0) for k in labels]])
    res = stats.chi2_contingency(table, correction=False)
    return ChiSquareResult(float(res[0]), float(res[1]), int(res[2]))
