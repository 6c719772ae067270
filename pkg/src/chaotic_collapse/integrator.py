"""
Fixed-step RK4 time stepping, collapse detection and reduction times.

Both laws of motion are advanced with the classical four-stage Runge-Kutta
scheme. Probabilities that overshoot [0, 1] by at most `OVERSHOOT_TOL` are
clamped back; anything larger aborts with `StepOverflow`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateInitial, StepOverflow
from .model import (
    ModelParams,
    StateVector,
    _full_field,
    alpha_vector,
    reduction_rates,
)

__all__ = [
    "OVERSHOOT_TOL",
    "Law",
    "OutcomeKind",
    "Outcome",
    "ALL_DECAY",
    "ALL_GROW",
    "UNRESOLVED",
    "IntegratorConfig",
    "Trajectory",
    "rk4",
    "step_rk4",
    "integrate",
    "classify_outcome",
    "reduction_time_analytic",
    "collapse_time_analytic",
]

OVERSHOOT_TOL = 1e-12


class Law(enum.Enum):
    REDUCTION = "reduction"
    FULL = "full"


class OutcomeKind(enum.Enum):
    COLLAPSE = "collapse_to"
    ALL_DECAY = "all_decay"
    ALL_GROW = "all_grow"
    UNRESOLVED = "unresolved"


_KIND_ORDER = {OutcomeKind.COLLAPSE: 0, OutcomeKind.ALL_DECAY: 1, OutcomeKind.ALL_GROW: 2, OutcomeKind.UNRESOLVED: 3}


@dataclass(frozen=True)
class Outcome:
    """Classification of a (final) state. ``index`` is set only for collapses."""

    kind: OutcomeKind
    index: Optional[int] = None

    def __post_init__(self):
        if (self.kind is OutcomeKind.COLLAPSE) != (self.index is not None):
            raise ValueError("index must be given exactly for collapse outcomes")

    @classmethod
    def collapse_to(cls, k: int) -> Outcome:
        return cls(OutcomeKind.COLLAPSE, int(k))

    @classmethod
    def from_label(cls, label: str) -> Outcome:
        prefix = OutcomeKind.COLLAPSE.value + "_"
        if label.startswith(prefix):
            return cls.collapse_to(int(label[len(prefix):]))
        return cls(OutcomeKind(label))

    @property
    def is_collapse(self) -> bool:
        return self.kind is OutcomeKind.COLLAPSE

    @property
    def label(self) -> str:
        if self.is_collapse:
            return f"{self.kind.value}_{self.index}"
        return self.kind.value

    def sort_key(self):
        return (_KIND_ORDER[self.kind], -1 if self.index is None else self.index)

    def __str__(self):
        return self.label


ALL_DECAY = Outcome(OutcomeKind.ALL_DECAY)
ALL_GROW = Outcome(OutcomeKind.ALL_GROW)
UNRESOLVED = Outcome(OutcomeKind.UNRESOLVED)


@dataclass(frozen=True)
class IntegratorConfig:
    """
    Step size, horizon and collapse threshold.

    ``stop_on_collapse=False`` integrates to ``t_max`` even after an outcome
    is reached; the collapse time is when the final collapse was entered.
    """

    dt: float
    t_max: float
    epsilon: float = 1e-3
    sample_stride: int = 10
    stop_on_collapse: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and self.t_max > 0):
            raise ValueError("dt and t_max must be positive")
        if not self.dt < self.t_max:
            raise ValueError(f"dt={self.dt} must be smaller than t_max={self.t_max}")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ValueError("sample_stride must be a positive integer")

    @classmethod
    def default(cls, g: float = 1.0, **overrides) -> IntegratorConfig:
        kwargs = dict(dt=1e-3 / g, t_max=50.0 / g, epsilon=1e-3, sample_stride=10)
        kwargs.update(overrides)
        return cls(**kwargs)

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_max / self.dt - 1e-9))

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "t_max": self.t_max,
            "epsilon": self.epsilon,
            "sample_stride": self.sample_stride,
            "stop_on_collapse": self.stop_on_collapse,
        }


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded samples of one run. ``x`` and ``theta`` have shape (samples, N)."""

    times: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    norm_series: np.ndarray
    outcome: Outcome
    collapse_time: Optional[float] = None
    q_series: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if (self.collapse_time is not None) != self.outcome.is_collapse:
            raise ValueError("collapse_time must be set exactly when the outcome is a collapse")
        if not (len(self.times) == len(self.x) == len(self.theta) == len(self.norm_series)):
            raise ValueError("trajectory arrays must share one length")

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def states(self) -> list[StateVector]:
        return [StateVector(x, th) for x, th in zip(self.x, self.theta)]

    @property
    def final(self) -> StateVector:
        return StateVector(self.x[-1], self.theta[-1])

    def __len__(self):
        return len(self.times)


def rk4(field_fn: Callable, y, dt: float):
    """One classical RK4 step of ``dy/dt = field_fn(y)``; works on floats or arrays."""
    h = 0.5 * dt
    k1 = field_fn(y)
    k2 = field_fn(y + h * k1)
    k3 = field_fn(y + h * k2)
    k4 = field_fn(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _bounded(x: np.ndarray) -> np.ndarray:
    lo = x.min()
    hi = x.max()
    if lo < -OVERSHOOT_TOL or hi > 1.0 + OVERSHOOT_TOL or not (math.isfinite(lo) and math.isfinite(hi)):
        raise StepOverflow(f"probabilities left [0, 1]: {x.tolist()}; reduce dt")
    if lo < 0.0 or hi > 1.0:
        x = np.clip(x, 0.0, 1.0)
    return x


def _stage_state(x: np.ndarray, theta: np.ndarray) -> StateVector:
    # intermediate RK stages may sit marginally outside [0, 1]; skip validation
    s = object.__new__(StateVector)
    object.__setattr__(s, "x", x)
    object.__setattr__(s, "theta", theta)
    return s


def step_rk4(rhs: Callable[[StateVector], tuple], state: StateVector, dt: float) -> StateVector:
    """
    Advance ``state`` by one RK4 step.

    ``rhs(state)`` must return ``(theta_dot, x_dot)``, e.g.
    ``lambda s: full_rhs(s, params)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = state.n

    def field_fn(y):
        theta_dot, x_dot = rhs(_stage_state(y[:n], y[n:]))
        return np.concatenate([np.asarray(x_dot, dtype=float), np.asarray(theta_dot, dtype=float)])

    y = rk4(field_fn, np.concatenate([state.x, state.theta]), dt)
    return StateVector(_bounded(y[:n]), y[n:])


def _classify_values(xs: Sequence[float], eps: float) -> Outcome:
    hi = 1.0 - eps
    n_hi = 0
    n_lo = 0
    k = -1
    for i, v in enumerate(xs):
        if v >= hi:
            n_hi += 1
            k = i
        elif v <= eps:
            n_lo += 1
    n = len(xs)
    if n_lo == n:
        return ALL_DECAY
    if n_hi == n:
        return ALL_GROW
    if n_hi == 1 and n_lo == n - 1:
        return Outcome.collapse_to(k)
    return UNRESOLVED


def classify_outcome(final, epsilon: float) -> Outcome:
    """
    Classify a state by thresholding its probabilities at ``epsilon``.

    ``final`` may be a StateVector or a bare probability array.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 0.5)")
    xs = final.x if isinstance(final, StateVector) else np.asarray(final, dtype=float)
    return _classify_values(xs.tolist(), epsilon)


def _rk4_reduction(rates: list, x: list, dt: float) -> list:
    # same arithmetic as rk4() on arrays, unrolled over plain floats for speed
    h = 0.5 * dt
    k1 = [c * v * (1.0 - v * v) for c, v in zip(rates, x)]
    y = [v + h * k for v, k in zip(x, k1)]
    k2 = [c * v * (1.0 - v * v) for c, v in zip(rates, y)]
    y = [v + h * k for v, k in zip(x, k2)]
    k3 = [c * v * (1.0 - v * v) for c, v in zip(rates, y)]
    y = [v + dt * k for v, k in zip(x, k3)]
    k4 = [c * v * (1.0 - v * v) for c, v in zip(rates, y)]
    s = dt / 6.0
    return [v + s * (a + 2.0 * b + 2.0 * c + d) for v, a, b, c, d in zip(x, k1, k2, k3, k4)]


def _bounded_list(x: list) -> list:
    lo = min(x)
    hi = max(x)
    if lo < -OVERSHOOT_TOL or hi > 1.0 + OVERSHOOT_TOL or not (math.isfinite(lo) and math.isfinite(hi)):
        raise StepOverflow(f"probabilities left [0, 1]: {x}; reduce dt")
    if lo < 0.0 or hi > 1.0:
        x = [min(max(v, 0.0), 1.0) for v in x]
    return x


def _run_loop(advance, x_of, theta_of, cfg: IntegratorConfig, y0):
    """Shared stepping loop: classification every step, storage every stride."""
    dt = cfg.dt
    eps = cfg.epsilon
    stride = cfg.sample_stride
    times, rows, thetas = [0.0], [list(x_of(y0))], [theta_of(y0)]
    y = y0
    outcome = _classify_values(x_of(y), eps)
    # time at which the current collapse outcome was entered
    entered = 0.0 if outcome.is_collapse else None
    i = 0
    if not (cfg.stop_on_collapse and outcome.kind is not OutcomeKind.UNRESOLVED):
        last_recorded = 0
        for i in range(1, cfg.n_steps + 1):
            y = advance(y)
            t = i * dt
            previous = outcome
            outcome = _classify_values(x_of(y), eps)
            if outcome != previous:
                entered = t if outcome.is_collapse else None
            if i % stride == 0:
                times.append(t)
                rows.append(list(x_of(y)))
                thetas.append(theta_of(y))
                last_recorded = i
            if cfg.stop_on_collapse and outcome.kind is not OutcomeKind.UNRESOLVED:
                break
        if last_recorded != i:
            times.append(i * dt)
            rows.append(list(x_of(y)))
            thetas.append(theta_of(y))
    return times, rows, thetas, outcome, entered


def _integrate_reduction(initial: StateVector, params: ModelParams, cfg: IntegratorConfig) -> Trajectory:
    alpha = alpha_vector(initial)
    rates = reduction_rates(alpha, params.g).tolist()
    dt = cfg.dt

    times, rows, _, outcome, collapse_time = _run_loop(
        advance=lambda x: _bounded_list(_rk4_reduction(rates, x, dt)),
        x_of=lambda x: x,
        theta_of=lambda x: None,
        cfg=cfg,
        y0=initial.x.tolist(),
    )
    times = np.array(times)
    xs = np.array(rows)
    # phases keep rotating freely; the signs used above were fixed at t = 0
    thetas = initial.theta[None, :] - params.omega[None, :] * times[:, None]
    return _make_trajectory(times, xs, thetas, outcome, collapse_time)


def _integrate_full(initial: StateVector, params: ModelParams, cfg: IntegratorConfig) -> Trajectory:
    n = initial.n
    omega = params.omega
    h = params.h_matrix
    frozen = params.frozen_phase
    dt = cfg.dt

    def field_fn(y):
        theta_dot, x_dot = _full_field(y[n:], y[:n], omega, h)
        if frozen:
            theta_dot = np.zeros(n)
        return np.concatenate([x_dot, theta_dot])

    def advance(y):
        y_new = rk4(field_fn, y, dt)
        y_new[:n] = _bounded(y_new[:n])
        if frozen:
            # phases are held exactly, not integrated
            y_new[n:] = y[n:]
        return y_new

    times, rows, thetas, outcome, collapse_time = _run_loop(
        advance=advance,
        x_of=lambda y: y[:n].tolist(),
        theta_of=lambda y: y[n:].copy(),
        cfg=cfg,
        y0=np.concatenate([initial.x, initial.theta]),
    )
    return _make_trajectory(np.array(times), np.array(rows), np.array(thetas), outcome, collapse_time)


def _make_trajectory(times, xs, thetas, outcome, collapse_time) -> Trajectory:
    for arr in (times, xs, thetas):
        arr.setflags(write=False)
    norm = xs.sum(axis=1)
    q = xs[:, 0] - xs[:, 1] if xs.shape[1] == 2 else None
    return Trajectory(
        times=times,
        x=xs,
        theta=thetas,
        norm_series=norm,
        outcome=outcome,
        collapse_time=collapse_time,
        q_series=q,
    )


def integrate(law: Law | str, initial: StateVector, params: ModelParams, cfg: IntegratorConfig) -> Trajectory:
    """
    Integrate one trajectory under the chosen law of motion.

    Under ``Law.REDUCTION`` the phase signs and couplings are computed once
    from ``initial.theta`` and held fixed; phases themselves rotate at
    ``-omega``. Integration stops at the first step where the state
    classifies as anything other than unresolved (unless
    ``cfg.stop_on_collapse`` is off) or at ``t_max``.
    """
    law = Law(law)
    if initial.n != params.n:
        raise ValueError(f"state has {initial.n} components, params expect {params.n}")
    if law is Law.REDUCTION:
        return _integrate_reduction(initial, params, cfg)
    return _integrate_full(initial, params, cfg)


def reduction_time_analytic(x0: float, lam: float, epsilon: float) -> float:
    """
    Time for ``u = x**2`` to cross its threshold under logistic rate ``lam``.

    A growing component (``lam > 0``) stops at ``u = 1 - epsilon``, a decaying
    one at ``u = epsilon``::

        t = ln[((1 - u0)/u0) ((1 - eps)/eps)] / |lam|     (growing)
        t = ln[(u0/(1 - u0)) ((1 - eps)/eps)] / |lam|     (decaying)
    """
    if not 0.0 < x0 < 1.0:
        raise DegenerateInitial(f"x0={x0!r} must lie strictly inside (0, 1)")
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 0.5)")
    u0 = x0 * x0
    if lam > 0:
        target = 1.0 - epsilon
        if u0 == target:
            return 0.0
        if u0 > target:
            raise DegenerateInitial(f"x0^2={u0} already past the growth threshold {target}")
        odds = (1.0 - u0) / u0
    else:
        if u0 == epsilon:
            return 0.0
        if u0 < epsilon:
            raise DegenerateInitial(f"x0^2={u0} already below the decay threshold {epsilon}")
        odds = u0 / (1.0 - u0)
    return math.log(odds * (1.0 - epsilon) / epsilon) / abs(lam)


def collapse_time_analytic(x0: Sequence[float], lams: Sequence[float], epsilon: float) -> float:
    """
    Predicted first time at which `classify_outcome` reports a collapse.

    Classification thresholds act on ``x`` (``x >= 1 - eps`` / ``x <= eps``);
    these are mapped onto the ``u = x**2`` thresholds of
    `reduction_time_analytic`. The latest component decides.
    """
    times = []
    for x, lam in zip(x0, lams):
        if lam > 0:
            if x >= 1.0 - epsilon:
                times.append(0.0)
            else:
                times.append(reduction_time_analytic(x, lam, 1.0 - (1.0 - epsilon) ** 2))
        elif lam < 0:
            if x <= epsilon:
                times.append(0.0)
            else:
                times.append(reduction_time_analytic(x, lam, epsilon**2))
        else:
            raise ValueError("a component with zero rate never reaches a threshold")
    return max(times)
