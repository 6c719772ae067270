"""
Core equations of the chaotic-phase reduction model.

A state is held in polar form, c_n = sqrt(x_n) exp(i theta_n). Two laws of
motion are provided:

- the coupled phase/probability dynamics driven by an interaction matrix
  (`full_rhs`), optionally with frozen phases;
- the nonlinear reduction law ``dx_n/dt = g f_n alpha_n x_n (1 - x_n**2)``
  (`reduction_rhs`), where the signs ``alpha_n`` of ``cos(theta_n)`` are read
  off once at collapse onset and the coupling ``f_n`` is built from
  Heaviside steps of the other signs.

`closed_form_x` is the analytic solution of the reduction law, available
under two rate conventions (see `RateConvention`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInitial, SingularPhase, WrongDimension

__all__ = [
    "SINGULAR_TOLERANCE",
    "RateConvention",
    "PhaseMode",
    "StateVector",
    "ModelParams",
    "AlphaVector",
    "heaviside_plus",
    "alpha_from_phase",
    "alpha_vector",
    "coupling_f",
    "coupling_vector",
    "reduction_rates",
    "logistic_rate",
    "reduction_rhs",
    "full_rhs",
    "closed_form_x",
    "q_value",
    "norm_drift",
]

SINGULAR_TOLERANCE = 1e-12


class RateConvention(enum.Enum):
    """Exponent used by the closed-form solution.

    ``AS_PRINTED`` uses ``lambda = g f alpha``; differentiating that form gives
    back the reduction law at *half* its rate. ``ODE_CONSISTENT`` uses
    ``lambda = 2 g f alpha`` and solves the reduction law exactly.
    """

    AS_PRINTED = "as-printed"
    ODE_CONSISTENT = "ode-consistent"


class PhaseMode(enum.Enum):
    """Whether one random phase drives every state or each state has its own."""

    INDEPENDENT = "independent"
    COMMON = "common"


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    """Probabilities ``x`` and phases ``theta`` over an N-state eigenbasis."""

    x: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        x = _readonly(self.x)
        theta = _readonly(self.theta)
        if x.ndim != 1 or theta.ndim != 1 or x.shape != theta.shape:
            raise WrongDimension(
                f"x and theta must be 1-d of equal length, got {x.shape} and {theta.shape}"
            )
        if x.size < 2:
            raise WrongDimension(f"need at least 2 states, got {x.size}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        if not np.all((x >= 0.0) & (x <= 1.0)):
            raise ValueError(f"probabilities must lie in [0, 1], got {x.tolist()}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "theta", theta)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def norm(self) -> float:
        return float(self.x.sum())

    def __eq__(self, other):
        if not isinstance(other, StateVector):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.theta, other.theta)

    __hash__ = None

    def __repr__(self):
        return f"StateVector(x={self.x.tolist()}, theta={self.theta.tolist()})"


@dataclass(frozen=True, eq=False)
class ModelParams:
    """
    Parameters shared by both laws of motion.

    Attributes
    ----------
    omega : array, shape (N,)
        Eigenfrequencies of the unobserved Hamiltonian.
    h_matrix : array, shape (N, N)
        Real interaction matrix elements <phi_n|H|phi_m>.
    g : float
        Interaction strength multiplying the reduction law (1/time).
    rate_convention : RateConvention
    phase_mode : PhaseMode
    frozen_phase : bool
        If set, the full dynamics keep every phase fixed.
    """

    omega: np.ndarray
    h_matrix: np.ndarray
    g: float = 1.0
    rate_convention: RateConvention = RateConvention.ODE_CONSISTENT
    phase_mode: PhaseMode = PhaseMode.INDEPENDENT
    frozen_phase: bool = False

    def __post_init__(self):
        omega = _readonly(self.omega)
        h = _readonly(self.h_matrix)
        if omega.ndim != 1:
            raise WrongDimension("omega must be 1-d")
        n = omega.size
        if h.shape != (n, n):
            raise WrongDimension(f"h_matrix must be {n}x{n}, got {h.shape}")
        if not (math.isfinite(self.g) and self.g > 0):
            raise ValueError(f"g must be positive, got {self.g!r}")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "h_matrix", h)
        object.__setattr__(self, "g", float(self.g))
        object.__setattr__(self, "rate_convention", RateConvention(self.rate_convention))
        object.__setattr__(self, "phase_mode", PhaseMode(self.phase_mode))

    @classmethod
    def free(cls, n: int, **kwargs) -> ModelParams:
        """Parameters with zero frequencies and no interaction matrix."""
        return cls(omega=np.zeros(n), h_matrix=np.zeros((n, n)), **kwargs)

    @property
    def n(self) -> int:
        return self.omega.size

    def is_symmetric(self, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.h_matrix, self.h_matrix.T, rtol=0.0, atol=atol))

    def to_dict(self) -> dict:
        return {
            "omega": self.omega.tolist(),
            "h_matrix": self.h_matrix.tolist(),
            "g": self.g,
            "rate_convention": self.rate_convention.value,
            "phase_mode": self.phase_mode.value,
            "frozen_phase": self.frozen_phase,
        }


@dataclass(frozen=True)
class AlphaVector:
    """Signs of cos(theta_n) taken at collapse onset; entries are +1 or -1."""

    alpha: tuple[int, ...]

    def __post_init__(self):
        alpha = tuple(int(a) for a in self.alpha)
        if len(alpha) < 2:
            raise WrongDimension("alpha needs at least 2 entries")
        if any(a not in (-1, 1) for a in alpha):
            raise ValueError(f"alpha entries must be +1 or -1, got {alpha}")
        object.__setattr__(self, "alpha", alpha)

    def __len__(self):
        return len(self.alpha)

    def __iter__(self):
        return iter(self.alpha)

    def __getitem__(self, i):
        return self.alpha[i]


def heaviside_plus(v: float) -> int:
    """Unit step with the convention that the step at zero is 0."""
    return 1 if v > 0 else 0


def alpha_from_phase(theta: float, tol: float = SINGULAR_TOLERANCE) -> int:
    c = math.cos(theta)
    if abs(c) <= tol:
        raise SingularPhase(theta)
    return 1 if c > 0 else -1


def alpha_vector(state: StateVector | np.ndarray, tol: float = SINGULAR_TOLERANCE) -> AlphaVector:
    """Per-component phase signs. Accepts a StateVector or a bare phase array."""
    theta = state.theta if isinstance(state, StateVector) else np.asarray(state, dtype=float)
    signs = []
    for i, th in enumerate(theta):
        try:
            signs.append(alpha_from_phase(float(th), tol))
        except SingularPhase as exc:
            raise SingularPhase(exc.theta, index=i) from None
    return AlphaVector(tuple(signs))


def coupling_f(n: int, alpha: AlphaVector) -> float:
    """
    Coupling between state ``n`` and the signs of all other states.

    Evaluated term by term::

        f_n = [1 - 2 S] a_n + [1 - S] H(sum_{k!=n} (1 - H(-a_k))) [1 - a_n]

    with ``S = sum_{k!=n} H(a_k)`` and ``H`` the step with ``H(0) = 0``.
    """
    a = tuple(alpha)
    if not 0 <= n < len(a):
        raise IndexError(f"state index {n} out of range for N={len(a)}")
    others = [a[k] for k in range(len(a)) if k != n]
    s_pos = sum(heaviside_plus(ak) for ak in others)
    s_not_neg = sum(1 - heaviside_plus(-ak) for ak in others)
    first = (1 - 2 * s_pos) * a[n]
    second = (1 - s_pos) * heaviside_plus(s_not_neg) * (1 - a[n])
    return float(first + second)


def coupling_vector(alpha: AlphaVector) -> np.ndarray:
    return _readonly([coupling_f(n, alpha) for n in range(len(alpha))])


def reduction_rates(alpha: AlphaVector, g: float = 1.0) -> np.ndarray:
    """Per-component prefactor ``g f_n alpha_n`` of the reduction law."""
    f = coupling_vector(alpha)
    return g * f * np.asarray(alpha.alpha, dtype=float)


def logistic_rate(
    g: float,
    f: float,
    alpha: float,
    convention: RateConvention = RateConvention.ODE_CONSISTENT,
) -> float:
    """Exponent ``lambda`` of the closed form; ``u = x**2`` grows logistically at this rate."""
    base = g * f * alpha
    if RateConvention(convention) is RateConvention.ODE_CONSISTENT:
        return 2.0 * base
    return base


def reduction_rhs(x, alpha: AlphaVector, f, g: float = 1.0) -> np.ndarray:
    """dx_n/dt = g f_n alpha_n x_n (1 - x_n^2)."""
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    a = np.asarray(tuple(alpha), dtype=float)
    if not (x.shape == f.shape == a.shape):
        raise WrongDimension("x, alpha and f must share one length")
    if g <= 0:
        raise ValueError("g must be positive")
    return g * f * a * x * (1.0 - x * x)


def _full_field(theta: np.ndarray, x: np.ndarray, omega: np.ndarray, h: np.ndarray):
    # diff[n, m] = theta_m - theta_n; sin(0) is exactly 0 on the diagonal
    diff = theta[None, :] - theta[:, None]
    xp = np.maximum(x, 0.0)
    amp = h * np.sqrt(np.outer(xp, xp))
    theta_dot = -omega - (amp * np.cos(diff)).sum(axis=1)
    x_dot = (amp * np.sin(diff)).sum(axis=1)
    return theta_dot, x_dot


def full_rhs(state: StateVector, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """
    Coupled phase and probability derivatives.

    Returns ``(theta_dot, x_dot)`` with

        theta_dot_n = -omega_n - sum_m H_nm sqrt(x_m x_n) cos(theta_m - theta_n)
        x_dot_n     =            sum_m H_nm sqrt(x_m x_n) sin(theta_m - theta_n)

    The diagonal ``m == n`` is kept. With ``params.frozen_phase`` the phase
    derivative is identically zero.
    """
    if state.n != params.n:
        raise WrongDimension(f"state has {state.n} components, params expect {params.n}")
    theta_dot, x_dot = _full_field(state.theta, state.x, params.omega, params.h_matrix)
    if params.frozen_phase:
        theta_dot = np.zeros_like(theta_dot)
    return theta_dot, x_dot


def closed_form_x(
    t,
    x0: float,
    f: float,
    alpha: float,
    g: float = 1.0,
    convention: RateConvention = RateConvention.ODE_CONSISTENT,
):
    """
    Analytic solution of a single reduction component.

    ``x(t) = 1 / sqrt(1 + (1 - x0^2)/x0^2 * exp(-lambda t))`` with ``lambda``
    from `logistic_rate`. ``t`` may be a scalar or an array.
    """
    if x0 <= 0.0 or x0 >= 1.0:
        raise DegenerateInitial(f"x0={x0!r} is a fixed point; closed form undefined")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("closed form is only defined forward in time")
    lam = logistic_rate(g, f, alpha, convention)
    ratio = (1.0 - x0 * x0) / (x0 * x0)
    with np.errstate(over="ignore"):
        out = 1.0 / np.sqrt(1.0 + ratio * np.exp(-lam * t_arr))
    if out.ndim == 0:
        return float(out)
    return out


def q_value(state: StateVector) -> float:
    if state.n != 2:
        raise WrongDimension(f"q is defined for two states only, got N={state.n}")
    return float(state.x[0] - state.x[1])


def norm_drift(x_dot) -> float:
    """Rate of change of sum(x) implied by a probability derivative."""
    return float(np.sum(x_dot))
