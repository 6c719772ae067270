"""Exception types raised by the collapse model and its tooling."""

from __future__ import annotations


class CollapseError(Exception):
    """Base class for all errors raised by this package."""


class SingularPhase(CollapseError, ValueError):
    """A phase with cos(theta) == 0 was used where a sign is required."""

    def __init__(self, theta: float, index: int | None = None):
        self.theta = theta
        self.index = index
        where = "" if index is None else f" at index {index}"
        super().__init__(f"singular phase{where}: theta={theta!r} has |cos(theta)| ~ 0")


class DegenerateInitial(CollapseError, ValueError):
    """Initial probability sits on (or past) a fixed point / threshold."""


class WrongDimension(CollapseError, ValueError):
    """Operation requires a different number of basis states."""


class StepOverflow(CollapseError, ArithmeticError):
    """An integration step pushed a probability outside [0, 1]."""


class DimensionTooLarge(CollapseError, ValueError):
    """Sign-configuration enumeration would be too large."""


class LowExpectedCount(CollapseError, ValueError):
    """Chi-square test requested with expected counts below 5."""
