"""Scalar numeric primitives: signed powers, a clamped exponential, and
fixed-step explicit integration steps.

Everything here accepts either floats or numpy arrays and operates
elementwise, so the same primitives serve both scalar unit tests and the
vectorized simulation loop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SimulationDivergedError

# exp(50) ~ 5.18e21: comfortably representable, so exp(z^2)-weighted terms
# stay finite even when |z| transiently exceeds ~7.
EXP_CLAMP = 50.0

_METHODS = ("euler", "rk4")

# Relative slack when checking that t_end sits on the step grid.
_GRID_RTOL = 1e-9


def signed_power(x, alpha):
    """Signed power |x|**alpha * sign(x), with sign(0) taken as 0.

    For alpha = 0 this is the sign function itself (0 at the origin), which
    keeps the controller quiescent at exact equilibrium.
    """
    if np.any(np.asarray(alpha) < 0.0):
        raise ParameterError(f"signed_power exponent must be >= 0, got {alpha}")
    return np.abs(x) ** alpha * np.sign(x)


def safe_exp(x):
    """exp(x) with the argument clamped at EXP_CLAMP so the result is finite."""
    return np.exp(np.minimum(x, EXP_CLAMP))


@dataclass(frozen=True)
class StepConfig:
    """Fixed-step integration settings.

    ``t_end`` must land on the step grid: the number of steps is
    round(t_end / step_size), and t_end must equal that multiple of
    step_size to within a 1e-9 relative tolerance.
    """

    step_size: float
    t_end: float
    method: str = "euler"

    def __post_init__(self):
        if not (self.step_size > 0.0 and np.isfinite(self.step_size)):
            raise ParameterError(f"step_size must be positive, got {self.step_size}")
        if not (self.t_end >= 0.0 and np.isfinite(self.t_end)):
            raise ParameterError(f"t_end must be >= 0, got {self.t_end}")
        if self.method == "explicit-euler":
            object.__setattr__(self, "method", "euler")
        if self.method not in _METHODS:
            raise ParameterError(f"method must be one of {_METHODS}, got {self.method!r}")
        n = round(self.t_end / self.step_size)
        if abs(n * self.step_size - self.t_end) > _GRID_RTOL * max(1.0, self.t_end):
            raise ParameterError(
                f"t_end={self.t_end} is not an integer multiple of step_size={self.step_size}"
            )

    @property
    def n_steps(self) -> int:
        return round(self.t_end / self.step_size)


def _check_finite(dx, t):
    if not np.all(np.isfinite(dx)):
        bad = int(np.argmin(np.isfinite(np.atleast_1d(dx))))
        raise SimulationDivergedError(
            f"non-finite derivative in channel {bad} at t={t}", t=t, channel=bad
        )


def euler_delta(deriv, x, t, h):
    """State increment of one explicit-Euler step of size h."""
    dx = deriv(x, t)
    _check_finite(dx, t)
    return h * dx


def rk4_delta(deriv, x, t, h):
    """State increment of one classical Runge-Kutta step of size h."""
    k1 = deriv(x, t)
    _check_finite(k1, t)
    k2 = deriv(x + 0.5 * h * k1, t + 0.5 * h)
    _check_finite(k2, t + 0.5 * h)
    k3 = deriv(x + 0.5 * h * k2, t + 0.5 * h)
    _check_finite(k3, t + 0.5 * h)
    k4 = deriv(x + h * k3, t + h)
    _check_finite(k4, t + h)
    return (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_step(state, deriv, t, cfg: StepConfig):
    """Advance ``state`` by one step of the configured method.

    ``deriv(x, t)`` must return the state derivative; a non-finite component
    raises SimulationDivergedError carrying t and the channel index.
    """
    x = np.asarray(state, dtype=float)
    if cfg.method == "euler":
        return x + euler_delta(deriv, x, t, cfg.step_size)
    return x + rk4_delta(deriv, x, t, cfg.step_size)
