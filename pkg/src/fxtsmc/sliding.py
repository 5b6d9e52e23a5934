"""Integral sliding variable s = z + alpha1 * integral(exp(z^2) |z|^(p/q) sign(z)).

The integral starts empty, so s equals the tracking error at t=0 and the
closed loop begins directly on the surface s=z. The accumulator is advanced
with explicit-Euler increments using the plant integrator's step (even when
the plant itself is stepped with rk4): the controller cancels this exact
discrete term, and a higher-order quadrature here would inject an artificial
disturbance into the s-dynamics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SimulationDivergedError
from .numerics import safe_exp, signed_power


@dataclass(frozen=True)
class SlidingParams:
    """Per-channel surface parameters: gain alpha1 > 0 and exponent p/q in [0, 1).

    p and q are kept as integers; the exponent used everywhere is the real
    quotient p/q. p = 0 (pure sign integrand) is allowed.
    """

    alpha1: float
    p: int
    q: int

    def __post_init__(self):
        if not (np.isfinite(self.alpha1) and self.alpha1 > 0.0):
            raise ParameterError(f"alpha1 must be positive, got {self.alpha1}")
        if not (isinstance(self.p, (int, np.integer)) and isinstance(self.q, (int, np.integer))):
            raise ParameterError("p and q must be integers")
        if self.p < 0 or self.q < 1:
            raise ParameterError(f"need p >= 0 and q >= 1, got p={self.p}, q={self.q}")
        if not self.p / self.q < 1.0:
            raise ParameterError(
                f"exponent p/q must satisfy 0 <= p/q < 1, got {self.p}/{self.q}"
            )

    @property
    def exponent(self) -> float:
        return self.p / self.q


@dataclass(frozen=True)
class SlidingState:
    """Accumulated integral (scalar, or one entry per channel) at time t."""

    integral: float | np.ndarray = 0.0
    t: float = 0.0


def integrand(z, params: SlidingParams):
    """exp(z^2) * |z|^(p/q) * sign(z), elementwise over z."""
    return safe_exp(z * z) * signed_power(z, params.exponent)


def advance(state: SlidingState, z, params: SlidingParams, h: float) -> SlidingState:
    """One explicit-Euler accumulation step of size h > 0."""
    if not h > 0.0:
        raise ParameterError(f"step h must be positive, got {h}")
    integral = state.integral + h * integrand(z, params)
    if not np.all(np.isfinite(integral)):
        raise SimulationDivergedError(
            f"sliding integral became non-finite at t={state.t + h}", t=state.t + h
        )
    return SlidingState(integral=integral, t=state.t + h)


def sliding_value(z, state: SlidingState, params: SlidingParams):
    """s = z + alpha1 * integral."""
    return z + params.alpha1 * state.integral
