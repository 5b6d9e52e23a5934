"""Perturbed controlled systems: x_i' = f_i(x) + g_i(x) u_i + d_i(t).

The gain is diagonal (each u_i enters only its own channel), so drift, gain,
and perturbation are all plain vector-valued callables. Benchmark instances
are code-defined through the same interface user systems use.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import pi, sqrt
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError, ParameterError, SingularGainError
from .numerics import safe_exp

SQRT_PI_HALF = sqrt(pi) / 2.0


@dataclass(frozen=True)
class SystemModel:
    """A perturbed system with drift f(x), diagonal gain g(x), perturbation d(t).

    ``perturbation_bounds`` is optional; when declared, simulation runs assert
    |d_i(t)| <= bound_i on every grid point they sample.
    """

    n: int
    drift: Callable[[np.ndarray], np.ndarray]
    gain: Callable[[np.ndarray], np.ndarray]
    perturbation: Callable[[float], np.ndarray]
    perturbation_bounds: Optional[np.ndarray] = None
    name: str = "custom"

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"system dimension must be >= 1, got {self.n}")
        if self.perturbation_bounds is not None:
            b = np.asarray(self.perturbation_bounds, dtype=float)
            if b.shape != (self.n,):
                raise ParameterError(
                    f"perturbation_bounds must have shape ({self.n},), got {b.shape}"
                )
            if np.any(b < 0.0):
                raise ParameterError("perturbation_bounds must be non-negative")
            object.__setattr__(self, "perturbation_bounds", b)


@dataclass(frozen=True)
class ReferenceSignal:
    """Reference trajectory x_d(t) and its time derivative."""

    value: Callable[[float], np.ndarray]
    derivative: Callable[[float], np.ndarray]


def zero_reference(n: int) -> ReferenceSignal:
    """Constant-zero reference (pure stabilization)."""
    zeros = np.zeros(n)
    return ReferenceSignal(value=lambda t: zeros, derivative=lambda t: zeros)


def constant_reference(value) -> ReferenceSignal:
    v = np.asarray(value, dtype=float)
    zeros = np.zeros_like(v)
    return ReferenceSignal(value=lambda t: v, derivative=lambda t: zeros)


def sinusoid_reference(amplitude, frequency, phase=None) -> ReferenceSignal:
    """Per-channel x_d_i(t) = A_i sin(w_i t + phi_i)."""
    a = np.asarray(amplitude, dtype=float)
    w = np.asarray(frequency, dtype=float)
    ph = np.zeros_like(a) if phase is None else np.asarray(phase, dtype=float)
    if not (a.shape == w.shape == ph.shape):
        raise ParameterError("amplitude, frequency, and phase must share one shape")
    return ReferenceSignal(
        value=lambda t: a * np.sin(w * t + ph),
        derivative=lambda t: a * w * np.cos(w * t + ph),
    )


def check_gain(g, x, n):
    """Raise SingularGainError if any channel gain is zero (or non-finite)."""
    g = np.asarray(g, dtype=float)
    ok = np.isfinite(g) & (g != 0.0)
    if not ok.all():
        ch = int(np.argmin(ok))
        raise SingularGainError(
            f"gain g_{ch + 1}(x) = {g[ch]} at x = {np.asarray(x)}", channel=ch
        )
    return g


def eval_dynamics(model: SystemModel, x, u, t: float) -> np.ndarray:
    """Evaluate f(x) + g(x)*u + d(t) with the gain checked channelwise."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (model.n,) or u.shape != (model.n,):
        raise ParameterError(
            f"state and input must have shape ({model.n},), got {x.shape} and {u.shape}"
        )
    g = check_gain(model.gain(x), x, model.n)
    dx = model.drift(x) + g * u + model.perturbation(t)
    if not np.all(np.isfinite(dx)):
        ch = int(np.argmin(np.isfinite(dx)))
        raise EvaluationError(
            f"non-finite dynamics component in channel {ch + 1} at t={t}", channel=ch
        )
    return dx


# --- benchmark: permanent magnet synchronous motor (3-state chaotic system) ---

# Gain set used throughout the benchmark literature for this plant.
PMSM_STANDARD_GAINS = {"alpha1": 6.0, "alpha2": 4.0, "p": 8, "q": 10, "d_bar": 1.0}

# Reference settling-time values quoted alongside this gain set. The z-entry
# is reproduced exactly by theorem1_z_bound; the s-entries are NOT produced by
# any of the bound formulas implemented here (a known discrepancy that
# cmd_bounds reports explicitly) and are kept only for comparison.
PMSM_QUOTED_BOUNDS = {
    "t_z_channel": 0.92593,
    "t_s_channel": 2.8284,
    "t_z": 0.92593,
    "t_s": 0.57364,
    "t_max": 3.7544,
}


def _pmsm_drift(x):
    return np.array(
        [
            2.5 * (x[1] - x[0]),
            -x[1] - x[2] * x[0] + 25.0 * x[0],
            -x[2] + x[0] * x[1],
        ]
    )


_PMSM_ONES = np.ones(3)


def _pmsm_gain(x):
    return _PMSM_ONES


def _pmsm_perturbation(t):
    return np.array(
        [np.sin(10.0 * t), np.cos(10.0 * t), np.cos(10.0 * t) * np.sin(4.0 * t)]
    )


def make_pmsm(perturbed: bool = True) -> SystemModel:
    """The 3-state motor benchmark with unit gains and bounded perturbations.

    ``perturbed=False`` drops the matched disturbances (bounds become zero),
    which is the configuration used to isolate the reaching law in tests.
    """
    if perturbed:
        return SystemModel(
            n=3,
            drift=_pmsm_drift,
            gain=_pmsm_gain,
            perturbation=_pmsm_perturbation,
            perturbation_bounds=np.ones(3),
            name="pmsm",
        )
    zeros = np.zeros(3)
    return SystemModel(
        n=3,
        drift=_pmsm_drift,
        gain=_pmsm_gain,
        perturbation=lambda t: zeros,
        perturbation_bounds=np.zeros(3),
        name="pmsm-unperturbed",
    )


# --- benchmark: scalar fixed-time validation plant --------------------------


def make_lemma2_plant(alpha: float) -> SystemModel:
    """Scalar plant x' = -alpha*(sqrt(pi)/2)*exp(x^2)*sign(x), run open loop.

    With zero perturbation its settling time from x0 is erf(|x0|)/alpha
    (substitute y = erf(x), which turns the dynamics into y' = -alpha*sign(y)),
    which makes it the analytic oracle used by the validation suite.
    """
    if not alpha > 0.0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    coef = alpha * SQRT_PI_HALF

    def drift(x):
        return -coef * safe_exp(x * x) * np.sign(x)

    ones = np.ones(1)
    zeros = np.zeros(1)
    return SystemModel(
        n=1,
        drift=drift,
        gain=lambda x: ones,
        perturbation=lambda t: zeros,
        perturbation_bounds=np.zeros(1),
        name="lemma2",
    )
