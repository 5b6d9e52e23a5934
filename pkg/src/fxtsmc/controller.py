"""Control laws and settling-time bounds.

Two laws share one structure: the control cancels the (known or estimated)
drift and the reference velocity, adds the surface-defining term
alpha1*exp(z^2)*|z|^(p/q)*sign(z), and drives s with a reaching term
kappa*alpha2*exp(s^2)*sign(s). For the known-model law kappa = sqrt(pi)/2;
the estimated-drift law omits that factor by default (selectable per channel
via ``include_sqrt_pi_factor``).

The bound calculators cover each closed-form settling-time estimate, with the
s-phase bound of the learned-model case available in two variants (see
``theorem2_s_bound``).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import pi, sqrt
from typing import Optional, Sequence

import numpy as np

from .errors import GainTooSmallError, ParameterError
from .numerics import safe_exp, signed_power
from .sliding import SlidingParams, SlidingState
from .system import ReferenceSignal, SystemModel, check_gain

TWO_OVER_SQRT_PI = 2.0 / sqrt(pi)
SQRT_PI_HALF = sqrt(pi) / 2.0

S_BOUND_MODES = ("lemma3", "printed-t8")


@dataclass(frozen=True)
class ControllerParams:
    """One channel's gains.

    ``alpha2`` must exceed (2/sqrt(pi)) * d_bar — the margin that dominates
    the bounded perturbation in the reaching dynamics. The learned-model gain
    condition alpha2 > d_bar + delta_f_bar involves the model error and is
    checked where that bound is computed, not here.

    ``sign_boundary_layer`` epsilon >= 0 smooths sign(s) into tanh(s/epsilon)
    to trade exactness for less chattering; 0 keeps the true sign.
    """

    sliding: SlidingParams
    alpha2: float
    d_bar: float = 0.0
    include_sqrt_pi_factor: bool = True
    sign_boundary_layer: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha2) and self.alpha2 > 0.0):
            raise ParameterError(f"alpha2 must be positive, got {self.alpha2}")
        if not (np.isfinite(self.d_bar) and self.d_bar >= 0.0):
            raise ParameterError(f"d_bar must be >= 0, got {self.d_bar}")
        if not self.alpha2 > TWO_OVER_SQRT_PI * self.d_bar:
            raise GainTooSmallError(
                f"need alpha2 > (2/sqrt(pi))*d_bar = {TWO_OVER_SQRT_PI * self.d_bar:.6g}, "
                f"got alpha2 = {self.alpha2}"
            )
        if not self.sign_boundary_layer >= 0.0:
            raise ParameterError(
                f"sign_boundary_layer must be >= 0, got {self.sign_boundary_layer}"
            )


def _as_channel_list(params, n: int) -> list[ControllerParams]:
    """Accept one ControllerParams (shared by all channels) or a length-n sequence."""
    if isinstance(params, ControllerParams):
        return [params] * n
    params = list(params)
    if len(params) != n:
        raise ParameterError(f"expected {n} channel parameter sets, got {len(params)}")
    return params


class LawArrays:
    """Per-channel gains flattened into arrays for the simulation hot loop."""

    __slots__ = ("alpha1", "exponent", "alpha2", "kappa", "eps", "d_bar", "reach_gain")

    def __init__(self, channels: Sequence[ControllerParams]):
        self.alpha1 = np.array([c.sliding.alpha1 for c in channels])
        self.exponent = np.array([c.sliding.exponent for c in channels])
        self.alpha2 = np.array([c.alpha2 for c in channels])
        self.kappa = np.array(
            [SQRT_PI_HALF if c.include_sqrt_pi_factor else 1.0 for c in channels]
        )
        self.eps = np.array([c.sign_boundary_layer for c in channels])
        self.d_bar = np.array([c.d_bar for c in channels])
        self.reach_gain = self.kappa * self.alpha2


def sign_or_layer(s, eps):
    """sign(s), or the boundary-layer approximation tanh(s/eps) where eps > 0."""
    eps = np.asarray(eps, dtype=float)
    if np.all(eps == 0.0):
        return np.sign(s)
    out = np.sign(s) * 1.0
    layered = eps > 0.0
    return np.where(layered, np.tanh(s / np.where(layered, eps, 1.0)), out)


def reach_term(s, arrays: LawArrays):
    """kappa * alpha2 * exp(s^2) * sign_or_layer(s), elementwise."""
    return arrays.reach_gain * safe_exp(s * s) * sign_or_layer(s, arrays.eps)


def law_from_terms(f, g, integ, xd_dot, reach, arrays: LawArrays):
    """u = -(f + alpha1*integ - xd_dot + reach) / g, sharing ``integ`` with the
    sliding accumulator so the discrete cancellation is exact."""
    return -(f + arrays.alpha1 * integ - xd_dot + reach) / g


def control_known(
    x,
    t: float,
    model: SystemModel,
    ref: ReferenceSignal,
    params,
    sstate: SlidingState,
) -> np.ndarray:
    """Known-model law: cancels f(x) exactly; reaching factor sqrt(pi)/2 applies."""
    x = np.asarray(x, dtype=float)
    channels = _as_channel_list(params, model.n)
    arrays = LawArrays(channels)
    z = x - ref.value(t)
    integ = safe_exp(z * z) * signed_power(z, arrays.exponent)
    s = z + arrays.alpha1 * np.asarray(sstate.integral, dtype=float)
    g = check_gain(model.gain(x), x, model.n)
    return law_from_terms(
        model.drift(x), g, integ, ref.derivative(t), reach_term(s, arrays), arrays
    )


def control_gp(
    x,
    t: float,
    gp_models,
    gain,
    ref: ReferenceSignal,
    params,
    sstate: SlidingState,
) -> np.ndarray:
    """Learned-model law: drift replaced by the per-channel posterior means."""
    from .gp import estimate_drift

    x = np.asarray(x, dtype=float)
    n = len(gp_models)
    channels = _as_channel_list(params, n)
    arrays = LawArrays(channels)
    z = x - ref.value(t)
    integ = safe_exp(z * z) * signed_power(z, arrays.exponent)
    s = z + arrays.alpha1 * np.asarray(sstate.integral, dtype=float)
    g = check_gain(gain(x), x, n)
    return law_from_terms(
        estimate_drift(gp_models, x), g, integ, ref.derivative(t),
        reach_term(s, arrays), arrays,
    )


# --- settling-time bounds ----------------------------------------------------


def lemma1_bound(c1: float, c2: float, h1: float, h2: float) -> float:
    """1/(c1(1-h1)) + 1/(c2(h2-1)) for c1,c2 > 0, 0 < h1 < 1 < h2."""
    if not (c1 > 0.0 and c2 > 0.0):
        raise ParameterError(f"need c1, c2 > 0, got c1={c1}, c2={c2}")
    if not (0.0 < h1 < 1.0 < h2):
        raise ParameterError(f"need 0 < h1 < 1 < h2, got h1={h1}, h2={h2}")
    return 1.0 / (c1 * (1.0 - h1)) + 1.0 / (c2 * (h2 - 1.0))


def lemma2_bound(alpha: float, d_bar: float) -> float:
    """1/(alpha - (2/sqrt(pi)) d_bar): settling bound of the reaching dynamics."""
    if not d_bar >= 0.0:
        raise ParameterError(f"d_bar must be >= 0, got {d_bar}")
    margin = alpha - TWO_OVER_SQRT_PI * d_bar
    if not margin > 0.0:
        raise GainTooSmallError(
            f"need alpha > (2/sqrt(pi))*d_bar = {TWO_OVER_SQRT_PI * d_bar:.6g}, got alpha = {alpha}"
        )
    return 1.0 / margin


def theorem1_z_bound(alpha1: float, p: int, q: int) -> float:
    """(2/alpha1) / (1 - (p/q)^2): on-surface error settling bound."""
    if not alpha1 > 0.0:
        raise ParameterError(f"alpha1 must be positive, got {alpha1}")
    if q < 1 or p < 0 or not p / q < 1.0:
        raise ParameterError(f"exponent p/q must lie in [0, 1), got {p}/{q}")
    r = p / q
    return (2.0 / alpha1) / (1.0 - r * r)


def lemma3_bound(a: float) -> float:
    """-(2*sqrt(2)+1)/(2A) for A < 0, from V' <= |z| A exp(z^2) with V = z^2/2."""
    if not a < 0.0:
        raise ParameterError(f"need A < 0, got A={a}")
    return -(2.0 * sqrt(2.0) + 1.0) / (2.0 * a)


def theorem2_s_bound(
    alpha2: float, d_bar: float, delta_f_bar: float, mode: str = "lemma3"
) -> float:
    """s-phase settling bound under drift-estimate error |f - fhat| <= delta_f_bar.

    mode "lemma3" (default) applies lemma3_bound to A = -(alpha2 - d_bar -
    delta_f_bar), giving (2*sqrt(2)+1)/(2(alpha2-d_bar-delta_f_bar)). mode
    "printed-t8" uses the commonly quoted constant 2*sqrt(2) in the numerator
    instead; both are exposed because the two disagree by a constant factor.
    """
    if mode not in S_BOUND_MODES:
        raise ParameterError(f"mode must be one of {S_BOUND_MODES}, got {mode!r}")
    if not delta_f_bar >= 0.0:
        raise ParameterError(f"delta_f_bar must be >= 0, got {delta_f_bar}")
    margin = alpha2 - d_bar - delta_f_bar
    if not margin > 0.0:
        raise GainTooSmallError(
            f"need alpha2 > d_bar + delta_f_bar = {d_bar + delta_f_bar:.6g}, "
            f"got alpha2 = {alpha2}"
        )
    if mode == "lemma3":
        return lemma3_bound(-margin)
    return 2.0 * sqrt(2.0) / (2.0 * margin)


@dataclass(frozen=True)
class BoundReport:
    """Per-channel and aggregate settling-time bounds: T_max = T_s + T_z."""

    t_z_channels: tuple
    t_s_channels: tuple
    mode: str  # "known-model" or "gp-based"
    s_bound_mode: str = "lemma3"

    def __post_init__(self):
        for name, vals in (("T_z", self.t_z_channels), ("T_s", self.t_s_channels)):
            arr = np.asarray(vals, dtype=float)
            if not (np.all(np.isfinite(arr)) and np.all(arr > 0.0)):
                raise ParameterError(f"{name} entries must be positive and finite: {vals}")

    @property
    def t_z(self) -> float:
        return max(self.t_z_channels)

    @property
    def t_s(self) -> float:
        return max(self.t_s_channels)

    @property
    def t_max(self) -> float:
        return self.t_s + self.t_z


def bound_report(
    params,
    delta_f_bars=None,
    s_bound_mode: str = "lemma3",
    n: Optional[int] = None,
) -> BoundReport:
    """Settling bounds for a channel set.

    With ``delta_f_bars`` omitted the known-model composition is used (s-phase
    from lemma2_bound); passing per-channel drift-error bounds switches the
    s-phase to theorem2_s_bound in the requested mode.
    """
    if isinstance(params, ControllerParams):
        params = [params] * (n if n is not None else 1)
    params = list(params)
    gp_mode = delta_f_bars is not None
    if gp_mode:
        delta_f_bars = np.broadcast_to(
            np.asarray(delta_f_bars, dtype=float), (len(params),)
        )
    t_z, t_s = [], []
    for i, cp in enumerate(params):
        try:
            t_z.append(theorem1_z_bound(cp.sliding.alpha1, cp.sliding.p, cp.sliding.q))
            if gp_mode:
                t_s.append(
                    theorem2_s_bound(cp.alpha2, cp.d_bar, float(delta_f_bars[i]), s_bound_mode)
                )
            else:
                t_s.append(lemma2_bound(cp.alpha2, cp.d_bar))
        except GainTooSmallError as err:
            raise GainTooSmallError(f"channel {i + 1}: {err}", channel=i) from err
        except ParameterError as err:
            raise ParameterError(f"channel {i + 1}: {err}") from err
    return BoundReport(
        t_z_channels=tuple(t_z),
        t_s_channels=tuple(t_s),
        mode="gp-based" if gp_mode else "known-model",
        s_bound_mode=s_bound_mode if gp_mode else "lemma3",
    )
