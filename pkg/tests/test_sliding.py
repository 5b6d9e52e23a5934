import numpy as np
import pytest

from fxtsmc.controller import ControllerParams, theorem1_z_bound
from fxtsmc.errors import ParameterError
from fxtsmc.numerics import StepConfig, safe_exp
from fxtsmc.sim import Scenario, simulate
from fxtsmc.sliding import SlidingParams, SlidingState, advance, integrand, sliding_value
from fxtsmc.system import make_pmsm, zero_reference


def test_params_exponent():
    assert SlidingParams(alpha1=6.0, p=8, q=10).exponent == pytest.approx(0.8)
    assert SlidingParams(alpha1=2.0, p=0, q=1).exponent == 0.0


@pytest.mark.parametrize(
    "kwargs",
    [
        {"alpha1": 0.0, "p": 8, "q": 10},
        {"alpha1": -1.0, "p": 8, "q": 10},
        {"alpha1": 1.0, "p": 10, "q": 10},  # p/q = 1
        {"alpha1": 1.0, "p": 11, "q": 10},  # p/q > 1
        {"alpha1": 1.0, "p": -1, "q": 10},
        {"alpha1": 1.0, "p": 1, "q": 0},
    ],
)
def test_params_rejects_bad_domains(kwargs):
    with pytest.raises(ParameterError):
        SlidingParams(**kwargs)


def test_integrand_values():
    params = SlidingParams(alpha1=6.0, p=8, q=10)
    assert integrand(0.0, params) == 0.0
    assert integrand(1.0, params) == pytest.approx(np.e, rel=1e-15)
    assert integrand(-1.0, params) == pytest.approx(-np.e, rel=1e-15)


def test_integrand_odd():
    params = SlidingParams(alpha1=1.0, p=3, q=7)
    for z in (0.1, 0.9, 2.3, 5.0):
        assert integrand(-z, params) == -integrand(z, params)


def test_advance_accumulates_one_euler_step():
    params = SlidingParams(alpha1=6.0, p=8, q=10)
    state = advance(SlidingState(), 1.0, params, 0.1)
    assert state.integral == pytest.approx(0.1 * np.e, rel=1e-15)
    assert state.t == pytest.approx(0.1)

    state = advance(SlidingState(), 0.0, params, 0.1)
    assert state.integral == 0.0


def test_sliding_value_examples():
    params = SlidingParams(alpha1=6.0, p=8, q=10)
    assert sliding_value(0.0, SlidingState(), params) == 0.0
    assert sliding_value(2.0, SlidingState(integral=0.5, t=1.0), params) == 5.0


def test_sliding_equals_error_at_time_zero():
    # the integral starts empty, so s(0) = z for any z and gains
    for alpha1, p, q in ((6.0, 8, 10), (2.0, 0, 1), (0.5, 1, 3)):
        params = SlidingParams(alpha1=alpha1, p=p, q=q)
        for z in (-4.0, -0.3, 0.0, 1.7):
            assert sliding_value(z, SlidingState(), params) == z


def test_constant_z_closed_form():
    # z(tau) = 1 on [0, 1]: the integrand is constant e, so Euler accumulation
    # is exact and s = 1 + alpha1 * e * t.
    params = SlidingParams(alpha1=6.0, p=8, q=10)
    h = 1e-4
    state = SlidingState()
    for _ in range(10000):
        state = advance(state, 1.0, params, h)
    assert state.integral == pytest.approx(np.e, rel=1e-12)
    assert sliding_value(1.0, state, params) == pytest.approx(1.0 + 6.0 * np.e, rel=1e-12)


def test_accumulator_matches_trapezoid_quadrature():
    # independent recomputation: the incremental integral reconstructed from
    # (s - z)/alpha1 at t_end must agree with trapezoidal quadrature of the
    # logged z-series to within O(h)
    h, t_end = 1e-3, 0.5
    scenario = Scenario(
        system=make_pmsm(),
        reference=zero_reference(3),
        params=ControllerParams(
            sliding=SlidingParams(alpha1=6.0, p=8, q=10), alpha2=4.0, d_bar=1.0
        ),
        x0=np.ones(3),
        step=StepConfig(step_size=h, t_end=t_end),
        settle_threshold=0.02,
    )
    traj = simulate(scenario)
    params = SlidingParams(alpha1=6.0, p=8, q=10)
    values = np.stack([integrand(traj.z[:, i], params) for i in range(3)], axis=1)
    quad = np.trapezoid(values, traj.t, axis=0)
    incremental = (traj.s[-1] - traj.z[-1]) / 6.0
    tol = 10.0 * h * t_end * np.max(np.abs(values))
    np.testing.assert_allclose(incremental, quad, atol=tol)


def test_on_manifold_error_dynamics_settle_within_bound():
    # On s = 0 the error obeys z' = -alpha1 e^{z^2} |z|^{p/q} sign(z); a
    # rate-guarded Euler loop must drive |z| below 1e-3 within the z-phase
    # settling bound, including from far-field starts.
    alpha1, expo = 6.0, 0.8
    bound = theorem1_z_bound(alpha1, 8, 10)
    h = 1e-4
    for z0 in (0.1, 1.0, 10.0):
        z, t = z0, 0.0
        while t < bound and abs(z) >= 1e-3:
            rate = alpha1 * float(safe_exp(z * z)) * abs(z) ** expo
            h_sub = min(h, 0.5 * (abs(z) + 1.0) / rate)
            z -= h_sub * rate * np.sign(z)
            t += h_sub
        assert abs(z) < 1e-3, f"z0={z0} did not settle within {bound}"
