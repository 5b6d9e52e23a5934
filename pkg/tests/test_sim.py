"""Closed-loop simulation engine: fixed points, oracles, batches, export."""

import dataclasses
import json
import math

import numpy as np
import pytest

from conftest import make_integrator_plant, standard_channels
from fxtsmc.errors import (
    ParameterError,
    PerturbationBoundError,
    SimulationDivergedError,
    UnfitGPError,
)
from fxtsmc.gp import KernelConfig, generate_training_data, gp_fit
from fxtsmc.numerics import StepConfig
from fxtsmc.sim import (
    Scenario,
    Trajectory,
    measure_settling,
    mc_result_to_dict,
    run_monte_carlo,
    simulate,
    summarize_run,
    summary_to_dict,
    write_summary_json,
    write_trajectory_csv,
)
from fxtsmc.system import (
    SystemModel,
    constant_reference,
    make_lemma2_plant,
    make_pmsm,
    zero_reference,
)

ERF_1 = 0.8427007929497149


def pmsm_scenario(x0=(1.0, 1.0, 1.0), step_size=1e-4, t_end=1.0, **kwargs):
    return Scenario(
        system=make_pmsm(),
        reference=zero_reference(3),
        params=standard_channels(),
        x0=np.asarray(x0, dtype=float),
        step=StepConfig(step_size=step_size, t_end=t_end),
        **kwargs,
    )


# --- simulate: exact fixed point --------------------------------------------------


def test_exact_fixed_point_at_reference():
    # Starting on a constant reference with no drift and no perturbation, the
    # discrete loop must reproduce the reference bitwise: sign(0) = 0 makes the
    # reaching term vanish and every other control term is exactly zero.
    scenario = Scenario(
        system=make_integrator_plant(1),
        reference=constant_reference([0.7]),
        params=standard_channels(1),
        x0=np.array([0.7]),
        step=StepConfig(step_size=1e-3, t_end=0.1),
    )
    traj = simulate(scenario)
    assert np.all(traj.x == 0.7)
    assert np.all(traj.u == 0.0)
    assert np.all(traj.z == 0.0)
    assert np.all(traj.s == 0.0)


# --- simulate: analytic settling oracle --------------------------------------------


def test_lemma2_plant_settles_at_erf():
    # The scalar plant xdot = -a*sign(x)*exp(-x^2) has the closed-form settling
    # time erf(|x0|)/a, which pins the whole logging + measurement chain.
    scenario = Scenario(
        system=make_lemma2_plant(1.0),
        reference=zero_reference(1),
        params=None,
        x0=np.array([1.0]),
        step=StepConfig(step_size=1e-5, t_end=1.2),
        mode="open-loop",
    )
    traj = simulate(scenario)
    settled = measure_settling(traj, "error", 1e-3)
    assert settled[0] == pytest.approx(ERF_1, rel=0.02)


@pytest.mark.parametrize("x0", [0.25, 0.5, 2.0])
def test_lemma2_plant_oracle_other_starts(x0):
    scenario = Scenario(
        system=make_lemma2_plant(1.0),
        reference=zero_reference(1),
        params=None,
        x0=np.array([x0]),
        step=StepConfig(step_size=1e-5, t_end=1.2),
        mode="open-loop",
    )
    settled = measure_settling(simulate(scenario), "error", 1e-3)
    assert settled[0] == pytest.approx(math.erf(x0), rel=0.02)


# --- simulate: motor benchmark -----------------------------------------------------


def test_pmsm_settles_inside_benchmark_window():
    traj = simulate(pmsm_scenario(t_end=4.0))
    late = traj.t >= 3.7544
    assert late.any()
    assert np.all(np.abs(traj.z[late]) < 0.02)


def test_initial_sample_invariants():
    traj = simulate(pmsm_scenario(step_size=1e-3, t_end=0.05))
    assert traj.t[0] == 0.0
    assert np.array_equal(traj.x[0], [1.0, 1.0, 1.0])
    assert np.array_equal(traj.s[0], traj.z[0])
    assert np.all(np.diff(traj.t) > 0)
    assert np.isfinite(traj.as_matrix()).all()


def test_trajectory_shapes_and_vs():
    scenario = pmsm_scenario(step_size=1e-3, t_end=0.05)
    traj = simulate(scenario)
    rows = scenario.step.n_steps + 1
    assert traj.t.shape == (rows,)
    assert traj.x.shape == (rows, 3)
    assert traj.f_hat is None
    assert np.array_equal(traj.v_s, 0.5 * traj.s * traj.s)


def test_simulate_is_deterministic():
    scenario = pmsm_scenario(step_size=1e-3, t_end=0.2)
    a = simulate(scenario)
    b = simulate(scenario)
    for field in ("t", "x", "x_d", "z", "s", "u", "d"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_step_halving_moves_settling_less_than_five_percent():
    coarse = simulate(pmsm_scenario(step_size=1e-4, t_end=1.0))
    fine = simulate(pmsm_scenario(step_size=5e-5, t_end=1.0))
    t_coarse = measure_settling(coarse, "error", 0.02)
    t_fine = measure_settling(fine, "error", 0.02)
    assert np.isfinite(t_coarse).all() and np.isfinite(t_fine).all()
    assert np.max(t_coarse) == pytest.approx(np.max(t_fine), rel=0.05)


def test_divergence_reports_time_and_channel():
    # An unstable plant with no control authority blows past float range.
    unstable = SystemModel(
        n=1,
        drift=lambda x: 10.0 * x * np.abs(x),
        gain=lambda x: np.ones(1),
        perturbation=lambda t: np.zeros(1),
        perturbation_bounds=None,
        name="blowup",
    )
    scenario = Scenario(
        system=unstable,
        reference=zero_reference(1),
        params=None,
        x0=np.array([5.0]),
        step=StepConfig(step_size=0.5, t_end=50.0),
        mode="open-loop",
    )
    with np.errstate(over="ignore"), pytest.raises(SimulationDivergedError) as excinfo:
        simulate(scenario)
    assert "t = " in str(excinfo.value)


def test_perturbation_exceeding_declared_bound_is_an_error():
    lying = SystemModel(
        n=1,
        drift=lambda x: np.zeros(1),
        gain=lambda x: np.ones(1),
        perturbation=lambda t: np.ones(1),
        perturbation_bounds=np.array([0.5]),
        name="lying-bound",
    )
    scenario = Scenario(
        system=lying,
        reference=zero_reference(1),
        params=standard_channels(1),
        x0=np.array([0.3]),
        step=StepConfig(step_size=1e-3, t_end=0.01),
    )
    with pytest.raises(PerturbationBoundError) as excinfo:
        simulate(scenario)
    assert excinfo.value.channel == 0
    assert excinfo.value.t == 0.0


# --- scenario validation -----------------------------------------------------------


def test_closed_loop_requires_params():
    with pytest.raises(ParameterError, match="requires controller params"):
        Scenario(
            system=make_pmsm(),
            reference=zero_reference(3),
            params=None,
            x0=np.zeros(3),
            step=StepConfig(step_size=1e-3, t_end=0.01),
        )


def test_gp_mode_requires_models():
    with pytest.raises(UnfitGPError):
        Scenario(
            system=make_pmsm(),
            reference=zero_reference(3),
            params=standard_channels(),
            x0=np.zeros(3),
            step=StepConfig(step_size=1e-3, t_end=0.01),
            mode="gp-based",
        )


def test_gp_mode_requires_one_model_per_channel():
    kernel = KernelConfig(family="exponential", length_scale=1.0)
    datasets = generate_training_data(
        make_pmsm(), n_samples=5, region=[(-1, 1)] * 3, sigma_f=0.0, seed=3
    )
    models = [gp_fit(datasets[0], kernel)]
    with pytest.raises(UnfitGPError, match="3"):
        Scenario(
            system=make_pmsm(),
            reference=zero_reference(3),
            params=standard_channels(),
            x0=np.zeros(3),
            step=StepConfig(step_size=1e-3, t_end=0.01),
            mode="gp-based",
            gp_models=models,
        )


@pytest.mark.parametrize(
    "kwargs",
    [
        {"mode": "sliding"},
        {"settle_threshold": 0.0},
        {"settle_threshold": -1.0},
        {"x0": np.zeros(2)},
        {"x0": np.array([np.nan, 0.0, 0.0])},
    ],
)
def test_scenario_rejects_bad_fields(kwargs):
    base = dict(
        system=make_pmsm(),
        reference=zero_reference(3),
        params=standard_channels(),
        x0=np.zeros(3),
        step=StepConfig(step_size=1e-3, t_end=0.01),
    )
    base.update(kwargs)
    with pytest.raises(ParameterError):
        Scenario(**base)


# --- measure_settling --------------------------------------------------------------


def hand_trajectory(t, signal):
    """Single-channel trajectory whose z and s both equal ``signal``."""
    t = np.asarray(t, dtype=float)
    col = np.asarray(signal, dtype=float)[:, None]
    zeros = np.zeros_like(col)
    return Trajectory(t=t, x=col, x_d=zeros, z=col, s=col, u=zeros, d=zeros)


def test_settling_of_zero_signal_is_zero():
    t = np.linspace(0.0, 1.0, 101)
    traj = hand_trajectory(t, np.zeros_like(t))
    assert measure_settling(traj, "error", 0.1)[0] == 0.0


def test_settling_of_linear_decay():
    t = np.arange(0.0, 2.0 + 1e-12, 0.01)
    traj = hand_trajectory(t, np.maximum(0.0, 1.0 - t))
    settled = measure_settling(traj, "error", 0.1)
    assert abs(settled[0] - 0.9) <= 0.01 + 1e-12


def test_settling_never_reached_is_nan():
    t = np.linspace(0.0, 1.0, 11)
    traj = hand_trajectory(t, np.ones_like(t))
    assert np.isnan(measure_settling(traj, "error", 0.5)[0])


def test_settling_ignores_transient_dips():
    # Dips below the threshold that do not persist must not count.
    t = np.linspace(0.0, 1.0, 11)
    signal = np.ones_like(t)
    signal[3] = 0.0
    signal[8:] = 0.0
    traj = hand_trajectory(t, signal)
    assert measure_settling(traj, "error", 0.5)[0] == pytest.approx(t[8])


def test_settling_sliding_selects_s_column():
    t = np.linspace(0.0, 1.0, 11)
    col = np.zeros((11, 1))
    s = np.ones((11, 1))
    s[5:] = 0.0
    traj = Trajectory(t=t, x=col, x_d=col, z=col, s=s, u=col, d=col)
    assert measure_settling(traj, "error", 0.5)[0] == 0.0
    assert measure_settling(traj, "sliding", 0.5)[0] == pytest.approx(t[5])


@pytest.mark.parametrize("which,threshold", [("both", 0.1), ("error", 0.0), ("error", -1.0)])
def test_settling_rejects_bad_arguments(which, threshold):
    t = np.linspace(0.0, 1.0, 11)
    traj = hand_trajectory(t, np.zeros_like(t))
    with pytest.raises(ParameterError):
        measure_settling(traj, which, threshold)


# --- summaries ---------------------------------------------------------------------


def test_summarize_run_fields():
    scenario = pmsm_scenario(t_end=1.0, settle_threshold=0.02)
    traj = simulate(scenario)
    summary = summarize_run(traj, scenario)
    assert summary.settled
    assert summary.settling_time == pytest.approx(np.max(summary.settling_error))
    assert summary.bounds is not None
    assert summary.bounds.t_max == pytest.approx(1.2741613156896068)
    assert summary.bound_satisfied == (True, True, True)
    assert summary.all_bounds_satisfied
    assert summary.max_abs_u > 0.0
    assert 0.0 <= summary.chatter_amplitude < 0.05


def test_summary_round_trips_through_json(tmp_path):
    scenario = pmsm_scenario(step_size=1e-3, t_end=0.02)
    summary = summarize_run(simulate(scenario), scenario)
    path = tmp_path / "summary.json"
    write_summary_json(summary, path, config={"b": 1, "a": 2})
    doc = json.loads(path.read_text())
    assert doc["config"] == {"a": 2, "b": 1}
    assert doc["x0"] == [1.0, 1.0, 1.0]
    # t_end is far too short to settle: NaNs must serialize as null.
    assert doc["settled"] is False
    assert doc["settling_time"] is None
    assert doc["bounds"]["t_max"] == pytest.approx(1.2741613156896068)


# --- monte carlo -------------------------------------------------------------------


def test_monte_carlo_single_run_reduces_to_simulate():
    template = pmsm_scenario(t_end=1.0, settle_threshold=0.02)
    box = [(0.5, 0.5), (-0.25, -0.25), (1.5, 1.5)]
    result = run_monte_carlo(template, box, runs=1, seed=9)
    assert np.array_equal(result.x0s, [[0.5, -0.25, 1.5]])
    direct = simulate(dataclasses.replace(template, x0=np.array([0.5, -0.25, 1.5])))
    expected = measure_settling(direct, "error", 0.02)
    assert np.array_equal(result.summaries[0].settling_error, expected)
    assert result.aggregate["runs"] == 1
    assert result.aggregate["n_failed"] == 0
    assert result.aggregate["fraction_settled"] == 1.0


def test_monte_carlo_is_deterministic():
    template = pmsm_scenario(step_size=1e-3, t_end=0.3)
    box = [(-1.0, 1.0)] * 3
    a = run_monte_carlo(template, box, runs=3, seed=123)
    b = run_monte_carlo(template, box, runs=3, seed=123)
    assert np.array_equal(a.x0s, b.x0s)
    assert a.aggregate == b.aggregate
    c = run_monte_carlo(template, box, runs=3, seed=124)
    assert not np.array_equal(a.x0s, c.x0s)


def test_monte_carlo_draws_stay_inside_box():
    template = pmsm_scenario(step_size=1e-3, t_end=0.1)
    box = [(-2.0, -1.0), (0.0, 0.5), (3.0, 4.0)]
    result = run_monte_carlo(template, box, runs=8, seed=5)
    lows = np.array([lo for lo, _ in box])
    highs = np.array([hi for _, hi in box])
    assert np.all(result.x0s >= lows) and np.all(result.x0s <= highs)


def test_monte_carlo_records_failures_without_aborting():
    # A gain that vanishes at the origin fails every run started there.
    singular = SystemModel(
        n=1,
        drift=lambda x: np.zeros(1),
        gain=lambda x: x.copy(),
        perturbation=lambda t: np.zeros(1),
        perturbation_bounds=None,
        name="singular-at-zero",
    )
    template = Scenario(
        system=singular,
        reference=zero_reference(1),
        params=standard_channels(1),
        x0=np.array([1.0]),
        step=StepConfig(step_size=1e-3, t_end=0.01),
    )
    result = run_monte_carlo(template, [(0.0, 0.0)], runs=2, seed=0)
    assert result.summaries == (None, None)
    assert len(result.failures) == 2
    assert result.failures[0]["error_type"] == "SingularGainError"
    assert result.failures[1]["run"] == 1
    assert result.aggregate["n_failed"] == 2
    assert result.aggregate["max_settling_error"] is None


def test_monte_carlo_validates_arguments():
    template = pmsm_scenario(step_size=1e-3, t_end=0.01)
    with pytest.raises(ParameterError, match="runs"):
        run_monte_carlo(template, [(-1, 1)] * 3, runs=0, seed=1)
    with pytest.raises(ParameterError, match="ic_box"):
        run_monte_carlo(template, [(-1, 1)] * 2, runs=1, seed=1)
    with pytest.raises(ParameterError, match="ic_box"):
        run_monte_carlo(template, [(1, -1)] * 3, runs=1, seed=1)


def test_mc_result_serializes():
    template = pmsm_scenario(step_size=1e-3, t_end=0.3)
    result = run_monte_carlo(template, [(-1, 1)] * 3, runs=2, seed=7)
    doc = mc_result_to_dict(result, config={"k": 1})
    assert doc["seed"] == 7
    assert len(doc["runs"]) == 2
    assert doc["config"] == {"k": 1}
    json.dumps(doc)  # must be JSON-clean (no numpy scalars, no NaN)


# --- export ------------------------------------------------------------------------


def test_trajectory_csv_format(tmp_path):
    scenario = pmsm_scenario(step_size=1e-3, t_end=0.01)
    traj = simulate(scenario)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == (
        "t,x1,x2,x3,xd1,xd2,xd3,z1,z2,z3,s1,s2,s3,u1,u2,u3,d1,d2,d3"
    )
    assert len(lines) == 1 + scenario.step.n_steps + 1
    # 17 significant digits round-trip float64 exactly.
    parsed = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert np.array_equal(parsed, traj.as_matrix())


def test_trajectory_csv_embeds_config(tmp_path):
    traj = simulate(pmsm_scenario(step_size=1e-3, t_end=0.01))
    path = tmp_path / "traj.csv"
    cfg = {"sim": {"step_size": 1e-3}, "system": {"builtin": "pmsm"}}
    write_trajectory_csv(traj, path, config=cfg)
    first = path.read_text().splitlines()[0]
    assert first.startswith("# config: ")
    assert json.loads(first[len("# config: "):]) == cfg


def test_trajectory_csv_gp_columns(tmp_path):
    t = np.array([0.0, 0.1])
    col = np.zeros((2, 2))
    traj = Trajectory(
        t=t, x=col, x_d=col, z=col, s=col, u=col, d=col, f_hat=col + 0.5
    )
    path = tmp_path / "gp.csv"
    write_trajectory_csv(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x1,x2,xd1,xd2,z1,z2,s1,s2,u1,u2,d1,d2,fhat1,fhat2"
    assert lines[1].split(",")[-2:] == ["0.5", "0.5"]


def test_summary_dict_drops_numpy_types():
    scenario = pmsm_scenario(step_size=1e-3, t_end=0.3, settle_threshold=0.05)
    summary = summarize_run(simulate(scenario), scenario)
    doc = summary_to_dict(summary)
    json.dumps(doc)
    assert set(doc) >= {
        "x0",
        "threshold",
        "settling_error",
        "settling_sliding",
        "settled",
        "settling_time",
        "max_abs_u",
        "chatter_amplitude",
        "bound_satisfied",
        "bounds",
    }
