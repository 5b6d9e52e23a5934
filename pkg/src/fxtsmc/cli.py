"""Command-line front end.

Commands: ``run`` (single closed-loop simulation), ``bounds`` (settling-time
bound table), ``gp-train`` (dataset generation + per-channel GP fit report),
``montecarlo`` (seeded batch over an initial-condition box), ``validate``
(config schema check only).

Exit codes
----------
0  success
2  configuration or argument error (schema violation, bad gains, bad CLI args)
3  I/O error (missing or unreadable/unwritable files)
4  numeric failure (diverged simulation, singular gain, ill-conditioned data)
5  acceptance-threshold violation (montecarlo aggregate checks)

Every artifact embeds the fully resolved configuration (after ``--x0`` /
``--set`` overrides), so re-running a written artifact's config reproduces it
byte-for-byte.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .controller import ControllerParams, bound_report
from .errors import (
    ConfigError,
    EvaluationError,
    GainTooSmallError,
    IllConditionedDataError,
    ParameterError,
    PerturbationBoundError,
    SimulationDivergedError,
    SingularGainError,
    UnfitGPError,
)
from .gp import (
    ErrorBoundConfig,
    KernelConfig,
    generate_training_data,
    gp_fit,
    gp_mean,
    load_datasets,
    save_datasets,
    variance_many,
)
from .numerics import StepConfig
from .sim import (
    Scenario,
    bound_report_to_dict,
    mc_result_to_dict,
    run_monte_carlo,
    simulate,
    summarize_run,
    summary_to_dict,
    write_trajectory_csv,
)
from .sliding import SlidingParams
from .system import (
    PMSM_QUOTED_BOUNDS,
    PMSM_STANDARD_GAINS,
    constant_reference,
    make_lemma2_plant,
    make_pmsm,
    sinusoid_reference,
    zero_reference,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_ACCEPTANCE = 5

_NUMBER_OR_LIST = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
    ]
}
_INT_OR_LIST = {
    "oneOf": [
        {"type": "integer"},
        {"type": "array", "items": {"type": "integer"}, "minItems": 1},
    ]
}
_BOOL_OR_LIST = {
    "oneOf": [
        {"type": "boolean"},
        {"type": "array", "items": {"type": "boolean"}, "minItems": 1},
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["system", "sim"],
    "properties": {
        "system": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["builtin"],
                    "properties": {"builtin": {"const": "pmsm"}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["builtin"],
                    "properties": {
                        "builtin": {"const": "lemma2"},
                        "alpha": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            ]
        },
        "reference": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["zero", "constant", "sinusoid"]},
                "value": {"type": "array", "items": {"type": "number"}},
                "amplitude": {"type": "array", "items": {"type": "number"}},
                "frequency": {"type": "array", "items": {"type": "number"}},
                "phase": {"type": "array", "items": {"type": "number"}},
            },
        },
        "controller": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["known-model", "gp-based", "open-loop"]},
                "alpha1": _NUMBER_OR_LIST,
                "alpha2": _NUMBER_OR_LIST,
                "p": _INT_OR_LIST,
                "q": _INT_OR_LIST,
                "d_bar": _NUMBER_OR_LIST,
                "include_sqrt_pi_factor": _BOOL_OR_LIST,
                "sign_boundary_layer": _NUMBER_OR_LIST,
            },
        },
        "gp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kernel": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "family": {"enum": ["exponential", "squared-exponential"]},
                        "length_scale": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "dataset": {"type": "string"},
                "generate": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["n_samples", "region"],
                    "properties": {
                        "n_samples": {"type": "integer", "minimum": 1},
                        "region": {
                            "type": "array",
                            "items": {
                                "type": "array",
                                "items": {"type": "number"},
                                "minItems": 2,
                                "maxItems": 2,
                            },
                            "minItems": 1,
                        },
                        "sigma_f": {"type": "number", "minimum": 0},
                        "seed": {"type": "integer"},
                    },
                },
                "chi": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "required": ["step_size", "t_end"],
            "properties": {
                "step_size": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": ["euler", "explicit-euler", "rk4"]},
                "settle_threshold": {"type": "number", "exclusiveMinimum": 0},
                "x0": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trajectory_csv": {"type": "string"},
                "summary_json": {"type": "string"},
                "dataset_csv": {"type": "string"},
                "runs_jsonl": {"type": "string"},
                "mc_summary_json": {"type": "string"},
            },
        },
    },
}


# --- config handling ---------------------------------------------------------


def load_config(path) -> dict:
    """Read and parse a JSON config. OSError passes through (I/O exit code)."""
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON: {err}") from err
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "(top level)"
        raise ConfigError(f"config invalid at {where}: {err.message}") from err


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply one ``--set section.key=value`` override (value parsed as JSON,
    falling back to a bare string)."""
    path, sep, raw = assignment.partition("=")
    if not sep or not path.strip():
        raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    keys = path.strip().split(".")
    for key in keys[:-1]:
        nxt = node.setdefault(key, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"override path {path!r} crosses non-object key {key!r}")
        node = nxt
    node[keys[-1]] = value


def resolve_config(args) -> dict:
    cfg = load_config(args.config)
    for assignment in getattr(args, "set", None) or []:
        apply_override(cfg, assignment)
    if getattr(args, "x0", None) is not None:
        try:
            x0 = [float(v) for v in args.x0.split(",")]
        except ValueError as err:
            raise ConfigError(f"--x0 must be comma-separated numbers, got {args.x0!r}") from err
        cfg.setdefault("sim", {})["x0"] = x0
    validate_config(cfg)
    return cfg


# --- scenario construction -----------------------------------------------------


def _per_channel(value, n: int, name: str) -> list:
    if isinstance(value, list):
        if len(value) != n:
            raise ConfigError(f"controller.{name} needs 1 or {n} entries, got {len(value)}")
        return value
    return [value] * n


def build_system(cfg: dict):
    sys_cfg = cfg["system"]
    if sys_cfg["builtin"] == "pmsm":
        return make_pmsm()
    return make_lemma2_plant(float(sys_cfg.get("alpha", 1.0)))


def build_reference(cfg: dict, n: int):
    ref_cfg = cfg.get("reference", {"kind": "zero"})
    kind = ref_cfg["kind"]
    if kind == "zero":
        return zero_reference(n)
    if kind == "constant":
        if "value" not in ref_cfg:
            raise ConfigError("reference kind 'constant' requires 'value'")
        return constant_reference(ref_cfg["value"])
    for key in ("amplitude", "frequency"):
        if key not in ref_cfg:
            raise ConfigError(f"reference kind 'sinusoid' requires {key!r}")
    return sinusoid_reference(
        ref_cfg["amplitude"], ref_cfg["frequency"], ref_cfg.get("phase")
    )


def build_controller_params(cfg: dict, n: int) -> Optional[list[ControllerParams]]:
    ctl = cfg.get("controller", {})
    mode = ctl.get("mode", "known-model")
    if mode == "open-loop" and "alpha1" not in ctl:
        return None
    for key in ("alpha1", "alpha2", "p", "q"):
        if key not in ctl:
            raise ConfigError(f"controller.{key} is required for mode {mode!r}")
    alpha1 = _per_channel(ctl["alpha1"], n, "alpha1")
    alpha2 = _per_channel(ctl["alpha2"], n, "alpha2")
    p = _per_channel(ctl["p"], n, "p")
    q = _per_channel(ctl["q"], n, "q")
    d_bar = _per_channel(ctl.get("d_bar", 0.0), n, "d_bar")
    include = _per_channel(
        ctl.get("include_sqrt_pi_factor", mode != "gp-based"), n, "include_sqrt_pi_factor"
    )
    layer = _per_channel(ctl.get("sign_boundary_layer", 0.0), n, "sign_boundary_layer")
    out = []
    for i in range(n):
        sliding = SlidingParams(alpha1=float(alpha1[i]), p=int(p[i]), q=int(q[i]))
        out.append(
            ControllerParams(
                sliding=sliding,
                alpha2=float(alpha2[i]),
                d_bar=float(d_bar[i]),
                include_sqrt_pi_factor=bool(include[i]),
                sign_boundary_layer=float(layer[i]),
            )
        )
    return out


def build_step(cfg: dict) -> StepConfig:
    sim_cfg = cfg["sim"]
    return StepConfig(
        step_size=float(sim_cfg["step_size"]),
        t_end=float(sim_cfg["t_end"]),
        method=sim_cfg.get("method", "euler"),
    )


def build_gp_models(cfg: dict, system) -> list:
    gp_cfg = cfg.get("gp")
    if not gp_cfg:
        raise ConfigError("a 'gp' section is required for gp-based mode / gp-train")
    kcfg = gp_cfg.get("kernel", {})
    kernel = KernelConfig(
        family=kcfg.get("family", "exponential"),
        length_scale=float(kcfg.get("length_scale", 1.0)),
    )
    if "dataset" in gp_cfg:
        datasets, _meta = load_datasets(gp_cfg["dataset"])
    elif "generate" in gp_cfg:
        gen = gp_cfg["generate"]
        datasets = generate_training_data(
            system,
            int(gen["n_samples"]),
            gen["region"],
            sigma_f=float(gen.get("sigma_f", 0.0)),
            seed=int(gen.get("seed", 0)),
        )
    else:
        raise ConfigError("gp section needs either 'dataset' (path) or 'generate' (parameters)")
    if len(datasets) != system.n:
        raise ConfigError(f"gp dataset has {len(datasets)} channels, system has {system.n}")
    return [gp_fit(ds, kernel) for ds in datasets]


def build_scenario(cfg: dict):
    """Config dict -> (Scenario, gp models or None)."""
    system = build_system(cfg)
    n = system.n
    reference = build_reference(cfg, n)
    mode = cfg.get("controller", {}).get("mode", "known-model")
    params = build_controller_params(cfg, n)
    models = build_gp_models(cfg, system) if mode == "gp-based" else None
    sim_cfg = cfg["sim"]
    x0 = sim_cfg.get("x0", [0.0] * n)
    scenario = Scenario(
        system=system,
        reference=reference,
        params=params,
        x0=np.asarray(x0, dtype=float),
        step=build_step(cfg),
        mode=mode,
        gp_models=models,
        settle_threshold=float(sim_cfg.get("settle_threshold", 1e-2)),
    )
    return scenario, models


def _output_path(cfg: dict, key: str, default: str) -> Path:
    return Path(cfg.get("output", {}).get(key, default))


# --- bound helpers --------------------------------------------------------------


def _gp_delta_f_bars(models, traj, chi: float) -> np.ndarray:
    """Per-channel max over the visited states of the GP error bound chi*sigma.

    Subsamples the trajectory to at most ~1000 states; sigma varies slowly so
    this loses nothing at the printed precision.
    """
    stride = max(1, traj.x.shape[0] // 1000)
    states = traj.x[::stride]
    ecfg = ErrorBoundConfig(chi=chi)
    out = np.empty(len(models))
    for i, m in enumerate(models):
        sigma = np.sqrt(variance_many(m, states))
        out[i] = ecfg.chi * float(np.max(sigma))
    return out


def _is_standard_pmsm_gains(channels) -> bool:
    g = PMSM_STANDARD_GAINS
    return all(
        c.sliding.alpha1 == g["alpha1"]
        and c.alpha2 == g["alpha2"]
        and c.sliding.p == g["p"]
        and c.sliding.q == g["q"]
        and c.d_bar == g["d_bar"]
        for c in channels
    )


# --- commands --------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    scenario, models = build_scenario(cfg)
    traj = simulate(scenario)
    bounds = None
    bound_note = None
    if scenario.mode == "known-model":
        bounds = bound_report(scenario.channels)
    elif scenario.mode == "gp-based":
        chi = float(cfg.get("gp", {}).get("chi", 2.0))
        delta = _gp_delta_f_bars(models, traj, chi)
        try:
            bounds = bound_report(scenario.channels, delta_f_bars=delta)
        except GainTooSmallError as err:
            bound_note = f"settling bound unavailable: {err}"
    summary = summarize_run(traj, scenario, bounds=bounds)

    stem = Path(args.config).stem
    csv_path = _output_path(cfg, "trajectory_csv", f"{stem}-trajectory.csv")
    json_path = _output_path(cfg, "summary_json", f"{stem}-summary.json")
    write_trajectory_csv(traj, csv_path, config=cfg)
    doc = summary_to_dict(summary)
    doc["config"] = cfg
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    print(f"run: system={scenario.system.name} mode={scenario.mode} "
          f"h={scenario.step.step_size:g} t_end={scenario.step.t_end:g}")
    if bounds is not None:
        print(f"bounds[{bounds.mode}/{bounds.s_bound_mode}]: T_z = {bounds.t_z:.5f}  "
              f"T_s = {bounds.t_s:.5f}  T_max = {bounds.t_max:.5f}")
    if bound_note:
        print(bound_note)
    _print_settling("settling(error)", summary.settling_error)
    _print_settling("settling(sliding)", summary.settling_sliding)
    print(f"max |u| = {summary.max_abs_u:.6g}")
    if np.isfinite(summary.chatter_amplitude):
        print(f"chatter amplitude = {summary.chatter_amplitude:.6g}")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return EXIT_OK


def _print_settling(label: str, values) -> None:
    parts = [
        f"ch{i + 1}={v:.6g}" if np.isfinite(v) else f"ch{i + 1}=not-settled"
        for i, v in enumerate(values)
    ]
    arr = np.asarray(values, dtype=float)
    worst = f"{np.max(arr):.6g}" if np.all(np.isfinite(arr)) else "not-settled"
    print(f"{label}: {' '.join(parts)}  worst={worst}")


def cmd_bounds(args) -> int:
    cfg = resolve_config(args)
    system = build_system(cfg)
    channels = build_controller_params(cfg, system.n)
    if channels is None:
        raise ConfigError("bounds requires a controller section with gains")

    known = bound_report(channels)
    zero_delta = np.zeros(len(channels))
    gp_l3 = bound_report(channels, delta_f_bars=zero_delta, s_bound_mode="lemma3")
    gp_t8 = bound_report(channels, delta_f_bars=zero_delta, s_bound_mode="printed-t8")

    print("settling-time bounds per channel (s-phase shown in every mode):")
    print("channel      T_z   T_s[known]  T_s[gp-lemma3]  T_s[gp-printed-t8]")
    for i in range(len(channels)):
        print(
            f"  {i + 1}     {known.t_z_channels[i]:8.5f}  {known.t_s_channels[i]:9.5f}"
            f"  {gp_l3.t_s_channels[i]:13.5f}  {gp_t8.t_s_channels[i]:17.5f}"
        )
    print(f"aggregate known-model:    T_z = {known.t_z:.5f}  T_s = {known.t_s:.5f}  "
          f"T_max = {known.t_max:.5f}")
    print(f"aggregate gp-lemma3:      T_z = {gp_l3.t_z:.5f}  T_s = {gp_l3.t_s:.5f}  "
          f"T_max = {gp_l3.t_max:.5f}")
    print(f"aggregate gp-printed-t8:  T_z = {gp_t8.t_z:.5f}  T_s = {gp_t8.t_s:.5f}  "
          f"T_max = {gp_t8.t_max:.5f}")
    if _is_standard_pmsm_gains(channels):
        q = PMSM_QUOTED_BOUNDS
        print(
            "note: commonly quoted values for this benchmark gain set — "
            f"T_s_channel = {q['t_s_channel']}, T_s = {q['t_s']}, T_max = {q['t_max']} — "
            "are not reproduced by any formula above; they are reported here as known "
            "discrepancies, not as targets."
        )
    return EXIT_OK


def cmd_gp_train(args) -> int:
    cfg = resolve_config(args)
    gp_cfg = cfg.setdefault("gp", {})
    if args.n_samples is not None or args.seed is not None:
        gen = gp_cfg.setdefault("generate", {})
        if args.n_samples is not None:
            gen["n_samples"] = args.n_samples
        if args.seed is not None:
            gen["seed"] = args.seed
        if "n_samples" not in gen or "region" not in gen:
            raise ConfigError("gp.generate needs n_samples and region")
        validate_config(cfg)

    system = build_system(cfg)
    models = build_gp_models(cfg, system)
    datasets = [m.dataset for m in models]

    stem = Path(args.config).stem
    csv_path = _output_path(cfg, "dataset_csv", f"{stem}-dataset.csv")
    save_datasets(datasets, csv_path, metadata={"config": cfg, "kernel": {
        "family": models[0].kernel.family, "length_scale": models[0].kernel.length_scale}})
    print(f"wrote {csv_path} ({datasets[0].n_samples} samples, {len(datasets)} channels)")

    for i, m in enumerate(models):
        resid = max(
            abs(gp_mean(m, x) - y) for x, y in zip(m.dataset.inputs, m.dataset.targets)
        )
        print(f"channel {i + 1}: interpolation residual max = {resid:.3e} "
              f"(jitter {m.jitter:g})")

    rng = np.random.default_rng((datasets[0].seed or 0) + 1)
    region = np.asarray(gp_cfg["generate"]["region"], dtype=float) if "generate" in gp_cfg else None
    if region is None:
        lo, hi = datasets[0].inputs.min(axis=0), datasets[0].inputs.max(axis=0)
        region = np.stack([lo, hi], axis=1)
    held = rng.uniform(region[:, 0], region[:, 1], size=(256, system.n))
    true = np.stack([system.drift(x) for x in held])
    est = np.stack([[gp_mean(m, x) for m in models] for x in held])
    rms = float(np.sqrt(np.mean((true - est) ** 2)))
    print(f"held-out drift RMS over {held.shape[0]} fresh states: {rms:.6g}")
    return EXIT_OK


def _parse_ic_box(text: str, n: int) -> np.ndarray:
    """'lo,hi' (shared) or 'lo,hi;lo,hi;...' (per dimension)."""
    try:
        pairs = [[float(v) for v in part.split(",")] for part in text.split(";")]
    except ValueError as err:
        raise ConfigError(f"--ic-box must be numbers, got {text!r}") from err
    if any(len(p) != 2 for p in pairs):
        raise ConfigError(f"--ic-box needs lo,hi pairs, got {text!r}")
    if len(pairs) == 1:
        pairs = pairs * n
    if len(pairs) != n:
        raise ConfigError(f"--ic-box needs 1 or {n} pairs, got {len(pairs)}")
    return np.asarray(pairs, dtype=float)


def cmd_montecarlo(args) -> int:
    cfg = resolve_config(args)
    scenario, models = build_scenario(cfg)
    box = _parse_ic_box(args.ic_box, scenario.system.n)

    bounds = None
    if scenario.mode == "known-model":
        bounds = bound_report(scenario.channels)
    elif scenario.mode == "gp-based":
        # Pilot run from the box's corner to size the drift-error bound.
        chi = float(cfg.get("gp", {}).get("chi", 2.0))
        pilot = simulate(
            Scenario(
                system=scenario.system,
                reference=scenario.reference,
                params=scenario.params,
                x0=box[:, 1],
                step=scenario.step,
                mode=scenario.mode,
                gp_models=scenario.gp_models,
                settle_threshold=scenario.settle_threshold,
            )
        )
        try:
            bounds = bound_report(
                scenario.channels, delta_f_bars=_gp_delta_f_bars(models, pilot, chi)
            )
        except GainTooSmallError as err:
            print(f"settling bound unavailable: {err}", file=sys.stderr)

    result = run_monte_carlo(scenario, box, args.runs, args.seed, bounds=bounds)

    resolved = dict(cfg)
    resolved["montecarlo"] = {
        "runs": args.runs,
        "seed": args.seed,
        "ic_box": [[float(a), float(b)] for a, b in box],
    }
    doc = mc_result_to_dict(result, config=resolved)
    if bounds is not None:
        doc["bounds"] = bound_report_to_dict(bounds)

    stem = Path(args.config).stem
    jsonl_path = _output_path(cfg, "runs_jsonl", f"{stem}-runs.jsonl")
    summary_path = _output_path(cfg, "mc_summary_json", f"{stem}-mc.json")
    with jsonl_path.open("w") as fh:
        for i, s in enumerate(result.summaries):
            line = {"run": i, "x0": [float(v) for v in result.x0s[i]]}
            line["summary"] = summary_to_dict(s) if s is not None else None
            fh.write(json.dumps(line, sort_keys=True) + "\n")
    summary_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    agg = result.aggregate
    print(f"montecarlo: {args.runs} runs, seed {args.seed}, "
          f"{agg['n_failed']} failed, {agg['n_settled']} settled")
    if agg["max_settling_error"] is not None:
        print(f"max settling time (error): {agg['max_settling_error']:.6g}")
    if bounds is not None:
        print(f"bound T_max = {bounds.t_max:.5f}; "
              f"fraction satisfying: {agg['fraction_bound_satisfied']}")
    if agg["max_chatter_amplitude"] is not None:
        print(f"max chatter amplitude: {agg['max_chatter_amplitude']:.6g}")
    print(f"wrote {jsonl_path}")
    print(f"wrote {summary_path}")

    if agg["n_failed"] == args.runs:
        print("every run failed", file=sys.stderr)
        return EXIT_NUMERIC
    if args.require_settled and agg["fraction_settled"] < 1.0:
        print("acceptance violation: not every run settled", file=sys.stderr)
        return EXIT_ACCEPTANCE
    if args.require_bound and (
        agg["fraction_bound_satisfied"] is None or agg["fraction_bound_satisfied"] < 1.0
    ):
        print("acceptance violation: settling bound not satisfied on every run",
              file=sys.stderr)
        return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    validate_config(cfg)
    print(f"{args.config}: ok")
    return EXIT_OK


# --- parser / dispatch -------------------------------------------------------------


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fxtsmc",
        description="Fixed-time integral sliding mode control toolkit",
        epilog="exit codes: 0 ok, 2 config/argument, 3 I/O, 4 numeric, 5 acceptance",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", help="JSON configuration file")
        p.add_argument("--set", action="append", metavar="PATH=VALUE",
                       help="override a config entry, e.g. --set controller.alpha2=5")

    p_run = sub.add_parser("run", help="simulate one closed-loop run")
    add_common(p_run)
    p_run.add_argument("--x0", help="override the initial state, e.g. --x0 1,1,1")
    p_run.set_defaults(func=cmd_run)

    p_bounds = sub.add_parser("bounds", help="print the settling-time bound table")
    add_common(p_bounds)
    p_bounds.set_defaults(func=cmd_bounds)

    p_gp = sub.add_parser("gp-train", help="generate data, fit the per-channel GPs")
    add_common(p_gp)
    p_gp.add_argument("-n", "--n-samples", type=_positive_int, default=None,
                      help="training points per channel (overrides gp.generate)")
    p_gp.add_argument("--seed", type=int, default=None, help="dataset RNG seed")
    p_gp.set_defaults(func=cmd_gp_train)

    p_mc = sub.add_parser("montecarlo", help="batch of runs over an IC box")
    # Boxes usually have negative lows; widen argparse's negative-number
    # heuristic so `--ic-box -1,1` parses without the `=` form.
    p_mc._negative_number_matcher = re.compile(r"^-\d")
    add_common(p_mc)
    p_mc.add_argument("--runs", type=_positive_int, required=True)
    p_mc.add_argument("--ic-box", required=True,
                      help="'lo,hi' shared or 'lo,hi;lo,hi;...' per dimension")
    p_mc.add_argument("--seed", type=int, default=0)
    p_mc.add_argument("--require-settled", action="store_true",
                      help="exit 5 unless every run settles")
    p_mc.add_argument("--require-bound", action="store_true",
                      help="exit 5 unless every run settles within the bound")
    p_mc.set_defaults(func=cmd_montecarlo)

    p_val = sub.add_parser("validate", help="schema-check a config file")
    p_val.add_argument("config")
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed its diagnostic
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (GainTooSmallError, ParameterError) as err:
        print(f"parameter error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    except (
        SimulationDivergedError,
        SingularGainError,
        EvaluationError,
        PerturbationBoundError,
        IllConditionedDataError,
        UnfitGPError,
    ) as err:
        print(f"numeric error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
