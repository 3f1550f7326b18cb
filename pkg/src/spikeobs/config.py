"""Configuration loading: schema-validated YAML for models and experiments.

Validation collects *every* violation before failing so a bad file can be
fixed in one pass.  Overrides are dotted-path assignments applied after
the file parses and before validation.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .errors import ConfigurationError
from .mismatch import MismatchConfig
from .model import (
    CURRENT_NAMES,
    THETA_LABELS,
    CalciumSensor,
    GatingKinetics,
    IonicCurrentSpec,
    NeuronModel,
    SigmoidParams,
    TimeConstantParams,
)
from .observers import CentralizedGains, DistributedGains, RedundancyGains

# runner imports observers/model but never config, so this edge is acyclic.
from .runner import (
    INPUT_MODES,
    METHODS,
    OBSERVER_KINDS,
    ExperimentConfig,
    ObserverInit,
    OUInput,
    Ramp,
    Scenario,
    TrialConfig,
    default_scenario,
)

DEFAULT_MODEL_RESOURCE = "neuron_default.yaml"

_SIGMOID_SCHEMA = {
    "type": "object",
    "required": ["v_half", "slope", "direction", "tau"],
    "additionalProperties": False,
    "properties": {
        "v_half": {"type": "number"},
        "slope": {"type": "number", "exclusiveMinimum": 0},
        "direction": {"enum": ["activation", "inactivation"]},
        "tau": {
            "type": "object",
            "required": ["base", "amplitude", "center", "width"],
            "additionalProperties": False,
            "properties": {
                "base": {"type": "number", "exclusiveMinimum": 0},
                "amplitude": {"type": "number", "minimum": 0},
                "center": {"type": "number"},
                "width": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": [
        "schema_version", "capacitance", "leak_reversal", "tau_ca",
        "maximal_conductances", "reversals", "kca_sensor", "gates",
    ],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": 1},
        "capacitance": {"type": "number", "exclusiveMinimum": 0},
        "leak_reversal": {"type": "number"},
        "tau_ca": {"type": "number", "exclusiveMinimum": 0},
        "ca_influx": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "cat_coeff": {"type": "number", "minimum": 0},
                "cal_coeff": {"type": "number", "minimum": 0},
            },
        },
        "maximal_conductances": {
            "type": "object",
            "required": list(THETA_LABELS),
            "additionalProperties": False,
            "properties": {name: {"type": "number", "exclusiveMinimum": 0} for name in THETA_LABELS},
        },
        "reversals": {
            "type": "object",
            "required": ["Na", "K", "Ca"],
            "additionalProperties": False,
            "properties": {name: {"type": "number"} for name in ("Na", "K", "Ca")},
        },
        "kca_sensor": {
            "type": "object",
            "required": ["half", "slope"],
            "additionalProperties": False,
            "properties": {
                "half": {"type": "number"},
                "slope": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "gates": {
            "type": "object",
            "required": ["Na", "K", "CaT", "CaL"],
            "additionalProperties": False,
            "properties": {
                "Na": {
                    "type": "object",
                    "required": ["m", "h"],
                    "additionalProperties": False,
                    "properties": {"m": _SIGMOID_SCHEMA, "h": _SIGMOID_SCHEMA},
                },
                "K": {
                    "type": "object",
                    "required": ["m"],
                    "additionalProperties": False,
                    "properties": {"m": _SIGMOID_SCHEMA},
                },
                "CaT": {
                    "type": "object",
                    "required": ["m", "h"],
                    "additionalProperties": False,
                    "properties": {"m": _SIGMOID_SCHEMA, "h": _SIGMOID_SCHEMA},
                },
                "CaL": {
                    "type": "object",
                    "required": ["m"],
                    "additionalProperties": False,
                    "properties": {"m": _SIGMOID_SCHEMA},
                },
            },
        },
    },
}


def schema_violations(instance, schema) -> list[str]:
    """Every schema violation as '<path>: <message>', sorted by path."""
    validator = jsonschema.Draft202012Validator(schema)
    out = []
    for err in validator.iter_errors(instance):
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{path}: {err.message}")
    return sorted(out)


def load_yaml(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"configuration file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return raw


def default_model_dict() -> dict:
    text = resources.files("spikeobs.data").joinpath(DEFAULT_MODEL_RESOURCE).read_text()
    return yaml.safe_load(text)


def _gating(raw: dict) -> GatingKinetics:
    tau = raw["tau"]
    return GatingKinetics(
        activation=SigmoidParams(raw["v_half"], raw["slope"], raw["direction"]),
        time_constant=TimeConstantParams(tau["base"], tau["amplitude"], tau["center"], tau["width"]),
    )


def model_from_dict(raw: dict) -> NeuronModel:
    """Build a NeuronModel from a parsed model file; all violations at once."""
    problems = schema_violations(raw, MODEL_SCHEMA)
    if problems:
        raise ConfigurationError(problems)
    gates = raw["gates"]
    rev = raw["reversals"]
    sensor = CalciumSensor(raw["kca_sensor"]["half"], raw["kca_sensor"]["slope"])
    currents = (
        IonicCurrentSpec("Na", rev["Na"], m_kinetics=_gating(gates["Na"]["m"]),
                         h_kinetics=_gating(gates["Na"]["h"])),
        IonicCurrentSpec("K", rev["K"], m_kinetics=_gating(gates["K"]["m"])),
        IonicCurrentSpec("CaT", rev["Ca"], m_kinetics=_gating(gates["CaT"]["m"]),
                         h_kinetics=_gating(gates["CaT"]["h"])),
        IonicCurrentSpec("CaL", rev["Ca"], m_kinetics=_gating(gates["CaL"]["m"])),
        IonicCurrentSpec("KCa", rev["K"], calcium_gated=True, calcium_sensor=sensor),
    )
    theta = [raw["maximal_conductances"][name] for name in THETA_LABELS]
    influx = raw.get("ca_influx", {})
    return NeuronModel(
        capacitance=raw["capacitance"],
        currents=currents,
        maximal_conductances=theta,
        leak_reversal=raw["leak_reversal"],
        tau_ca=raw["tau_ca"],
        ca_cat_coeff=influx.get("cat_coeff", 0.03),
        ca_cal_coeff=influx.get("cal_coeff", 0.3),
    )


def load_model(path=None) -> NeuronModel:
    """Model from a YAML file, or the packaged default when path is None."""
    raw = default_model_dict() if path is None else load_yaml(path)
    return model_from_dict(raw)


# --------------------------------------------------------------------------
# Dotted-path overrides


def parse_override(assignment: str) -> tuple[list[str], object]:
    """Split 'a.b.c=value' into a key path and a YAML-parsed value."""
    if "=" not in assignment:
        raise ConfigurationError(f"override {assignment!r} must look like key.path=value")
    dotted, text = assignment.split("=", 1)
    keys = [k for k in dotted.strip().split(".") if k]
    if not keys:
        raise ConfigurationError(f"override {assignment!r} has an empty key path")
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError:
        value = text
    return keys, value


def apply_overrides(raw: dict, assignments) -> dict:
    """A deep copy of raw with every 'a.b.c=value' assignment applied.

    Intermediate mappings are created as needed; list indices are
    addressed numerically (e.g. scenario.ramps.0.to=9).
    """
    out = copy.deepcopy(raw)
    problems = []
    for assignment in assignments:
        keys, value = parse_override(assignment)
        node = out
        for n, key in enumerate(keys):
            last = n == len(keys) - 1
            if isinstance(node, list):
                try:
                    idx = int(key)
                    node[idx]
                except (ValueError, IndexError):
                    problems.append(f"override {assignment!r}: bad list index {key!r}")
                    break
                if last:
                    node[idx] = value
                else:
                    node = node[idx]
            elif isinstance(node, dict):
                if last:
                    node[key] = value
                else:
                    node = node.setdefault(key, {})
                    if not isinstance(node, (dict, list)):
                        problems.append(
                            f"override {assignment!r}: {'.'.join(keys[:n + 1])} is not a section"
                        )
                        break
            else:
                problems.append(f"override {assignment!r}: {'.'.join(keys[:n])} is not a section")
                break
    if problems:
        raise ConfigurationError(problems)
    return out


# --------------------------------------------------------------------------
# Experiment configuration

_NULLABLE_NUMBER = {"type": ["number", "null"]}

_INPUT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mean": {"type": "number"},
        "std": {"type": "number", "minimum": 0},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "post_mean": _NULLABLE_NUMBER,
        "post_std": _NULLABLE_NUMBER,
        "blend_start": _NULLABLE_NUMBER,
        "blend_stop": _NULLABLE_NUMBER,
    },
}

_RAMP_SCHEMA = {
    "type": "object",
    "required": ["param", "t_start", "t_stop", "value_from", "value_to"],
    "additionalProperties": False,
    "properties": {
        "param": {"enum": list(THETA_LABELS)},
        "t_start": {"type": "number", "minimum": 0},
        "t_stop": {"type": "number", "exclusiveMinimum": 0},
        "value_from": {"type": "number", "exclusiveMinimum": 0},
        "value_to": {"type": "number", "exclusiveMinimum": 0},
    },
}

_BLOCK_VECTOR = {
    "anyOf": [
        {"type": "number", "exclusiveMinimum": 0},
        {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0},
            "minItems": len(THETA_LABELS),
            "maxItems": len(THETA_LABELS),
        },
    ]
}

EXPERIMENT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": 1},
        "name": {"type": "string", "minLength": 1},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "file": {"type": ["string", "null"]},
                "overrides": {"type": "array", "items": {"type": "string"}},
            },
        },
        "scenario": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "duration": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "v0": {"type": "number"},
                "input": _INPUT_SCHEMA,
                "ramps": {"type": "array", "items": _RAMP_SCHEMA},
            },
        },
        "observer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(OBSERVER_KINDS)},
                "centralized": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "gamma": {"type": "number", "exclusiveMinimum": 0},
                        "alpha": {"type": "number", "exclusiveMinimum": 0},
                        "p_quad_gain": {"enum": ["gamma", "alpha"]},
                    },
                },
                "distributed": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "gamma0": {"type": "number", "exclusiveMinimum": 0},
                        "gamma": _BLOCK_VECTOR,
                        "alpha": _BLOCK_VECTOR,
                        "p_quad_gain": {"enum": ["gamma", "alpha"]},
                    },
                },
            },
        },
        "redundancy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "beta": {"type": "number", "minimum": 0},
            },
        },
        "mismatch": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "r": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "s": {"type": "number", "minimum": 0},
                "perturb_kca_sensor": {"type": "boolean"},
            },
        },
        "init": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theta": {
                    "anyOf": [
                        {"enum": ["zeros", "true"]},
                        {"const": True},
                        {
                            "type": "array",
                            "items": {"type": "number"},
                            "minItems": len(THETA_LABELS),
                            "maxItems": len(THETA_LABELS),
                        },
                    ]
                },
                "p_scale": {"type": "number", "exclusiveMinimum": 0},
                "v_hat": {"anyOf": [{"const": "measured"}, {"type": "number"}]},
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trials": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "exclusiveMaximum": 2 ** 64},
                "input_mode": {"enum": list(INPUT_MODES)},
                "log_decimation": {"type": "integer", "minimum": 1},
                "method": {"enum": sorted(METHODS)},
                "substeps": {"type": "integer", "minimum": 1},
                "check_interval": {"type": "integer", "minimum": 1},
                "gate_slack": {"type": "number", "minimum": 0},
                "v_limit": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string", "minLength": 1},
                "trajectories": {"type": "boolean"},
            },
        },
        "sweep": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "overrides": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
    },
}


def default_experiment_dict() -> dict:
    """The complete default experiment tree (the built-in Table-style run)."""
    scen = default_scenario()
    inp = scen.input
    return {
        "schema_version": 1,
        "model": {"file": None, "overrides": []},
        "scenario": {
            "duration": scen.duration,
            "dt": scen.dt,
            "v0": scen.v0,
            "input": {
                "mean": inp.mean, "std": inp.std, "tau": inp.tau,
                "post_mean": inp.post_mean, "post_std": inp.post_std,
                "blend_start": inp.blend_start, "blend_stop": inp.blend_stop,
            },
            "ramps": [
                {"param": r.param, "t_start": r.t_start, "t_stop": r.t_stop,
                 "value_from": r.value_from, "value_to": r.value_to}
                for r in scen.ramps
            ],
        },
        "observer": {
            "kind": "centralized",
            "centralized": {"gamma": 8.0, "alpha": 0.005, "p_quad_gain": "gamma"},
            "distributed": {"gamma0": 8.0, "gamma": 8.0, "alpha": 2e-4,
                            "p_quad_gain": "alpha"},
        },
        "redundancy": {"N": 3, "beta": 5e-5},
        "mismatch": {"r": 0.04, "s": 4.0, "perturb_kca_sensor": False},
        "init": {"theta": "true", "p_scale": 1.0, "v_hat": "measured"},
        "run": {
            "trials": 20,
            "seed": 2024,
            "input_mode": "fixed",
            "log_decimation": 10,
            "method": "euler",
            "substeps": 4,
            "check_interval": 1000,
            "gate_slack": 1e-9,
            "v_limit": 200.0,
        },
        "output": {"dir": "out", "trajectories": True},
    }


def deep_merge(base: dict, update: dict) -> dict:
    """base deep-copied with update merged in; lists replace wholesale."""
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass(frozen=True)
class OutputOptions:
    dir: str = "out"
    trajectories: bool = True


@dataclass(frozen=True)
class BuiltExperiment:
    """Everything one experiment execution needs, plus its echo."""

    label: str
    model: NeuronModel
    experiment: ExperimentConfig
    output: OutputOptions
    effective: dict  # merged dict after all overrides, for echoing


def validate_experiment_dict(raw: dict) -> list[str]:
    return schema_violations(raw, EXPERIMENT_SCHEMA)


def load_experiment_dict(path=None, overrides=()) -> tuple[dict, Path | None]:
    """Merged experiment dict (defaults <- file <- overrides) and base dir.

    The base dir (the config file's directory) anchors relative model-file
    references; it is None for the built-in defaults.
    """
    raw = {} if path is None else load_yaml(path)
    merged = deep_merge(default_experiment_dict(), raw)
    merged = apply_overrides(merged, overrides)
    return merged, (Path(path).resolve().parent if path is not None else None)


def _build_model(section: dict, base_dir: Path | None) -> NeuronModel:
    file = section.get("file")
    if file is None:
        raw = default_model_dict()
    else:
        path = Path(file)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        raw = load_yaml(path)
    return model_from_dict(apply_overrides(raw, section.get("overrides", [])))


def build_experiment(merged: dict, base_dir: Path | None = None,
                     label: str | None = None) -> BuiltExperiment:
    """Constructed objects from a merged experiment dict.

    The dict must be complete (merge over default_experiment_dict first);
    schema violations and constructor complaints raise ConfigurationError.
    """
    problems = validate_experiment_dict(merged)
    if problems:
        raise ConfigurationError(problems)

    model = _build_model(merged["model"], base_dir)
    sc = merged["scenario"]
    scenario = Scenario(
        duration=sc["duration"], dt=sc["dt"], v0=sc["v0"],
        input=OUInput(**sc["input"]),
        ramps=tuple(Ramp(**r) for r in sc["ramps"]),
    )
    ob = merged["observer"]
    init = dict(merged["init"])
    if init["theta"] is True:  # unquoted YAML `true`
        init["theta"] = "true"
    base = TrialConfig(
        scenario=scenario,
        observer_kind=ob["kind"],
        centralized=CentralizedGains(**ob["centralized"]),
        distributed=DistributedGains(**ob["distributed"]),
        redundancy=RedundancyGains(**merged["redundancy"]),
        mismatch=MismatchConfig(
            r=merged["mismatch"]["r"], s=merged["mismatch"]["s"],
            perturb_kca_sensor=merged["mismatch"]["perturb_kca_sensor"],
        ),
        init=ObserverInit(**init),
        log_decimation=merged["run"]["log_decimation"],
        method=merged["run"]["method"],
        substeps=merged["run"]["substeps"],
        check_interval=merged["run"]["check_interval"],
        gate_slack=merged["run"]["gate_slack"],
        v_limit=merged["run"]["v_limit"],
    )
    experiment = ExperimentConfig(
        base=base,
        n_trials=merged["run"]["trials"],
        seed=merged["run"]["seed"],
        input_mode=merged["run"]["input_mode"],
    )
    if label is None:
        label = merged.get("name")
    if label is None:
        label = ob["kind"]
        if ob["kind"] == "redundant":
            label += f" N={merged['redundancy']['N']}"
    return BuiltExperiment(
        label=label,
        model=model,
        experiment=experiment,
        output=OutputOptions(**merged["output"]),
        effective=merged,
    )


def sweep_experiments(merged: dict, base_dir: Path | None = None) -> list[BuiltExperiment]:
    """One BuiltExperiment per sweep entry (entry overrides applied to base)."""
    problems = validate_experiment_dict(merged)
    if problems:
        raise ConfigurationError(problems)
    entries = merged.get("sweep", [])
    if not entries:
        raise ConfigurationError("sweep requires a non-empty 'sweep' list in the config")
    names = [e["name"] for e in entries]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"sweep entry names must be unique, got {names}")
    base = {k: v for k, v in merged.items() if k != "sweep"}
    return [
        build_experiment(apply_overrides(base, e.get("overrides", [])),
                         base_dir, label=e["name"])
        for e in entries
    ]
