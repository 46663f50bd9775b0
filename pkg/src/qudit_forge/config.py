"""Experiment configuration: JSON schema, defaults, conversion to domain objects."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .dynamics import DephasingModel
from .ensemble import DetectionSettings, EnsembleSpec
from .gates import RefocusSpec
from .spin_model import SpinSystemParams, StaticField

__all__ = ["ConfigError", "CONFIG_SCHEMA", "ExperimentConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_transition = {"enum": [[0, 1], [1, 2]]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


CONFIG_SCHEMA = _obj(
    {
        "system": _obj(
            {
                "params": _obj({k: _num for k in SpinSystemParams.__dataclass_fields__}),
                "B_vec": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                "temperature": _pos,
            }
        ),
        "ensemble": _obj(
            {
                "strain_target": {"enum": ["hyperfine", "zeeman"]},
                "relative_sigma": {"type": "number", "minimum": 0},
                "sampling": {"enum": ["gauss-hermite", "monte-carlo"]},
                "n_points": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "independent": {"type": "boolean"},
                "cutoff": _pos,
            }
        ),
        "pulses": _obj(
            {
                "t_pi": _pos,
                "mode": {"enum": ["ideal", "rwa", "lab"]},
                "spacing": {"enum": ["centers", "edges"]},
                "crosstalk": {"type": "boolean"},
                "lab_dt": _pos,
            }
        ),
        "detection": _obj(
            {
                "t_pi": _pos,
                "tau": _pos,
                "window": _pos,
                "dt": _pos,
                "phase_cycle": {"type": "integer", "minimum": 1},
                "exorcycle": {"type": "boolean"},
                "mode": {"enum": ["ideal", "rwa", "lab"]},
                "crosstalk": {"type": "boolean"},
            }
        ),
        "sequence": _obj(
            {
                "kind": {"enum": ["qft", "custom"]},
                "path": {"type": "string"},
                "variants": {"type": "array", "items": {"enum": ["A", "B"]}, "minItems": 1, "uniqueItems": True},
            }
        ),
        "initial_state": {
            "oneOf": [
                {"type": "integer", "minimum": 0, "maximum": 2},
                {"type": "array", "items": _pair, "minItems": 3, "maxItems": 3},
            ]
        },
        "refocus": _obj(
            {
                "mode": {"enum": ["on", "off", "both"]},
                "tau": _pos,
                "free_phases": {"type": "array", "items": _num, "minItems": 6, "maxItems": 6},
                "frame_tracking": {"type": "boolean"},
            }
        ),
        "dephasing": _obj(
            {
                "envelope": {"enum": ["off", "gaussian", "exponential"]},
                "T2_us": _obj({"01": _pos, "12": _pos, "02": _pos}),
            }
        ),
        "echo": _obj(
            {
                "strain_targets": {
                    "type": "array",
                    "items": {"enum": ["hyperfine", "zeeman"]},
                    "minItems": 1,
                    "uniqueItems": True,
                },
                "zeeman_sigma": {"type": "number", "minimum": 0},
                "resolved_t_pi": _pos,
            }
        ),
        "decay": _obj(
            {
                "max_duration_ns": _pos,
                "n_points": {"type": "integer", "minimum": 2},
                "t_max_us": _pos,
            }
        ),
        "tomo": _obj({"intensities": {"type": "string"}}),
        "outputs": _obj({"directory": {"type": "string"}}),
    }
)


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    params: SpinSystemParams
    field: StaticField
    temperature: float
    ensemble: EnsembleSpec
    t_pi: float
    mode: str
    spacing: str
    crosstalk: bool
    lab_dt: float
    detection: DetectionSettings
    sequence: dict
    initial_state: object
    refocus_mode: str
    refocus: RefocusSpec
    dephasing: DephasingModel
    echo: dict
    decay: dict
    tomo: dict
    out_dir: Path
    base_dir: Path

    def resolve(self, path):
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _initial_state(value):
    if isinstance(value, int):
        return value
    v = np.array([complex(re, im) for re, im in value])
    if np.linalg.norm(v) == 0:
        raise ConfigError("initial_state: vector must be nonzero")
    return v


def parse_config(raw, base_dir=".", out_override=None):
    """Validate ``raw`` against the schema and build domain objects."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field '{where}': {exc.message}") from None
    g = lambda sec: raw.get(sec, {})
    try:
        system = g("system")
        params = SpinSystemParams(**system.get("params", {}))
        field = StaticField(tuple(system.get("B_vec", (0.2, 0.0, 0.0))))
        ens = EnsembleSpec(**g("ensemble"))
        pulses = g("pulses")
        mode = pulses.get("mode", "rwa")
        crosstalk = pulses.get("crosstalk", False)
        det_raw = dict(g("detection"))
        det_raw.setdefault("mode", "ideal" if mode == "ideal" else "rwa")
        det_raw.setdefault("crosstalk", crosstalk)
        det_raw.setdefault("lab_dt", pulses.get("lab_dt", 0.05))
        detection = DetectionSettings(**det_raw)
        ref_raw = g("refocus")
        refocus = RefocusSpec(
            tau=ref_raw.get("tau", 2000.0),
            free_phases=tuple(ref_raw.get("free_phases", RefocusSpec().free_phases)),
            frame_tracking=ref_raw.get("frame_tracking", True),
        )
        deph = g("dephasing")
        pairs = {"01": (0, 1), "12": (1, 2), "02": (0, 2)}
        dephasing = DephasingModel(
            {pairs[k]: v for k, v in deph.get("T2_us", {}).items()}, deph.get("envelope", "off")
        )
        seq = {"kind": "qft", "variants": ["A", "B"], **g("sequence")}
        if seq["kind"] == "custom" and "path" not in seq:
            raise ConfigError("config field 'sequence/path': required for a custom sequence")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    out = out_override or g("outputs").get("directory", "out")
    base = Path(base_dir)
    out = Path(out)
    return ExperimentConfig(
        raw=raw,
        params=params,
        field=field,
        temperature=float(system.get("temperature", 1.4)),
        ensemble=ens,
        t_pi=float(pulses.get("t_pi", 360.0)),
        mode=mode,
        spacing=pulses.get("spacing", "centers"),
        crosstalk=crosstalk,
        lab_dt=float(pulses.get("lab_dt", 0.05)),
        detection=detection,
        sequence=seq,
        initial_state=_initial_state(raw.get("initial_state", 0)),
        refocus_mode=ref_raw.get("mode", "both"),
        refocus=refocus,
        dephasing=dephasing,
        echo={"strain_targets": ["hyperfine", "zeeman"], "resolved_t_pi": 360.0, **g("echo")},
        decay={"max_duration_ns": 1440.0, "n_points": 145, "t_max_us": 300.0, **g("decay")},
        tomo=g("tomo"),
        out_dir=out if out.is_absolute() else base / out,
        base_dir=base,
    )


def load_config(path, out_override=None):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(raw, base_dir=path.parent, out_override=out_override)
