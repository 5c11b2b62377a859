"""Experiment configuration: schema, defaults, loading.

One JSON file (comments allowed, stripped at load) describes the magnet
model, controller weights, admissible sets, and the scenario list. Lengths in
the file are millimeters where the key says so; everything is converted to SI
at this boundary. Defaults reproduce the reference hardware and tuned
weights, so a bare `magpen run` executes the standard suite.
"""

from __future__ import annotations

import json
import re

import jsonschema

from .dynamics import AdmissibleSets, KalmanConfig
from .em import MagnetModel
from .mpcc import CostWeights
from .simulate import ScenarioConfig, standard_suite

SCHEMA_VERSION = 1

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "model": {
            "type": "object",
            "properties": {
                "Br_t": {"type": "number", "exclusiveMinimum": 0},
                "V_cm3": {"type": "number", "exclusiveMinimum": 0},
                "m_m": {"type": "number", "exclusiveMinimum": 0},
                "h_mm": {"type": "number", "exclusiveMinimum": 0},
                "h_p_mm": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "weights": {
            "type": "object",
            "properties": {
                "w_l": {"type": "number"}, "w_c": {"type": "number"},
                "w_theta": {"type": "number"}, "w_theta_dot": {"type": "number"},
                "w_f": {"type": "number"}, "w_d": {"type": "number"},
                "w_alpha": {"type": "number"}, "c": {"type": "number"},
                "horizon_decay": {"type": "number"},
                "R": {"type": "array", "items": {"type": "number"},
                      "minItems": 4, "maxItems": 4},
                "N": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "sets": {
            "type": "object",
            "properties": {
                "workspace_mm": {"type": "array"},
                "v_max": {"type": "number"}, "a_max": {"type": "number"},
                "alpha_dot_max": {"type": "number"},
                "theta_dot_max": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "kalman": {
            "type": "object",
            "properties": {
                "accel_noise": {"type": "number"},
                "meas_noise_mm": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "out_dir": {"type": "string"},
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "scenarios": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string"},
                    "shape": {"type": "string"},
                    "shape_params": {"type": "object"},
                    "waypoints_mm": {"type": "array"},
                    "closed": {"type": "boolean"},
                    "path_file": {"type": "string"},
                    "strategy": {"enum": ["ol", "mpc", "mpcc"]},
                    "duration": {"type": "number", "minimum": 0},
                    "seed": {"type": "integer"},
                    "start_theta": {"type": "number"},
                    "initial_offset_mm": {"type": "array"},
                    "user": {"type": "object"},
                    "v_ref": {"type": "number"},
                    "pause": {"type": "array"},
                    "timing": {"type": "boolean"},
                },
                "required": ["name"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["schema_version"],
    "additionalProperties": False,
}

_COMMENT_RE = re.compile(r'("(?:[^"\\]|\\.)*")|//[^\n]*|/\*.*?\*/', re.DOTALL)


def strip_comments(text):
    """Remove // and /* */ comments outside of string literals."""
    return _COMMENT_RE.sub(lambda m: m.group(1) or "", text)


def default_config():
    return {"schema_version": SCHEMA_VERSION}


def load_config(path=None):
    """Load, strip comments, and schema-validate an experiment config."""
    if path is None:
        data = default_config()
    else:
        with open(path) as fh:
            data = json.loads(strip_comments(fh.read()))
    jsonschema.validate(data, SCHEMA)
    return ExperimentConfig(data)


class ExperimentConfig:
    """Resolved experiment configuration with SI-unit accessors."""

    def __init__(self, data):
        jsonschema.validate(data, SCHEMA)
        self.data = data

    @property
    def dt(self):
        return self.data.get("dt", 0.01)

    @property
    def out_dir(self):
        return self.data.get("out_dir", "runs")

    @property
    def seeds(self):
        return list(self.data.get("seeds", [1]))

    def model(self):
        m = self.data.get("model", {})
        kw = {}
        if "Br_t" in m:
            kw["Br"] = m["Br_t"]
        if "V_cm3" in m:
            kw["V"] = m["V_cm3"] * 1e-6
        if "m_m" in m:
            kw["m_m"] = m["m_m"]
        if "h_mm" in m:
            kw["h"] = m["h_mm"] * 1e-3
        if "h_p_mm" in m:
            kw["h_p"] = m["h_p_mm"] * 1e-3
        return MagnetModel.from_hardware(**kw)

    def model_overrides(self):
        m = self.data.get("model", {})
        out = {}
        if "Br_t" in m:
            out["Br"] = m["Br_t"]
        if "V_cm3" in m:
            out["V"] = m["V_cm3"] * 1e-6
        for k in ("m_m",):
            if k in m:
                out[k] = m[k]
        if "h_mm" in m:
            out["h"] = m["h_mm"] * 1e-3
        if "h_p_mm" in m:
            out["h_p"] = m["h_p_mm"] * 1e-3
        return out

    def weights_overrides(self):
        w = dict(self.data.get("weights", {}))
        if "R" in w:
            w["R"] = tuple(w["R"])
        return w

    def weights(self):
        return CostWeights(**self.weights_overrides())

    def sets_overrides(self):
        s = self.data.get("sets", {})
        out = {}
        if "workspace_mm" in s:
            ws = s["workspace_mm"]
            out["workspace"] = ((ws[0][0] * 1e-3, ws[0][1] * 1e-3),
                                (ws[1][0] * 1e-3, ws[1][1] * 1e-3))
        for k in ("v_max", "a_max", "alpha_dot_max"):
            if k in s:
                out[k] = s[k]
        if "theta_dot_max" in s:
            out["theta_dot_range"] = (0.0, s["theta_dot_max"])
        return out

    def sets(self):
        return AdmissibleSets(**self.sets_overrides())

    def kalman(self):
        k = self.data.get("kalman", {})
        kw = {}
        if "accel_noise" in k:
            kw["accel_noise"] = k["accel_noise"]
        if "meas_noise_mm" in k:
            kw["meas_noise"] = k["meas_noise_mm"] * 1e-3
        return KalmanConfig(**kw)

    def scenarios(self, suite=None, scenario=None, seed=None, strategy=None):
        """Resolved ScenarioConfig list honoring CLI filters."""
        seeds = [seed] if seed is not None else self.seeds
        out = []
        raw = self.data.get("scenarios")
        if suite == "standard" or not raw:
            strategies = [strategy] if strategy else ["mpcc", "mpc", "ol"]
            for s in seeds:
                for st in strategies:
                    for cfg in standard_suite(s, st):
                        cfg.dt = self.dt
                        cfg.weights = self.weights_overrides()
                        cfg.sets = self.sets_overrides()
                        cfg.model = self.model_overrides()
                        out.append(cfg)
        else:
            for item in raw:
                for s in seeds:
                    out.append(self._scenario_from_dict(item, s))
        if strategy:
            out = [c for c in out if c.strategy == strategy]
        if scenario:
            out = [c for c in out if c.name == scenario]
        return out

    def _scenario_from_dict(self, item, seed):
        kw = dict(item)
        kw.pop("path_file", None)
        if "initial_offset_mm" in kw:
            off = kw.pop("initial_offset_mm")
            kw["initial_offset"] = (off[0] * 1e-3, off[1] * 1e-3)
        if "pause" in kw and kw["pause"] is not None:
            kw["pause"] = tuple(kw["pause"])
        kw.setdefault("seed", seed)
        kw["dt"] = self.dt
        kw["weights"] = self.weights_overrides()
        kw["sets"] = self.sets_overrides()
        kw["model"] = self.model_overrides()
        cfg = ScenarioConfig(**kw)
        if "path_file" in item:
            from .paths import load_path_json
            with open(item["path_file"]) as fh:
                data = json.load(fh)
            cfg.waypoints_mm = data["points_mm"]
            cfg.closed = bool(data.get("closed", False))
        return cfg

    def resolved(self):
        """Full config with defaults made explicit (written into run dirs)."""
        out = dict(self.data)
        out.setdefault("dt", self.dt)
        out.setdefault("out_dir", self.out_dir)
        out.setdefault("seeds", self.seeds)
        w = self.weights()
        out["weights"] = {k: getattr(w, k) for k in
                          ("w_l", "w_c", "w_theta", "w_theta_dot", "w_f",
                           "w_d", "w_alpha", "c", "horizon_decay", "N")}
        out["weights"]["R"] = list(self.weights().R)
        m = self.model()
        out["model"] = {"Br_t": m.Br, "V_cm3": m.V * 1e6, "m_m": m.m_m,
                        "h_mm": m.h * 1e3, "h_p_mm": m.h_p * 1e3}
        s = self.sets()
        out["sets"] = {
            "workspace_mm": [[s.workspace[0][0] * 1e3, s.workspace[0][1] * 1e3],
                             [s.workspace[1][0] * 1e3, s.workspace[1][1] * 1e3]],
            "v_max": s.v_max, "a_max": s.a_max,
            "alpha_dot_max": s.alpha_dot_max,
            "theta_dot_max": s.theta_dot_range[1],
        }
        return out
