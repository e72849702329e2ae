"""JSON experiment configuration."""

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import jsonschema

from .exceptions import ConfigurationError
from .harness import REF_MODES, RunConfig, init_model
from .kernel import MergeConfig

_NUMBER = {"type": "number"}
_INT = {"type": "integer"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed": _INT,
                "grid": {"type": "integer", "minimum": 1},
                "dim": {"type": "integer", "minimum": 1},
                "hidden": {"type": ["integer", "null"], "minimum": 1},
                "n_blocks": {"type": "integer", "minimum": 1},
            },
        },
        "batch": {"type": "integer", "minimum": 1},
        "steps": {"type": "integer", "minimum": 1},
        "seeds": {"type": "array", "items": _INT, "minItems": 1},
        "merge": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": _NUMBER,
                "tau": _NUMBER,
                "t_window": {"type": "array", "items": _NUMBER,
                             "minItems": 2, "maxItems": 2},
                "schedule": {"enum": ["constant", "linear-decay"]},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "ref_mode": {"enum": list(REF_MODES)},
        "block_range": {
            "oneOf": [
                {"type": "null"},
                {"type": "array", "items": {"type": "integer", "minimum": 0},
                 "maxItems": 2, "not": {"minItems": 1, "maxItems": 1}},
            ]
        },
        "cfg_like_scale": {"type": ["number", "null"]},
        "noise_mix": {"type": "number", "minimum": 0, "maximum": 1},
        "assets": {"type": ["string", "null"]},
        "output": {"type": ["string", "null"]},
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    run: RunConfig
    seeds: tuple
    assets: Optional[Path] = None
    output: Optional[Path] = None

    def build_model(self):
        return init_model(**self.model)

    def run_for(self, seed, alpha=None):
        merge = self.run.merge if alpha is None else replace(self.run.merge, alpha=alpha)
        return replace(self.run, seed=seed, merge=merge)

    def to_dict(self):
        m = self.run.merge
        return {
            "model": dict(self.model),
            "batch": self.run.batch,
            "steps": self.run.steps,
            "seeds": list(self.seeds),
            "merge": {"alpha": m.alpha, "tau": m.tau, "t_window": list(m.t_window),
                      "schedule": m.schedule_kind, "epsilon": m.epsilon},
            "ref_mode": self.run.ref_mode,
            "block_range": None if self.run.block_range is None else list(self.run.block_range),
            "cfg_like_scale": self.run.cfg_like_scale,
            "noise_mix": self.run.noise_mix,
        }


def parse_config(doc, base_dir=None):
    """Validate a config mapping and build an :class:`ExperimentConfig`."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigurationError(f"invalid config at {where}: {e.message}")
    base_dir = Path(base_dir) if base_dir else Path.cwd()
    model = {"seed": 0, "grid": 8, "dim": 32, "hidden": None, "n_blocks": 4}
    model.update(doc.get("model", {}))
    m = doc.get("merge", {})
    merge = MergeConfig(
        alpha=m.get("alpha", 0.9),
        tau=m.get("tau", 0.7),
        t_window=tuple(m.get("t_window", (1000, 600))),
        schedule_kind=m.get("schedule", "constant"),
        epsilon=m.get("epsilon", 1e-6),
    )
    br = doc.get("block_range")
    seeds = tuple(doc.get("seeds", [0]))
    run = RunConfig(
        batch=doc.get("batch", 4),
        steps=doc.get("steps", 10),
        seed=seeds[0],
        merge=merge,
        ref_mode=doc.get("ref_mode", "first-in-batch"),
        block_range=None if br is None else tuple(br),
        cfg_like_scale=doc.get("cfg_like_scale"),
        noise_mix=doc.get("noise_mix", 0.5),
    )
    run.active_blocks(model["n_blocks"])
    assets = doc.get("assets")
    if run.ref_mode == "external-asset" and not assets:
        raise ConfigurationError("ref_mode external-asset requires an 'assets' directory")
    output = doc.get("output")
    return ExperimentConfig(
        model=model,
        run=run,
        seeds=seeds,
        assets=(base_dir / assets) if assets else None,
        output=(base_dir / output) if output else None,
    )


def load_config(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} not found")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config file {path} is not valid JSON: {e}")
    return parse_config(doc, base_dir=path.parent)
