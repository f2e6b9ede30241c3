"""Experiment configuration: JSON schema, validation with field paths, builders."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .classes import QClass, WClass, class_from_dict, indicator_w_class
from .constructions import (
    chain_mdp,
    perturbed_q_class,
    random_lowrank_mdp,
    random_mdp,
    reward_shift_q_class,
    small_gap_mdp,
)
from .data import DataDistribution
from .diagnostics import importance_w_class
from .mdp import DeterministicPolicy, TabularMdp, compute_occupancy, greedy_policy, load_mdp, optimal_q

ALGORITHMS = ("fqi", "msbo", "mabo")

_CLASS_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"enum": ["indicator", "linear", "grid", "reward_shift", "perturbed", "importance"]},
        "file": {"type": "string"},
        "members": {"type": "array"},
        "scaled": {"type": "boolean"},
        "size": {"type": "integer", "minimum": 1},
        "scale": {"type": "number", "minimum": 0},
        "seed": {"type": "integer"},
        "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "features": {"type": "array"},
        "thetas": {"type": "array"},
    },
    "oneOf": [{"required": ["type"]}, {"required": ["file"]}, {"required": ["members"]}],
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["mdp", "q_class", "algorithms", "n", "seeds"],
    "additionalProperties": False,
    "properties": {
        "mdp": {
            "type": "object",
            "oneOf": [{"required": ["file"]}, {"required": ["generator"]}],
            "properties": {
                "file": {"type": "string"},
                "generator": {"enum": ["random", "small_gap", "chain", "lowrank"]},
                "num_states": {"type": "integer", "minimum": 1},
                "num_actions": {"type": "integer", "minimum": 1},
                "length": {"type": "integer", "minimum": 1},
                "rank": {"type": "integer", "minimum": 1},
                "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "seed": {"type": "integer"},
                "r_max": {"type": "number", "exclusiveMinimum": 0},
                "gap": {"type": "number", "minimum": 0},
            },
        },
        "mu": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["uniform", "occupancy", "file"]},
                "policy": {"oneOf": [{"const": "optimal"},
                                     {"type": "array", "items": {"type": "integer", "minimum": 0}}]},
                "mix": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "file": {"type": "string"},
            },
        },
        "q_class": _CLASS_SCHEMA,
        "f_class": _CLASS_SCHEMA,
        "w_class": _CLASS_SCHEMA,
        "algorithms": {"type": "array", "minItems": 1, "uniqueItems": True,
                       "items": {"enum": list(ALGORITHMS)}},
        "fqi_iterations": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "seeds": {"type": "array", "minItems": 1, "items": {"type": "integer"}},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "mode": {"enum": ["empirical", "population"]},
        "t_max": {"type": "integer", "minimum": 0},
        "output": {
            "type": "object",
            "properties": {
                "path": {"type": "string"},
                "format": {"enum": ["csv", "json"]},
                "append": {"type": "boolean"},
            },
        },
    },
}


class ConfigError(ValueError):
    """Validation failure; ``errors`` lists ``"field.path: message"`` strings."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass
class ExperimentConfig:
    mdp_source: dict
    q_class: dict
    algorithms: list[str]
    n: int
    seeds: list[int]
    mu_source: dict = field(default_factory=lambda: {"type": "uniform"})
    f_class: dict | None = None
    w_class: dict | None = None
    fqi_iterations: int = 20
    delta: float = 0.05
    mode: str = "empirical"
    t_max: int = 100
    output_path: str | None = None
    output_format: str = "csv"
    append: bool = False
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path | None = None) -> "ExperimentConfig":
        validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
        errors = [f"{_path(e)}: {e.message}" for e in sorted(validator.iter_errors(raw), key=_path)]
        if errors:
            raise ConfigError(errors)
        out = raw.get("output", {})
        cfg = cls(
            mdp_source=raw["mdp"], q_class=raw["q_class"], algorithms=list(raw["algorithms"]),
            n=raw["n"], seeds=list(raw["seeds"]), mu_source=raw.get("mu", {"type": "uniform"}),
            f_class=raw.get("f_class"), w_class=raw.get("w_class"),
            fqi_iterations=raw.get("fqi_iterations", 20), delta=raw.get("delta", 0.05),
            mode=raw.get("mode", "empirical"), t_max=raw.get("t_max", 100),
            output_path=out.get("path"), output_format=out.get("format", "csv"),
            append=out.get("append", False),
            base_dir=Path(base_dir) if base_dir is not None else Path.cwd(),
        )
        cfg._check_files()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([f"<root>: invalid JSON ({exc})"]) from exc
        return cls.from_dict(raw, base_dir=path.parent)

    def resolve(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.base_dir / p

    def _check_files(self) -> None:
        errors = []
        refs = [("mdp.file", self.mdp_source.get("file")),
                ("mu.file", self.mu_source.get("file") if self.mu_source.get("type") == "file" else None)]
        for key in ("q_class", "f_class", "w_class"):
            spec = getattr(self, key)
            if spec is not None:
                refs.append((f"{key}.file", spec.get("file")))
        if self.mu_source.get("type") == "file" and "file" not in self.mu_source:
            errors.append("mu.file: required when mu.type is 'file'")
        for where, name in refs:
            if name is not None and not self.resolve(name).is_file():
                errors.append(f"{where}: file not found: {name}")
        if errors:
            raise ConfigError(errors)

    # -- builders -------------------------------------------------------------

    def build_mdp(self) -> TabularMdp:
        src = self.mdp_source
        if "file" in src:
            return load_mdp(self.resolve(src["file"]))
        gen, gamma, seed = src["generator"], src.get("gamma", 0.9), src.get("seed", 0)
        if gen == "chain":
            return chain_mdp(src.get("length", 5), gamma)[0]
        S, A = src.get("num_states", 4), src.get("num_actions", 2)
        if gen == "random":
            return random_mdp(S, A, gamma, seed, r_max=src.get("r_max", 1.0))
        if gen == "small_gap":
            return small_gap_mdp(S, A, gamma, seed, gap=src.get("gap", 0.2))
        return random_lowrank_mdp(S, A, src.get("rank", 2), seed, gamma=gamma, r_max=src.get("r_max", 1.0))[1]

    def build_mu(self, mdp: TabularMdp) -> DataDistribution:
        src = self.mu_source
        S, A = mdp.shape
        if src["type"] == "uniform":
            return DataDistribution.uniform(S, A)
        if src["type"] == "file":
            raw = json.loads(self.resolve(src["file"]).read_text())
            return DataDistribution(np.asarray(raw["mu"] if isinstance(raw, dict) else raw, dtype=float))
        policy = src.get("policy", "optimal")
        pi = greedy_policy(optimal_q(mdp)) if policy == "optimal" else DeterministicPolicy(tuple(policy))
        pi.check(mdp)
        # the pure occupancy of a deterministic policy misses every other action
        mix = src.get("mix", 0.1)
        mu = (1.0 - mix) * compute_occupancy(mdp, pi) + mix / (S * A)
        return DataDistribution(mu / mu.sum())

    def build_q_class(self, spec: dict, mdp: TabularMdp, mu: DataDistribution) -> QClass:
        if "file" in spec:
            spec = json.loads(self.resolve(spec["file"]).read_text())
        kind = spec.get("type")
        if kind == "reward_shift":
            return reward_shift_q_class(mdp, spec.get("size", 20), spec.get("scale", 0.1), spec.get("seed", 0))
        if kind == "perturbed":
            return perturbed_q_class(optimal_q(mdp), spec.get("size", 20), spec.get("scale", 0.1),
                                     mdp.v_max, spec.get("seed", 0))
        return class_from_dict(spec, mdp, mu, kind="q")

    def build_classes(self, mdp: TabularMdp, mu: DataDistribution) -> tuple[QClass, QClass, WClass]:
        q_class = self.build_q_class(self.q_class, mdp, mu)
        f_class = q_class if self.f_class is None else self.build_q_class(self.f_class, mdp, mu)
        if self.w_class is None:
            w_class = indicator_w_class(*mdp.shape, mu, scaled=True)
        else:
            spec = self.w_class
            if "file" in spec:
                spec = json.loads(self.resolve(spec["file"]).read_text())
            if spec.get("type") == "importance":
                w_class = importance_w_class(mdp, mu, q_class)
            else:
                w_class = class_from_dict(spec, mdp, mu, kind="w")
        if q_class.shape != mdp.shape or f_class.shape != mdp.shape or w_class.members.shape[1:] != mdp.shape:
            raise ConfigError(["q_class/f_class/w_class: member shape does not match the MDP"])
        return q_class, f_class, w_class


def _path(error: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in error.absolute_path]
    return ".".join(parts) if parts else "<root>"
