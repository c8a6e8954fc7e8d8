"""JSON run configuration: schema, defaults and construction of a RunConfig."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import numpy as np

from .env import DISTRIBUTIONS, ChannelModel
from .harness import RunConfig
from .matching import MeanMatrix


class ConfigError(ValueError):
    pass


_int_or_null = {"type": ["integer", "null"], "minimum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["system", "rewards", "horizon"],
    "properties": {
        "system": {
            "type": "object",
            "additionalProperties": False,
            "required": ["k", "m"],
            "properties": {
                "k": {"type": "integer", "minimum": 1},
                "m": {"type": "integer", "minimum": 2},
            },
        },
        "rewards": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "matrix": {
                    "type": "array",
                    "items": {"type": ["number", "array"], "items": {"type": "number"}},
                },
                "matrix_file": {"type": "string"},
                "generator": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["uniform", "planted"]},
                        "low": {"type": "number", "minimum": 0, "maximum": 1},
                        "high": {"type": "number", "minimum": 0, "maximum": 1},
                        "top": {"type": "number", "minimum": 0, "maximum": 1},
                        "decimals": {"type": "integer", "minimum": 1, "maximum": 15},
                    },
                },
                "distribution": {"enum": list(DISTRIBUTIONS)},
                "width": {"type": "number", "minimum": 0},
                "sigma": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "allow_zero_atom": {"type": "boolean"},
            },
            "oneOf": [
                {"required": ["matrix"]},
                {"required": ["matrix_file"]},
                {"required": ["generator"]},
            ],
        },
        "protocol": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "delta": {
                    "oneOf": [
                        {"const": "oracle"},
                        {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    ]
                },
                "tiebreak_mode": {"enum": ["protocol", "deterministic"]},
                "t_fix": _int_or_null,
                "gamma": _int_or_null,
                "rounds": _int_or_null,
            },
        },
        "horizon": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "steps": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 1},
            },
            "oneOf": [{"required": ["steps"]}, {"required": ["epochs"]}],
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "count": {"type": "integer", "minimum": 1},
                "start": {"type": "integer", "minimum": 0},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trace": {"type": "string"},
                "summary": {"type": "string"},
                "curve": {"type": "string"},
                "plot": {"type": "string"},
            },
        },
    },
}

DEFAULTS = {
    "rewards": {"distribution": "point", "width": 0.0, "sigma": 1.0, "seed": 0, "allow_zero_atom": False},
    "protocol": {"delta": "oracle", "tiebreak_mode": "protocol", "t_fix": None, "gamma": None, "rounds": None},
    "sweep": {"count": 20, "start": 0, "workers": 1},
    "output": {"trace": "trace.csv", "summary": "summary.json", "curve": "curve.csv", "plot": "regret.svg"},
}

GENERATOR_DEFAULTS = {
    "uniform": {"low": 0.1, "high": 0.9, "decimals": 3},
    "planted": {"low": 0.65, "high": 0.75, "top": 0.9, "decimals": 3},
}


def generate_matrix(k: int, m: int, spec: dict, seed: int) -> list[list[float]]:
    """Seeded random means; ``planted`` puts ``top`` on a random injective matching."""
    spec = {**GENERATOR_DEFAULTS[spec["kind"]], **spec}
    rng = np.random.default_rng(seed)
    values = np.round(rng.uniform(spec["low"], spec["high"], size=(k, m)), spec["decimals"])
    if spec["kind"] == "planted":
        channels = rng.permutation(m)[:k]
        values[np.arange(k), channels] = spec["top"]
    return values.tolist()


def _matrix_rows(raw, k: int, m: int) -> list[list[float]]:
    if raw and all(isinstance(r, list) for r in raw):
        rows = [[float(v) for v in r] for r in raw]
    elif all(isinstance(v, (int, float)) for v in raw):
        if len(raw) != k * m:
            raise ConfigError(f"flat matrix needs {k * m} values, got {len(raw)}")
        rows = [[float(v) for v in raw[j * m:(j + 1) * m]] for j in range(k)]
    else:
        raise ConfigError("matrix must be a flat list or a list of rows")
    if len(rows) != k or any(len(r) != m for r in rows):
        raise ConfigError(f"matrix shape does not match k={k}, m={m}")
    return rows


def load_matrix_file(path: str | Path) -> MeanMatrix:
    """Read ``{"k": .., "m": .., "values": [...]}`` (flat row-major or nested)."""
    data = json.loads(Path(path).read_text())
    try:
        jsonschema.validate(data, {
            "type": "object",
            "required": ["k", "m", "values"],
            "properties": {
                "k": {"type": "integer", "minimum": 1},
                "m": {"type": "integer", "minimum": 1},
                "values": {"type": "array"},
            },
        })
    except jsonschema.ValidationError as err:
        raise ConfigError(f"matrix file: {err.message}") from None
    try:
        return MeanMatrix(_matrix_rows(data["values"], data["k"], data["m"]))
    except ValueError as err:
        raise ConfigError(str(err)) from None


def resolve(raw: dict, base_dir: str | Path = ".", allow_zero_atom: bool | None = None) -> dict:
    """Validate and fill defaults; the matrix is always resolved inline."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {err.message}") from None
    cfg = copy.deepcopy(raw)
    for section, defaults in DEFAULTS.items():
        cfg[section] = {**defaults, **cfg.get(section, {})}
    if allow_zero_atom is not None:
        cfg["rewards"]["allow_zero_atom"] = allow_zero_atom
    k, m = cfg["system"]["k"], cfg["system"]["m"]
    if k > m:
        raise ConfigError(f"need k <= m, got k={k}, m={m}")
    rewards = cfg["rewards"]
    if "matrix_file" in rewards:
        matrix = load_matrix_file(Path(base_dir) / rewards.pop("matrix_file"))
        if (matrix.k, matrix.m) != (k, m):
            raise ConfigError("matrix file shape does not match system.k/system.m")
        rows = [list(r) for r in matrix.values]
    elif "generator" in rewards:
        gen = {**GENERATOR_DEFAULTS[rewards["generator"]["kind"]], **rewards.pop("generator")}
        rows = generate_matrix(k, m, gen, rewards["seed"])
    else:
        rows = _matrix_rows(rewards["matrix"], k, m)
    rewards["matrix"] = rows
    # only file names are kept so that --out-dir does not change the summary
    cfg["output"] = {name: Path(v).name for name, v in cfg["output"].items()}
    sweep = cfg["sweep"]
    if "seeds" not in sweep:
        sweep["seeds"] = list(range(sweep["start"], sweep["start"] + sweep["count"]))
    sweep.pop("count", None)
    sweep.pop("start", None)
    return cfg


def build(cfg: dict) -> RunConfig:
    """RunConfig from a resolved config dict."""
    rewards, protocol, horizon = cfg["rewards"], cfg["protocol"], cfg["horizon"]
    try:
        model = ChannelModel(
            MeanMatrix(rewards["matrix"]),
            distribution=rewards["distribution"],
            width=rewards["width"],
            sigma=rewards["sigma"],
            allow_zero_atom=rewards["allow_zero_atom"],
        )
        return RunConfig(
            model,
            delta=protocol["delta"],
            tiebreak_mode=protocol["tiebreak_mode"],
            t_fix=protocol["t_fix"],
            gamma=protocol["gamma"],
            rounds=protocol["rounds"],
            steps=horizon.get("steps"),
            epochs=horizon.get("epochs"),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err


def load(path: str | Path, allow_zero_atom: bool | None = None) -> tuple[dict, RunConfig]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON: {err}") from None
    cfg = resolve(raw, path.parent, allow_zero_atom)
    return cfg, build(cfg)
