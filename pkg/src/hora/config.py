"""JSON run configuration: schema, defaults and validation.

Every command reads one JSON object.  Unknown keys, duplicate keys, wrong
types and violated invariants raise :class:`InvalidConfigError` whose
``key`` is the dotted path of the offending entry.

rate-sweep / sample-efficiency::

    {"kind": "shared", "dims": {"H": 2, "L": 2, "L_fit": 3, "d": 2, "r": 1},
     "n_grid": [200, 632, 2000, 6325, 20000], "trials": 10, "sigma_noise": 0.1,
     "master_seed": 0, "rho": 1.0, "timing": false,
     "truth": {"delta_sep": 1.5, "key_scale": 40.0, "theta_max": 1.0, "c_max": 2.0,
               "sigma1": "sigmoid", "sigma2": "sigmoid"},
     "optimizer": {"restarts": 5, "max_iters": 10000, "tol": 1e-10, "step_rule": "lbfgsb"},
     "evaluation": {"n_eval": 10000, "x_max": 1.0}}

plus ``"compare": true`` (rate-sweep: also run the other family) or
``"fractions"`` and ``"n_max"`` (sample-efficiency).  See the README for the
verify-equivalence, grad-check and param-audit keys.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .attention import AttentionConfig
from .errors import InvalidConfigError
from .experiments import SweepConfig, fraction_grid

COMMANDS = ("verify-equivalence", "grad-check", "rate-sweep", "sample-efficiency", "param-audit")

_INT, _REAL, _STR, _BOOL = "int", "real", "str", "bool"

_SWEEP = {
    "kind": (_STR, "shared"),
    "dims": {"H": (_INT, 2), "L": (_INT, 2), "L_fit": (_INT, 3), "d": (_INT, 2), "r": (_INT, 1)},
    "n_grid": ("int_list", [200, 632, 2000, 6325, 20000]),
    "trials": (_INT, 10),
    "sigma_noise": (_REAL, 0.1),
    "master_seed": (_INT, 0),
    "rho": (_REAL, 1.0),
    "timing": (_BOOL, False),
    "truth": {"delta_sep": (_REAL, 1.5), "key_scale": (_REAL, 40.0), "theta_max": (_REAL, 1.0),
              "c_max": (_REAL, 2.0), "sigma1": ("activation", "sigmoid"), "sigma2": ("activation", "sigmoid")},
    "optimizer": {"restarts": (_INT, 5), "max_iters": (_INT, 10_000), "tol": (_REAL, 1e-10),
                  "step_rule": (_STR, "lbfgsb")},
    "evaluation": {"n_eval": (_INT, 10_000), "x_max": (_REAL, 1.0)},
}

DEFAULT_AUDIT_GRID = [
    {"d": d, "H": H, "r": r, "d_e": d_e, "d_hid": d_hid}
    for d, H in ((64, 4), (128, 8), (256, 4), (768, 12))
    for r, d_e, d_hid in ((1, 4, 2), (2, 8, 4), (4, 8, 4), (4, 16, 8), (3, 8, 2))
]

SCHEMAS = {
    "rate-sweep": {**_SWEEP, "compare": (_BOOL, True)},
    "sample-efficiency": {**_SWEEP, "fractions": ("real_list", [0.01, 0.1, 0.5, 1.0]), "n_max": (_INT, 20000)},
    "verify-equivalence": {
        "master_seed": (_INT, 0),
        "cases": (_INT, 100), "tol": (_REAL, 1e-10),
        "zero_adapter_cases": (_INT, 100), "zero_adapter_tol": (_REAL, 1e-12),
        "hora_init_cases": (_INT, 50),
        "grad_points": (_INT, 20), "grad_tol": (_REAL, 1e-5),
        "bounds": {"d_max": (_INT, 32), "H_max": (_INT, 4), "N_max": (_INT, 8)},
    },
    "grad-check": {
        "master_seed": (_INT, 0), "points": (_INT, 20), "tol": (_REAL, 1e-5),
        "kinds": ("str_list", ["shared", "nonshared"]),
    },
    "param-audit": {"master_seed": (_INT, 0), "grid": ("grid", DEFAULT_AUDIT_GRID)},
}

# SweepConfig field -> dotted config path, for diagnostics raised during construction
_SWEEP_PATHS = {
    "kind": "kind", "n_grid": "n_grid", "trials": "trials", "sigma_noise": "sigma_noise",
    "master_seed": "master_seed", "rho": "rho", "timing": "timing",
    **{k: f"dims.{k}" for k in ("H", "L", "L_fit", "d", "r")},
    **{k: f"truth.{k}" for k in ("delta_sep", "key_scale", "theta_max", "c_max", "sigma1", "sigma2")},
    **{k: f"optimizer.{k}" for k in ("restarts", "max_iters", "tol", "step_rule")},
    **{k: f"evaluation.{k}" for k in ("n_eval", "x_max")},
}


@dataclass
class RunConfig:
    command: str
    values: dict                      # full nested config with defaults filled in
    sweep: SweepConfig | None = None

    @property
    def master_seed(self) -> int:
        return self.values["master_seed"]


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise InvalidConfigError(f"duplicate key {k!r}", key=k)
        out[k] = v
    return out


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_type(kind: str, v, path: str):
    ok = {
        _INT: _is_int(v),
        _REAL: (_is_int(v) or isinstance(v, float)),
        _STR: isinstance(v, str),
        _BOOL: isinstance(v, bool),
        "int_list": isinstance(v, list) and all(_is_int(x) for x in v),
        "real_list": isinstance(v, list) and all(_is_int(x) or isinstance(x, float) for x in v),
        "str_list": isinstance(v, list) and all(isinstance(x, str) for x in v),
        "activation": isinstance(v, str) or isinstance(v, dict),
        "grid": isinstance(v, list) and all(isinstance(x, dict) for x in v),
    }[kind]
    if not ok:
        raise InvalidConfigError(f"{path}: expected {kind.replace('_', ' ')}, got {type(v).__name__}", key=path)
    return float(v) if kind == _REAL else v


def _fill(schema: dict, data: dict, prefix: str = "") -> dict:
    if not isinstance(data, dict):
        raise InvalidConfigError(f"{prefix.rstrip('.') or 'config'}: expected an object", key=prefix.rstrip("."))
    unknown = sorted(set(data) - set(schema))
    if unknown:
        path = prefix + unknown[0]
        raise InvalidConfigError(f"unknown key {path!r}", key=path)
    out = {}
    for key, spec in schema.items():
        path = prefix + key
        if isinstance(spec, dict):
            out[key] = _fill(spec, data.get(key, {}), path + ".")
        elif key in data:
            out[key] = _check_type(spec[0], data[key], path)
        else:
            out[key] = copy.deepcopy(spec[1])
    return out


def _sweep_from(values: dict) -> SweepConfig:
    flat = {k: v for k, v in values.items() if not isinstance(v, dict) and k in _SWEEP_PATHS}
    for section in ("dims", "truth", "optimizer", "evaluation"):
        flat.update(values[section])
    try:
        return SweepConfig(**flat)
    except InvalidConfigError as exc:
        path = _SWEEP_PATHS.get(exc.key, exc.key)
        raise InvalidConfigError(f"{path}: {exc}", key=path) from exc


def _validate(command: str, values: dict):
    if not 0 <= values["master_seed"] < 2 ** 64:
        raise InvalidConfigError("master_seed must be an unsigned 64-bit integer", key="master_seed")
    if command == "verify-equivalence":
        for key in ("cases", "zero_adapter_cases", "hora_init_cases", "grad_points"):
            if values[key] < 1:
                raise InvalidConfigError(f"{key} must be >= 1", key=key)
        for key in ("tol", "zero_adapter_tol", "grad_tol"):
            if not values[key] > 0:
                raise InvalidConfigError(f"{key} must be positive", key=key)
        b = values["bounds"]
        if b["H_max"] < 1 or b["N_max"] < 1 or b["d_max"] < 2 * b["H_max"]:
            raise InvalidConfigError("bounds need H_max >= 1, N_max >= 1 and d_max >= 2 * H_max", key="bounds.d_max")
    elif command == "grad-check":
        if values["points"] < 1:
            raise InvalidConfigError("points must be >= 1", key="points")
        if not values["tol"] > 0:
            raise InvalidConfigError("tol must be positive", key="tol")
        bad = [k for k in values["kinds"] if k not in ("shared", "nonshared")]
        if bad or not values["kinds"]:
            raise InvalidConfigError("kinds must be a non-empty subset of shared, nonshared", key="kinds")
    elif command == "param-audit":
        for i, entry in enumerate(values["grid"]):
            path = f"grid[{i}]"
            e = _fill({k: (_INT, None) for k in ("d", "H", "r", "d_e", "d_hid")}, entry, path + ".")
            missing = [k for k, v in e.items() if v is None]
            if missing:
                raise InvalidConfigError(f"{path}.{missing[0]} is required", key=f"{path}.{missing[0]}")
            try:
                AttentionConfig(d=e["d"], H=e["H"], N=1, r=e["r"])
            except InvalidConfigError as exc:
                raise InvalidConfigError(f"{path}.{exc.key}: {exc}", key=f"{path}.{exc.key}") from exc
            for k in ("d_e", "d_hid"):
                if e[k] < 1:
                    raise InvalidConfigError(f"{path}.{k} must be >= 1", key=f"{path}.{k}")
    elif command == "sample-efficiency":
        if values["n_max"] < 1:
            raise InvalidConfigError("n_max must be >= 1", key="n_max")
        if not values["fractions"]:
            raise InvalidConfigError("fractions must not be empty", key="fractions")
        fraction_grid(values["fractions"], values["n_max"])


def load_config(command: str, data: dict | None = None, seed: int | None = None) -> RunConfig:
    """Validate an already-decoded config object for ``command``."""
    if command not in COMMANDS:
        raise InvalidConfigError(f"unknown command {command!r}; expected one of {COMMANDS}", key="command")
    values = _fill(SCHEMAS[command], {} if data is None else data)
    if seed is not None:
        values["master_seed"] = seed
    _validate(command, values)
    sweep = _sweep_from(values) if command in ("rate-sweep", "sample-efficiency") else None
    return RunConfig(command, values, sweep)


def parse_config(path, command: str, seed: int | None = None) -> RunConfig:
    """Read and validate the JSON config at ``path``."""
    p = Path(path)
    if not p.is_file():
        raise InvalidConfigError(f"config file not found: {p}", key="config")
    try:
        data = json.loads(p.read_text(), object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"{p}: not valid JSON ({exc})", key="config") from exc
    return load_config(command, data, seed)
