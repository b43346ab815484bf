"""Versioned TOML run configuration with typed defaults and dotted overrides."""

from __future__ import annotations

import copy
import re
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCHEMA_VERSION = 1

_DENSITY_KEYS = {
    "family": ("gaussian", str),
    "target_mean": ([1.0], list),
    "target_sigma": ([1.0], list),
    "noise_mean": ([0.0], list),
    "noise_sigma": ([1.0], list),
    "target_pmf": ([0.5, 0.3, 0.2], list),
    "noise_pmf": ([0.2, 0.3, 0.5], list),
}

# section -> key -> (default, type); a default of None means "unset"
SCHEMA: dict[str, dict[str, tuple]] = {
    "gradcheck": {
        "batches": (100, int),
        "coefficient_batches": (1000, int),
        "tau": (0.1, float),
        "max_n": (16, int),
        "max_d": (8, int),
        "step": (1e-5, float),
        "tolerance": (1e-6, float),
        "fault": ("", str),
    },
    "density": _DENSITY_KEYS,
    "oracle": {
        "n": (6, int),
        "t": (3, int),
        "instances": (20, int),
        "tolerance": (1e-12, float),
    },
    "bound": {
        "n": ([6, 10], list),
        "t": (2, int),
        "samples": (100_000, int),
        "supcon": (True, bool),
    },
    "data": {
        "k_classes": (2, int),
        "per_class": (200, int),
        "feature_dim": (16, int),
        "class_separation": (1.2, float),
        "within_class_noise": (0.1, float),
        "test_fraction": (0.1, float),
    },
    "train": {
        "loss": ("sincere", str),
        "tau": (0.1, float),
        "epsilon": (0.0, float),
        "epochs": (200, int),
        "batch_size": (64, int),
        "learning_rate": (0.5, float),
        "momentum": (0.9, float),
        "weight_decay": (1e-4, float),
        "lr_schedule": ("cosine", str),
        "warmup_epochs": (10, int),
        "floor_fraction": (0.001, float),
        "encoder": ("table", str),
        "hidden": (64, int),
        "embed_dim": (None, int),
        "aug_sigma": (None, float),
    },
    "eval": {
        "run": ("", str),
        "ks": ([1, 5], list),
        "bins": (40, int),
    },
    "report": {
        "runs": ([], list),
    },
}
TOP_LEVEL = {"schema_version": (SCHEMA_VERSION, int), "seed": (0, int)}


class ConfigError(ValueError):
    pass


def defaults() -> dict:
    cfg = {k: v[0] for k, v in TOP_LEVEL.items()}
    for section, keys in SCHEMA.items():
        cfg[section] = {k: copy.copy(v[0]) for k, v in keys.items()}
    return cfg


def _line_of(text: str, section: str | None, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[\s*([^\]]+?)\s*\]", s)
        if m:
            current = m.group(1)
            continue
        if current == section and re.match(rf"{re.escape(key)}\s*=", s):
            return i
    return None


def _where(text, section, key):
    line = _line_of(text, section, key) if text else None
    return f" (line {line})" if line else ""


def _coerce(value, typ, name: str, where: str = ""):
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, bool) or not isinstance(value, typ):
        raise ConfigError(f"{name}{where}: expected {typ.__name__}, got {type(value).__name__} {value!r}")
    return value


def validate(raw: dict, text: str = "") -> dict:
    """Merge ``raw`` over the defaults; unknown keys and wrong types raise ConfigError."""
    cfg = defaults()
    for key, value in raw.items():
        if key in TOP_LEVEL:
            cfg[key] = _coerce(value, TOP_LEVEL[key][1], key, _where(text, None, key))
        elif key in SCHEMA:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}{_where(text, None, key)}: expected a table")
            for sub, v in value.items():
                name = f"{key}.{sub}"
                if sub not in SCHEMA[key]:
                    known = ", ".join(sorted(SCHEMA[key]))
                    raise ConfigError(f"unknown key {name!r}{_where(text, key, sub)}; known keys: {known}")
                cfg[key][sub] = _coerce(v, SCHEMA[key][sub][1], name, _where(text, key, sub))
        else:
            raise ConfigError(f"unknown key {key!r}{_where(text, None, key)}")
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"schema_version {cfg['schema_version']} not supported (expected {SCHEMA_VERSION})")
    return cfg


def load(path: str | Path | None) -> dict:
    """Read and validate a config file; ``None`` gives the defaults."""
    if path is None:
        return defaults()
    text = Path(path).read_text()  # OSError propagates to the caller
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    try:
        return validate(raw, text)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from None


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(cfg: dict, assignments) -> dict:
    """Apply ``section.key=value`` strings; values are read as TOML literals, else as strings."""
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in cfg.items()}
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) == 1:
            raw[parts[0]] = _parse_value(value.strip())
        elif len(parts) == 2:
            if parts[0] not in raw or not isinstance(raw[parts[0]], dict):
                raise ConfigError(f"unknown section {parts[0]!r} in override {item!r}")
            raw[parts[0]][parts[1]] = _parse_value(value.strip())
        else:
            raise ConfigError(f"override key {key!r} nests too deeply")
    # unset optionals stay None; everything else is re-validated
    cleaned = {k: ({s: x for s, x in v.items() if x is not None} if isinstance(v, dict) else v)
               for k, v in raw.items()}
    return validate(cleaned)


def to_toml(cfg: dict) -> str:
    """Serialize a resolved config; unset optionals are omitted."""
    def lit(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
        if isinstance(v, list):
            return "[" + ", ".join(lit(x) for x in v) + "]"
        return repr(v)

    lines = [f"{k} = {lit(cfg[k])}" for k in TOP_LEVEL]
    for section in SCHEMA:
        lines += ["", f"[{section}]"]
        lines += [f"{k} = {lit(v)}" for k, v in cfg[section].items() if v is not None]
    return "\n".join(lines) + "\n"
