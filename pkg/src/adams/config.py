"""Versioned JSON configuration with strict validation.

Every command validates its document against a declared schema before any
compute: unknown keys are rejected, types and ranges are checked, and
diagnostics carry the key path plus the line in the source file where the
offending key appears. Flag overrides are merged before validation and the
effective config is persisted next to the outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable

CONFIG_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass(frozen=True)
class Field:
    type: type | tuple
    default: Any = None
    required: bool = False
    check: Callable[[Any], bool] | None = None
    describe: str = ""
    schema: dict | None = None  # for nested objects
    element: "Field | None" = None  # for lists


def _positive(x):
    return x > 0


def _non_negative(x):
    return x >= 0


def _beta(x):
    return 0.0 <= x < 1.0


OPTIMIZER_SCHEMA = {
    "kind": Field(str, "adams", check=lambda s: s in ("adams", "adamw", "lion", "sgdm", "adam_mini"),
                  describe="one of adams|adamw|lion|sgdm|adam_mini"),
    "beta1": Field(float, 0.9, check=_beta, describe="in [0, 1)"),
    "beta2": Field(float, 0.95, check=_beta, describe="in [0, 1)"),
    "weight_decay": Field(float, 0.1, check=_non_negative, describe=">= 0"),
    "epsilon": Field(float, 1e-8, check=_positive, describe="> 0"),
    "peak_lr": Field(float, 3e-3, check=_positive, describe="> 0"),
    "clip_threshold": Field((float, type(None)), 1.0,
                            check=lambda x: x is None or x > 0, describe="> 0 or null"),
}

SCHEDULE_SCHEMA = {
    "warmup_steps": Field(int, 30, check=_non_negative, describe=">= 0"),
    "total_steps": Field(int, 300, check=_positive, describe="> warmup_steps"),
    "final_lr_fraction": Field(float, 0.1, check=lambda x: 0 < x <= 1, describe="in (0, 1]"),
}

MODEL_SCHEMA = {
    "vocab": Field(int, 16, check=_positive),
    "context": Field(int, 8, check=_positive),
    "embed_dim": Field(int, 16, check=_positive),
    "hidden_dim": Field(int, 64, check=_positive),
}

CORPUS_SCHEMA = {
    "seed": Field(int, 3),
    "length": Field(int, 60000, check=lambda x: x >= 16),
    "concentration": Field(float, 0.3, check=_positive),
    "peak": Field((float, type(None)), None, check=lambda x: x is None or 0 < x < 1),
}

OBJECTIVE_SCHEMA = {
    "kind": Field(str, "cosh", check=lambda s: s in ("cosh", "quadratic")),
    "dim": Field(int, 8, check=_positive),
    "a": Field(float, 1.0, check=_positive),
    "b": Field(float, 1.0, check=_positive),
    "curvature": Field(float, 1.0, check=_positive),
}

_COMMON = {
    "version": Field(int, CONFIG_VERSION, check=lambda v: v == CONFIG_VERSION,
                     describe=f"must be {CONFIG_VERSION}"),
    "seed": Field(int, 0),
    "out_dir": Field(str, "out"),
    "threads": Field(int, 1, check=_positive),
}

SCHEMAS: dict[str, dict] = {
    "train": {
        **_COMMON,
        "optimizer": Field(dict, schema=OPTIMIZER_SCHEMA),
        "schedule": Field(dict, schema=SCHEDULE_SCHEMA),
        "model": Field(dict, schema=MODEL_SCHEMA),
        "corpus": Field(dict, schema=CORPUS_SCHEMA),
        "steps": Field(int, 300, check=_non_negative),
        "batch_size": Field(int, 128, check=_positive),
        "model_seed": Field(int, 7),
        "val_batches": Field(int, 4, check=_positive),
        "val_batch_size": Field(int, 256, check=_positive),
    },
    "simulate-ema": {
        **_COMMON,
        "samples": Field(int, 10**6, check=lambda x: x >= 10**4, describe=">= 1e4"),
        "grid": Field(list, None, element=Field(dict)),
        "max_fail_fraction": Field(float, 0.01, check=lambda x: 0 <= x < 1),
    },
    "verify-theory": {
        **_COMMON,
        "objective": Field(dict, schema=OBJECTIVE_SCHEMA),
        "points": Field(int, 1000, check=_positive),
        "noise_r": Field(float, 1.0, check=_positive),
        "noise_draws": Field(int, 10**5, check=lambda x: x >= 10**4),
        "negative_control": Field(bool, False),
        "bound_steps": Field(int, 1000, check=_positive),
    },
    "compare-updates": {
        **_COMMON,
        "driver": Field(dict, schema=OPTIMIZER_SCHEMA),
        "shadow": Field(dict, schema=OPTIMIZER_SCHEMA),
        "schedule": Field(dict, schema=SCHEDULE_SCHEMA),
        "model": Field(dict, schema=MODEL_SCHEMA),
        "corpus": Field(dict, schema=CORPUS_SCHEMA),
        "steps": Field(int, 300, check=_positive),
        "batch_size": Field(int, 256, check=_positive),
        "model_seed": Field(int, 7),
        "skip_steps": Field(int, 50, check=_non_negative),
    },
    "sweep": {
        **_COMMON,
        "optimizer": Field(dict, schema=OPTIMIZER_SCHEMA),
        "schedule": Field(dict, schema=SCHEDULE_SCHEMA),
        "model": Field(dict, schema=MODEL_SCHEMA),
        "corpus": Field(dict, schema=CORPUS_SCHEMA),
        "steps": Field(int, 200, check=_non_negative),
        "batch_size": Field(int, 128, check=_positive),
        "model_seed": Field(int, 7),
        "val_batches": Field(int, 4, check=_positive),
        "val_batch_size": Field(int, 256, check=_positive),
        "beta1_grid": Field(list, [0.9, 0.95], element=Field(float, check=_beta)),
        "beta2_grid": Field(list, [0.9, 0.95, 0.98, 0.99, 0.999],
                            element=Field(float, check=_beta)),
    },
}


def _line_of(key: str, text: str | None) -> str:
    if not text:
        return ""
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return f" (line {lineno})"
    return ""


def _coerce_number(field: Field, value):
    # JSON has one number type; accept ints where floats are declared
    types = field.type if isinstance(field.type, tuple) else (field.type,)
    if float in types and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _validate_node(schema: dict, doc: dict, path: str, text: str | None, problems: list[str]) -> dict:
    out = {}
    for key, value in doc.items():
        if key not in schema:
            problems.append(f"unknown key '{path}{key}'{_line_of(key, text)}")
    for key, fld in schema.items():
        label = f"{path}{key}"
        if key not in doc:
            if fld.required:
                problems.append(f"missing required key '{label}'")
                continue
            if fld.schema is not None:
                out[key] = _validate_node(fld.schema, {}, f"{label}.", text, problems)
            else:
                out[key] = fld.default
            continue
        value = _coerce_number(fld, doc[key])
        types = fld.type if isinstance(fld.type, tuple) else (fld.type,)
        if isinstance(value, bool) and bool not in types:
            problems.append(f"'{label}' must be {fld.type}, got bool{_line_of(key, text)}")
            continue
        if not isinstance(value, types):
            problems.append(
                f"'{label}' must be {getattr(fld.type, '__name__', fld.type)}, "
                f"got {type(value).__name__}{_line_of(key, text)}"
            )
            continue
        if fld.schema is not None:
            out[key] = _validate_node(fld.schema, value, f"{label}.", text, problems)
            continue
        if fld.element is not None and isinstance(value, list):
            coerced = []
            for i, item in enumerate(value):
                item = _coerce_number(fld.element, item)
                etypes = fld.element.type if isinstance(fld.element.type, tuple) else (fld.element.type,)
                if not isinstance(item, etypes) or (
                    fld.element.check is not None and not fld.element.check(item)
                ):
                    problems.append(f"'{label}[{i}]' invalid: {item!r}{_line_of(key, text)}")
                else:
                    coerced.append(item)
            out[key] = coerced
            continue
        if fld.check is not None and value is not None and not fld.check(value):
            hint = f" ({fld.describe})" if fld.describe else ""
            problems.append(f"'{label}' out of range: {value!r}{hint}{_line_of(key, text)}")
            continue
        out[key] = value
    return out


def validate(command: str, doc: dict, text: str | None = None) -> dict:
    """Strictly validate ``doc`` for ``command`` and fill defaults."""
    if command not in SCHEMAS:
        raise ConfigError([f"unknown command {command!r}"])
    problems: list[str] = []
    effective = _validate_node(SCHEMAS[command], doc, "", text, problems)
    if command == "sweep" or command == "train":
        sched = effective.get("schedule", {})
        if sched.get("total_steps", 1) <= sched.get("warmup_steps", 0):
            problems.append("'schedule.total_steps' must exceed 'schedule.warmup_steps'")
    if problems:
        raise ConfigError(problems)
    return effective


def load(command: str, path: str | None, overrides: dict | None = None) -> dict:
    """Read a JSON document (optional), apply flag overrides, validate."""
    doc: dict = {}
    text = None
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"])
        if not isinstance(doc, dict):
            raise ConfigError([f"{path}: top level must be an object"])
    for key, value in (overrides or {}).items():
        if value is not None:
            doc[key] = value
    return validate(command, doc, text)


def dumps(config: dict) -> str:
    return json.dumps(config, indent=2, sort_keys=True) + "\n"
