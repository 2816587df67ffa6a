"""Run configuration: a flat ``key = value`` file merged with command-line flags.

Precedence is flags over file over defaults.  Keys are the fields of
:class:`~gcgp.condense.CondenseConfig` plus a few run-level keys
(``dataset``, ``out``, ``verbosity`` and the sweep/ablation lists).
Unknown keys are rejected so a typo never silently falls back to a default.

Example file::

    # cora, 140 nodes
    dataset = data/cora
    beta = 0.5
    k = 4
    epochs = 1000
"""

from __future__ import annotations

import typing
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .condense import CondenseConfig
from .errors import ValidationError

_NONE = {"none", "null", ""}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _int_list(s: str) -> list:
    return [int(v) for v in s.split(",") if v.strip()]


def _float_list(s: str) -> list:
    return [float(v) for v in s.split(",") if v.strip()]


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class RunConfig:
    dataset: Optional[str] = None
    out: Optional[str] = None
    verbosity: int = 0
    seeds: list = field(default_factory=lambda: [0])
    betas: list = field(default_factory=lambda: [0.5])
    ks: list = field(default_factory=lambda: [2])
    jobs: int = 1
    condense: CondenseConfig = field(default_factory=CondenseConfig)

    def to_dict(self) -> dict:
        """Flat dict with every key filled; what artifacts embed."""
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "condense"}
        d.update(self.condense.to_dict())
        return d

    def dumps(self) -> str:
        return dump_config(self.to_dict())


_RUN_TYPES = {"dataset": str, "out": str, "verbosity": int, "seeds": _int_list,
              "betas": _float_list, "ks": _int_list, "jobs": int}


def _condense_types() -> dict:
    hints = typing.get_type_hints(CondenseConfig)
    out = {}
    for f in fields(CondenseConfig):
        h = hints[f.name]
        args = [a for a in typing.get_args(h) if a is not type(None)]
        base = args[0] if args else h
        out[f.name] = (_bool if base is bool else base, len(args) > 0)
    return out


_CONDENSE_TYPES = _condense_types()
KNOWN_KEYS = frozenset(_RUN_TYPES) | frozenset(_CONDENSE_TYPES)


def coerce(key: str, raw: Any) -> Any:
    """Convert a raw string (or an already typed value) for ``key``."""
    if key not in KNOWN_KEYS:
        raise ValidationError(f"unknown config key {key!r}")
    if not isinstance(raw, str):
        return raw
    if key in _RUN_TYPES:
        conv, optional = _RUN_TYPES[key], key in ("dataset", "out")
    else:
        conv, optional = _CONDENSE_TYPES[key]
    if optional and raw.strip().lower() in _NONE:
        return None
    try:
        return conv(raw.strip())
    except ValueError as exc:
        raise ValidationError(f"bad value for {key}: {exc}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key in values:
            raise ValidationError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = coerce(key, raw)
        except ValidationError as exc:
            raise ValidationError(f"{source}:{lineno}: {exc}") from None
    return values


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))


def _format(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(values: dict) -> str:
    return "".join(f"{k} = {_format(v)}\n" for k, v in values.items())


def build_run_config(file_values: Optional[dict] = None, flag_values: Optional[dict] = None) -> RunConfig:
    """Merge defaults, then file values, then flags; validate the result."""
    merged: dict = {}
    for layer in (file_values or {}, flag_values or {}):
        for k, v in layer.items():
            merged[k] = coerce(k, v)
    run_kw = {k: merged[k] for k in _RUN_TYPES if k in merged}
    cond_kw = {k: merged[k] for k in _CONDENSE_TYPES if k in merged}
    # An explicit m switches size selection away from the per-class default.
    if "m" in cond_kw and cond_kw["m"] is not None and "per_class" not in cond_kw:
        cond_kw["per_class"] = None
    try:
        cfg = CondenseConfig(**cond_kw)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None
    rc = RunConfig(**run_kw, condense=cfg)
    if rc.jobs < 1:
        raise ValidationError("jobs must be at least 1")
    if not rc.seeds:
        raise ValidationError("seeds must not be empty")
    return rc


def run_config_from_dict(d: dict) -> RunConfig:
    """Inverse of :meth:`RunConfig.to_dict`."""
    return build_run_config(flag_values=d)


__all__ = ["RunConfig", "KNOWN_KEYS", "coerce", "parse_config_text", "load_config_file",
           "dump_config", "build_run_config", "run_config_from_dict"]
