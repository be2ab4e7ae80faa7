"""Typed experiment parameters and the layered configuration.

Precedence is flags over the config file over defaults.  The config file is
UTF-8 ``key = value`` lines under ``[section]`` headers: ``[run]`` holds the
master seed and one section per experiment holds its parameters.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path


class ParameterError(ValueError):
    """A parameter is unknown, malformed or outside its validated range."""


def _empty(text) -> bool:
    return str(text).strip().lower() in ("", "none")


def _floats(text):
    if _empty(text):
        return ()
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _ints(text):
    """``"1,2,5"`` or an inclusive range ``"1:4"``."""
    text = str(text).strip()
    if _empty(text):
        return ()
    if ":" in text:
        a, b = text.split(":", 1)
        return tuple(range(int(a), int(b) + 1))
    return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    t = str(text).strip().lower()
    return None if t in ("", "none", "phys", "physical") else float(t)


_PARSERS = {"float": float, "int": int, "str": str, "floats": _floats, "ints": _ints, "bool": _bool,
            "optfloat": _opt_float}


def _canon(kind, value) -> str:
    """Canonical text of a parsed value; parsing it again gives the same value."""
    if value is None:
        return "none"
    if kind in ("floats", "ints") and not value:
        return "none"
    if kind == "floats":
        return ",".join(repr(float(v)) for v in value)
    if kind == "ints":
        return ",".join(str(int(v)) for v in value)
    if kind == "bool":
        return "on" if value else "off"
    if kind in ("float", "optfloat"):
        return repr(float(value))
    return str(value)


@dataclass(frozen=True)
class Param:
    name: str
    kind: str
    default: object
    help: str = ""
    choices: tuple = ()
    lo: float | None = None
    hi: float | None = None
    optional: bool = False  # lists may be empty, scalars may be None

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")

    def parse(self, raw):
        if raw is None or (isinstance(raw, str) and raw.strip() == "" and self.kind != "str"):
            value = self.default
        elif isinstance(raw, str) or self.kind in ("floats", "ints"):
            try:
                value = _PARSERS[self.kind](raw)
            except (TypeError, ValueError) as exc:
                raise ParameterError(f"{self.name}: cannot parse {raw!r} as {self.kind}") from exc
        else:
            value = raw
        self.check(value)
        return value

    def check(self, value):
        if value is None:
            return
        if self.choices and value not in self.choices:
            raise ParameterError(f"{self.name}={value!r} is not one of {list(self.choices)}")
        vals = value if isinstance(value, tuple) else (value,)
        for v in vals:
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                if isinstance(v, float) and not math.isfinite(v):
                    raise ParameterError(f"{self.name} must be finite")
                if self.lo is not None and v < self.lo:
                    raise ParameterError(f"{self.name}={v} is below the validated range (>= {self.lo})")
                if self.hi is not None and v > self.hi:
                    raise ParameterError(f"{self.name}={v} is above the validated range (<= {self.hi})")
        if isinstance(value, tuple) and not value and not self.optional:
            raise ParameterError(f"{self.name} must not be empty")

    def text(self, value) -> str:
        return _canon(self.kind, value)


def read_config(path) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.optionxform = lambda s: s.strip().replace("-", "_")
    with open(path, encoding="utf-8") as fh:
        cfg.read_file(fh)
    return cfg


def resolve(experiment: str, params, flags: dict, config: configparser.ConfigParser | None):
    """Merge defaults, the config section and flags into typed values."""
    known = {p.name: p for p in params}
    from_file = {}
    if config is not None and config.has_section(experiment):
        for key, val in config.items(experiment):
            if key not in known:
                raise ParameterError(f"unknown parameter {key!r} for {experiment}")
            from_file[key] = val
    out = {}
    for p in params:
        raw = flags.get(p.name)
        if raw is None:
            raw = from_file.get(p.name)
        out[p.name] = p.parse(raw)
    return out


def effective_config(experiment: str, params, values: dict, seed: int) -> str:
    """Serialized config that reproduces a run when read back."""
    lines = ["[run]", f"seed = {seed}", "", f"[{experiment}]"]
    lines += [f"{p.name} = {p.text(values[p.name])}" for p in params]
    return "\n".join(lines) + "\n"


def write_config(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path
