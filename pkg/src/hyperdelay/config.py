"""Flat ``key = value`` run configuration.

Each non-blank line holds one dotted key and a value.  Values are parsed as
JSON when possible (numbers, booleans, lists, quoted strings) and otherwise
kept as bare strings.  ``#`` starts a comment outside quoted strings.

Example::

    plant.lambda = 1
    plant.mu = 1
    plant.q = 1
    plant.rho = 0.85
    plant.sigma_pm = 1
    plant.sigma_mp = 1
    law.type = partial_cancellation
    law.K = 0.1
    numerics.n = 200
    numerics.delta = 0.1
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import ConfigError
from .laws import ControlLaw, law_from_dict
from .model import PlantConfig

SCHEMA = {
    "plant.lambda": None, "plant.mu": None, "plant.q": None, "plant.rho": None,
    "plant.sigma_pm": 0.0, "plant.sigma_mp": 0.0,
    "law.type": "open_loop", "law.K": None, "law.a": None, "law.b": None, "law.rho": None,
    "numerics.n": 200, "numerics.horizon": 10.0, "numerics.delta": 0.0,
    "numerics.tolerance": 1e-10, "numerics.max_iterations": 200,
    "numerics.u0": 1.0, "numerics.v0": 1.0, "numerics.kernel_file": None,
    "scan.region": None, "scan.cap": 100.0, "scan.refine": True, "scan.max_refine": 64,
    "scan.spacing": None, "scan.certificate": True,
    "output.dir": "out", "output.stride": 1,
    "sweep.key": None, "sweep.values": [],
}
REQUIRED = ("plant.lambda", "plant.mu", "plant.q", "plant.rho")
SWEEP_KEYS = {"delta": "numerics.delta", "K": "law.K", "rho": "plant.rho"}


def _strip_comment(line: str) -> str:
    quoted = False
    for i, ch in enumerate(line):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_flat(text: str) -> dict:
    """Parse flat config text into a dict of dotted keys.

    Raises
    ------
    ConfigError
        On a line without ``=``, an empty key or value, or a repeated key.
    """
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line).strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", line=lineno)
        key, raw = (part.strip() for part in body.split("=", 1))
        if not key or any(c.isspace() for c in key):
            raise ConfigError(f"invalid key {key!r}", key=key, line=lineno)
        if not raw:
            raise ConfigError(f"missing value for {key}", key=key, line=lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key}", key=key, line=lineno)
        out[key] = _parse_value(raw)
    return out


def format_flat(values: dict) -> str:
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in values.items())


@dataclass
class RunConfig:
    """A fully resolved run configuration."""

    values: dict
    text: str = ""
    base_dir: str = "."
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def _number(self, key, kind=float):
        v = self.values[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{key} must be a number, got {v!r}", key=key,
                              line=self.lines.get(key))
        if kind is int:
            if float(v) != int(v):
                raise ConfigError(f"{key} must be an integer, got {v!r}", key=key,
                                  line=self.lines.get(key))
            return int(v)
        return float(v)

    @property
    def plant(self) -> PlantConfig:
        try:
            return PlantConfig(self._number("plant.lambda"), self._number("plant.mu"),
                               self._number("plant.q"), self._number("plant.rho"),
                               self.values["plant.sigma_pm"], self.values["plant.sigma_mp"])
        except (ValueError, TypeError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"invalid plant: {err}") from err

    @property
    def law(self) -> ControlLaw:
        d = {"type": self.values["law.type"]}
        for k in ("K", "a", "b", "rho"):
            if self.values.get(f"law.{k}") is not None:
                d[k] = self.values[f"law.{k}"]
        try:
            return law_from_dict(d)
        except KeyError as err:
            key = f"law.{err.args[0]}"
            raise ConfigError(f"missing required key {key} for law {d['type']}", key=key) from err
        except (ValueError, TypeError) as err:
            raise ConfigError(f"invalid law: {err}", key="law.type",
                              line=self.lines.get("law.type")) from err

    @property
    def n(self) -> int:
        n = self._number("numerics.n", int)
        if n < 2:
            raise ConfigError("numerics.n must be at least 2", key="numerics.n")
        return n

    @property
    def delta(self) -> float:
        d = self._number("numerics.delta")
        if d < 0:
            raise ConfigError("numerics.delta must be nonnegative", key="numerics.delta")
        return d

    @property
    def horizon(self) -> float:
        return self._number("numerics.horizon")

    @property
    def kernel_file(self) -> Optional[str]:
        path = self.values.get("numerics.kernel_file")
        if path is None:
            return None
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    @property
    def region(self):
        cap = self._number("scan.cap")
        reg = self.values.get("scan.region")
        if reg is None:
            return (0.01, 1.0, -cap, cap)
        if not (isinstance(reg, list) and len(reg) == 4):
            raise ConfigError("scan.region must be [x0, x1, y0, y1]", key="scan.region")
        return tuple(float(v) for v in reg)

    def with_value(self, key: str, value: Any) -> "RunConfig":
        values = dict(self.values)
        values[key] = value
        return RunConfig(values, self.text, self.base_dir, self.lines)

    def echo(self) -> str:
        """Canonical text of every resolved key, defaults included."""
        return format_flat(self.values)


def load_config_text(text: str, base_dir: str = ".") -> RunConfig:
    raw = parse_flat(text)
    lines = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line).strip()
        if "=" in body:
            lines[body.split("=", 1)[0].strip()] = lineno
    for key in raw:
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key}", key=key, line=lines.get(key))
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key}", key=key)
    values = dict(SCHEMA)
    values.update(raw)
    cfg = RunConfig(values, text, base_dir, lines)
    if values["sweep.key"] is not None and values["sweep.key"] not in SWEEP_KEYS:
        raise ConfigError(f"sweep.key must be one of {sorted(SWEEP_KEYS)}", key="sweep.key",
                          line=lines.get("sweep.key"))
    if not isinstance(values["sweep.values"], list):
        raise ConfigError("sweep.values must be a list", key="sweep.values",
                          line=lines.get("sweep.values"))
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return load_config_text(text, os.path.dirname(os.path.abspath(path)))
