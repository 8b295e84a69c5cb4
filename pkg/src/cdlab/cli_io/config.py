"""Sectioned ``key = value`` configuration files.

::

    # comment
    [domain]
    kind = rect
    n1 = 32

Every section and key is validated against :data:`SCHEMA`; problems are
reported with the line and column of the offending text.  Parsing then
serializing then parsing again gives an identical :class:`ProblemConfig`.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from ..errors import ConfigError
from ..verify import CASES
from .expr import Expression


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(text: str) -> int:
    return int(text)


def _choice(*options: str) -> Callable[[str], str]:
    def conv(text: str) -> str:
        key = text.strip().lower()
        if key not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return key
    return conv


def _list(item: Callable[[str], Any]) -> Callable[[str], tuple]:
    def conv(text: str) -> tuple:
        parts = [p.strip() for p in text.split(",")]
        if not text.strip():
            return ()
        if any(not p for p in parts):
            raise ValueError("empty list item")
        return tuple(item(p) for p in parts)
    return conv


def _str(text: str) -> str:
    return text.strip()


EXPR = "expr"
FAMILIES = ("two_level", "split_weights", "explicit_implicit", "three_level", "reaction_split",
            "symmetric_reaction_split", "exp_transform", "lod", "additive_avg")

# section -> key -> (converter or EXPR, default); a default of ... marks a required key
SCHEMA: dict[str, dict[str, tuple[Any, Any]]] = {
    "domain": {
        "kind": (_choice("rect", "interval", "mesh", "random_mesh"), "rect"),
        "l1": (_float, 1.0), "l2": (_float, 1.0),
        "n1": (_int, 16), "n2": (_int, 16),
        "mesh": (_str, None), "n_side": (_int, 8), "jitter": (_float, 0.3),
    },
    "coefficients": {
        "k": (EXPR, "1"), "kappa1": (_float, None), "kappa2": (_float, None),
        "v1": (EXPR, "0"), "v2": (EXPR, "0"),
        "velocity": (_choice("rotating", "compressible"), None), "omega": (_float, 1.0),
        "f": (EXPR, "0"), "u0": (EXPR, "0"), "r": (EXPR, None),
    },
    "scheme": {
        "space": (_choice("central", "upwind", "exponential"), "central"),
        "form": (_choice("nondivergent", "divergent", "skew"), "skew"),
        "placement": (_choice("node", "staggered"), "node"),
        "family": (_choice(*FAMILIES), "two_level"),
        "sigma": (_float, 1.0), "sigma1": (_float, None), "sigma2": (_float, None), "m": (_float, None),
        "tau": (_float, 0.01), "T": (_float, 0.1),
        "solver": (_choice("krylov", "direct"), "krylov"),
        "gate": (_choice("none", "samarskii", "banach", "monotone"), "none"),
    },
    "output": {
        "snapshots": (_choice("final", "all", "none"), "final"),
        "monitors": (_list(_choice("energy", "min", "dinv_phi")), ()),
    },
    "converge": {
        "case": (_choice(*CASES), ...),
        "kind": (_choice("space", "time"), "space"),
        "levels": (_list(_int), ()),
        "taus": (_list(_float), ()),
        "N": (_int, 16),
        "norm": (_choice("l2", "linf", "l1"), "l2"),
        # case parameters, passed by name to the case factory
        "k": (_float, None), "v": (_float, None), "eps": (_float, None),
        "omega": (_float, None), "scale": (_float, None),
    },
}

SECTION_ORDER = tuple(SCHEMA)


@dataclass(frozen=True)
class ProblemConfig:
    """Validated configuration: ``values[section][key]`` holds typed values.

    Only keys present in the file are stored; defaults come from
    :meth:`get`.  ``positions`` maps ``(section, key)`` to the
    ``(line, column)`` of the value and does not take part in equality.
    """

    values: dict[str, dict[str, Any]]
    positions: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict, compare=False, repr=False)

    def has(self, section: str, key: str | None = None) -> bool:
        if key is None:
            return section in self.values
        return key in self.values.get(section, {})

    def get(self, section: str, key: str) -> Any:
        conv, default = SCHEMA[section][key]
        if key in self.values.get(section, {}):
            return self.values[section][key]
        if default is ...:
            raise self.error(section, key, f"missing required key {key!r} in [{section}]")
        if conv == EXPR and default is not None:
            return Expression.parse(default)
        return default

    def error(self, section: str, key: str, message: str) -> ConfigError:
        line, col = self.positions.get((section, key), (0, 0))
        return ConfigError(message, line, col)


def _convert(section: str, key: str, raw: str, line: int, col: int) -> Any:
    conv, _ = SCHEMA[section][key]
    if conv == EXPR:
        return Expression.parse(raw.strip(), line, col)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"invalid value {raw.strip()!r} for {key}: {exc}", line, col) from exc


def parse_config(text: str) -> ProblemConfig:
    values: dict[str, dict[str, Any]] = {}
    positions: dict[tuple[str, str], tuple[int, int]] = {}
    section: str | None = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        indent = len(line) - len(line.lstrip())
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("section header must end with ']'", lineno, len(line) + 1)
            name = stripped[1:-1].strip()
            if name not in SCHEMA:
                raise ConfigError(f"unknown section [{name}]", lineno, indent + 1)
            if name in values:
                raise ConfigError(f"duplicate section [{name}]", lineno, indent + 1)
            section = name
            values[name] = {}
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno, indent + 1)
        if section is None:
            raise ConfigError("key outside of any section", lineno, indent + 1)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno, indent + 1)
        if key in values[section]:
            raise ConfigError(f"duplicate key {key!r}", lineno, indent + 1)
        vcol = len(key_part) + 2
        lead = len(value_part) - len(value_part.lstrip())
        if not value_part.strip():
            raise ConfigError(f"missing value for {key!r}", lineno, vcol)
        values[section][key] = _convert(section, key, value_part, lineno, vcol + lead)
        positions[(section, key)] = (lineno, vcol + lead)
    cfg = ProblemConfig(values, positions)
    _validate(cfg)
    return cfg


def _validate(cfg: ProblemConfig) -> None:
    for key in ("n1", "n2", "n_side"):
        if cfg.has("domain", key) and cfg.get("domain", key) < 2:
            raise cfg.error("domain", key, f"{key} must be at least 2")
    if cfg.get("domain", "kind") == "mesh" and not cfg.has("domain", "mesh"):
        raise cfg.error("domain", "kind", "kind = mesh needs a 'mesh' file path")
    for key in ("sigma", "sigma1", "sigma2"):
        s = cfg.get("scheme", key)
        if s is not None and not 0.0 <= s <= 1.0:
            raise cfg.error("scheme", key, f"{key} must lie in [0, 1]")
    for key in ("tau", "T"):
        if not cfg.get("scheme", key) > 0:
            raise cfg.error("scheme", key, f"{key} must be positive")
    if cfg.has("coefficients", "velocity"):
        for key in ("v1", "v2"):
            if cfg.has("coefficients", key):
                raise cfg.error("coefficients", key, f"{key} conflicts with the built-in velocity")
        if cfg.get("domain", "kind") == "interval":
            raise cfg.error("coefficients", "velocity", "built-in velocities are two-dimensional")
    if cfg.has("converge"):
        factory = CASES[cfg.get("converge", "case")]
        allowed = set(inspect.signature(factory).parameters)
        for key in ("k", "v", "eps", "omega", "scale"):
            if cfg.has("converge", key) and key not in allowed:
                raise cfg.error("converge", key, f"case {cfg.get('converge', 'case')!r} has no parameter {key!r}")


def _format(value: Any) -> str:
    if isinstance(value, Expression):
        return value.text
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def serialize_config(cfg: ProblemConfig) -> str:
    """Canonical text: schema order, only the keys that were given."""
    out = []
    for section in SECTION_ORDER:
        if section not in cfg.values:
            continue
        out.append(f"[{section}]")
        for key in SCHEMA[section]:
            if key in cfg.values[section]:
                out.append(f"{key} = {_format(cfg.values[section][key])}")
        out.append("")
    return "\n".join(out)


def load_config(path: str | Path) -> ProblemConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(p)!r}: {exc.strerror or exc}") from exc
    return parse_config(text)


def case_parameters(cfg: ProblemConfig) -> dict[str, float]:
    return {k: cfg.get("converge", k) for k in ("k", "v", "eps", "omega", "scale") if cfg.has("converge", k)}
