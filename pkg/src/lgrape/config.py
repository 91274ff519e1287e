"""Flat ``section.key = value`` configuration files.

Example::

    # comment lines start with '#'
    broadband.counts = 8, 12, 16
    broadband.max_iterations = 150

Values are converted to the type of the default they override; lists are
comma separated.
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    """Malformed configuration or out-of-range setting."""


def parse(text, source="<config>"):
    """Parse config text into ``{section: {key: raw string}}``."""
    out: dict[str, dict[str, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        name, value = (s.strip() for s in line.split("=", 1))
        if name.count(".") != 1 or not all(name.split(".")):
            raise ConfigError(f"{source}:{lineno}: key {name!r} needs exactly one section prefix")
        section, key = name.split(".")
        sec = out.setdefault(section, {})
        if key in sec:
            raise ConfigError(f"{source}:{lineno}: duplicate key {name!r}")
        sec[key] = value
    return out


def load(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse(text, str(p))


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _scalar(raw, kind, name):
    try:
        if kind is bool:
            v = raw.lower()
            if v in _TRUE:
                return True
            if v in _FALSE:
                return False
            raise ValueError(raw)
        if kind is int:
            f = float(raw)
            if f != int(f):
                raise ValueError(raw)
            return int(f)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot read {raw!r} as {kind.__name__}") from None


def coerce(raw, default, name="value"):
    """Convert a raw string to the type of ``default``."""
    if isinstance(default, (list, tuple)):
        kind = type(default[0]) if default else float
        items = [s.strip() for s in raw.split(",") if s.strip()]
        return [_scalar(s, kind, name) for s in items]
    return _scalar(raw.strip(), type(default), name)


def merge(defaults, overrides, section):
    """Defaults updated from raw or typed overrides; unknown keys are rejected."""
    params = dict(defaults)
    for key, value in (overrides or {}).items():
        if key not in defaults:
            known = ", ".join(sorted(defaults))
            raise ConfigError(f"unknown key {section}.{key}; known keys: {known}")
        params[key] = coerce(value, defaults[key], f"{section}.{key}") if isinstance(value, str) \
            else value
    return params
