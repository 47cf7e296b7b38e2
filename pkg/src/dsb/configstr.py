"""Tiny parser for `name:key=value,key=value` config strings."""

from __future__ import annotations

from typing import Dict, Tuple


def split_spec(text: str) -> Tuple[str, Dict[str, str]]:
    """Split e.g. `dsb:init=32,max=unbounded` into ("dsb", {...})."""
    text = text.strip()
    if not text:
        raise ValueError("empty config string")
    name, _, rest = text.partition(":")
    params: Dict[str, str] = {}
    if rest:
        for item in rest.split(","):
            key, sep, value = item.partition("=")
            if not sep or not key.strip() or not value.strip():
                raise ValueError(f"malformed parameter {item!r} in {text!r}")
            if key.strip() in params:
                raise ValueError(f"duplicate parameter {key.strip()!r} in {text!r}")
            params[key.strip()] = value.strip()
    return name.strip(), params


def take_int(params: Dict[str, str], key: str, spec: str) -> int:
    try:
        return int(params.pop(key))
    except KeyError:
        raise ValueError(f"missing required parameter {key!r} in {spec!r}") from None
    except ValueError:
        raise ValueError(f"parameter {key!r} in {spec!r} is not an integer") from None


def reject_unknown(params: Dict[str, str], spec: str) -> None:
    if params:
        raise ValueError(f"unknown parameter(s) {sorted(params)} in {spec!r}")
