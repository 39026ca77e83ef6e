# svl/utils.py
"""
Shared helpers for the SVL app.
Centralizes strict config parsing and small list utilities used by the
engine modules and the management commands.
"""

import dataclasses
from pathlib import Path
from typing import Any, Iterator, List, Sequence, Type, TypeVar, Union

from .exceptions import ConfigError

T = TypeVar("T")


def _field_default(f: dataclasses.Field) -> Any:
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return dataclasses.MISSING


def _check_type(section: str, name: str, value: Any, default: Any):
    """
    Reject JSON values whose type cannot stand in for the field default.

    Ints are accepted where floats are expected; bools never count as numbers.
    """
    if default is dataclasses.MISSING or default is None:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, (tuple, list)):
        ok = isinstance(value, (tuple, list))
    else:
        return
    if not ok:
        raise ConfigError(
            f"{section}.{name}: expected {type(default).__name__}, got {type(value).__name__}"
        )


def dataclass_from_dict(cls: Type[T], data: Any, section: str) -> T:
    """
    Build a config dataclass from a parsed JSON object, strictly.

    Unknown keys and values of the wrong type raise ConfigError; so does
    anything the dataclass itself rejects in ``__post_init__``.
    """
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be a JSON object")

    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{section}: unknown keys {', '.join(unknown)}")
    for name, value in data.items():
        _check_type(section, name, value, _field_default(fields[name]))

    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def resolve_path(value: Union[str, Path], base: Path) -> Path:
    """Absolute paths pass through; relative ones are taken from ``base``."""
    path = Path(value)
    return path if path.is_absolute() else base / path


def chunked(items: Sequence[Any], size: int) -> Iterator[List[Any]]:
    """Consecutive slices of at most ``size`` items."""
    size = max(1, int(size))
    for start in range(0, len(items), size):
        yield list(items[start : start + size])


def as_plain(value: Any) -> Any:
    """Dataclasses, tuples and paths converted to JSON-ready structures."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {k: as_plain(v) for k, v in dataclasses.asdict(value).items()}
    if isinstance(value, dict):
        return {str(k): as_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [as_plain(v) for v in value]
    if isinstance(value, Path):
        return value.as_posix()
    return value

