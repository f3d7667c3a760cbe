import dataclasses
import enum
import re
import types
import typing
from typing import Any, Optional, Union

from rtmlib.errors import ConfigError
from rtmlib.impl import arrays, enums, optionals, primitives
from rtmlib.impl.type_adapter import JsonPath, TypeAdapter


def get_record_adapter(record_class: type) -> "RecordAdapter":
    if not dataclasses.is_dataclass(record_class):
        raise TypeError(f"not a dataclass: {record_class!r}")
    adapter = _record_class_to_adapter.get(record_class)
    if adapter is None:
        adapter = _record_class_to_adapter[record_class] = RecordAdapter(record_class)
    return adapter


def resolve_type(annotation: Any) -> TypeAdapter:
    if annotation is bool:
        return primitives.BOOL_ADAPTER
    elif annotation is int:
        return primitives.INT_ADAPTER
    elif annotation is float:
        return primitives.FLOAT_ADAPTER
    elif annotation is str:
        return primitives.STRING_ADAPTER
    elif isinstance(annotation, type) and issubclass(annotation, enum.Enum):
        return enums.get_enum_adapter(annotation)
    elif isinstance(annotation, type) and dataclasses.is_dataclass(annotation):
        return get_record_adapter(annotation)
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin in (Union, types.UnionType) and type(None) in args:
        others = [a for a in args if a is not type(None)]
        if len(others) == 1:
            return optionals.get_optional_adapter(resolve_type(others[0]))
    elif origin is tuple and len(args) == 2 and args[1] is Ellipsis:
        return arrays.get_array_adapter(resolve_type(args[0]))
    raise TypeError(f"no JSON adapter for {annotation!r}")


@dataclasses.dataclass(frozen=True)
class _Field:
    name: str
    adapter: TypeAdapter
    # dataclasses.MISSING if the field is required
    default: Any


class RecordAdapter(TypeAdapter):
    __slots__ = ("record_class", "_fields")

    record_class: type
    _fields: Optional[tuple[_Field, ...]]

    def __init__(self, record_class: type):
        self.record_class = record_class
        # Resolved on first use, so that records can refer to each other.
        self._fields = None

    @property
    def fields(self) -> tuple[_Field, ...]:
        if self._fields is None:
            hints = typing.get_type_hints(self.record_class)
            self._fields = tuple(
                _Field(
                    name=f.name,
                    adapter=resolve_type(hints[f.name]),
                    default=_default_of(f),
                )
                for f in dataclasses.fields(self.record_class)
                if f.init
            )
        return self._fields

    def to_json(self, value: Any, readable: bool) -> Any:
        fields = self.fields
        if readable:
            return {
                f.name: f.adapter.to_json(getattr(value, f.name), True) for f in fields
            }
        # Trailing fields holding their default value are dropped.
        array_len = len(fields)
        while array_len:
            last = fields[array_len - 1]
            if not _is_default(getattr(value, last.name), last):
                break
            array_len -= 1
        return [
            f.adapter.to_json(getattr(value, f.name), False) for f in fields[:array_len]
        ]

    def from_json(self, json: Any, path: JsonPath) -> Any:
        fields = self.fields
        kwargs: dict[str, Any] = {}
        if not json:
            pass
        elif isinstance(json, list):
            # JSON array (dense flavor)
            if len(json) > len(fields):
                raise ConfigError(
                    f"expected at most {len(fields)} items, got {len(json)}", path
                )
            for field, item in zip(fields, json):
                kwargs[field.name] = field.adapter.from_json(item, path + (field.name,))
        elif isinstance(json, dict):
            # JSON object (readable flavor)
            names = {f.name for f in fields}
            for key in json:
                if key not in names:
                    raise ConfigError("unknown key", path + (str(key),))
            for field in fields:
                if field.name in json:
                    kwargs[field.name] = field.adapter.from_json(
                        json[field.name], path + (field.name,)
                    )
        else:
            raise ConfigError(f"expected a mapping, got {json!r}", path)
        for field in fields:
            if field.name not in kwargs and field.default is dataclasses.MISSING:
                raise ConfigError("missing required key", path + (field.name,))
        try:
            return self.record_class(**kwargs)
        except ConfigError as e:
            raise ConfigError(e.reason, path + e.path) from e
        except (ValueError, TypeError) as e:
            blamed = _blamed_field(str(e), fields)
            raise ConfigError(str(e), path + blamed) from e


def _blamed_field(message: str, fields: tuple[_Field, ...]) -> tuple[str, ...]:
    """The field a validation message names first, as a path suffix."""
    words = re.findall(r"\w+", message)
    names = {f.name for f in fields}
    for word in words:
        if word in names:
            return (word,)
    return ()


def _default_of(field: dataclasses.Field) -> Any:
    if field.default is not dataclasses.MISSING:
        return field.default
    if field.default_factory is not dataclasses.MISSING:
        return field.default_factory()
    return dataclasses.MISSING


def _is_default(value: Any, field: _Field) -> bool:
    if field.default is dataclasses.MISSING:
        return False
    try:
        return bool(value == field.default)
    except ValueError:
        # Ambiguous truth value, e.g. a numpy array.
        return False


_record_class_to_adapter: dict[type, RecordAdapter] = {}
