import enum
from typing import Any

from rtmlib.errors import ConfigError
from rtmlib.impl.type_adapter import JsonPath, TypeAdapter


def get_enum_adapter(enum_class: type[enum.Enum]) -> TypeAdapter:
    adapter = _enum_class_to_adapter.get(enum_class)
    if adapter is None:
        adapter = _enum_class_to_adapter[enum_class] = EnumAdapter(enum_class)
    return adapter


class EnumAdapter(TypeAdapter):
    """
    Dense JSON is the ordinal of the constant in declaration order, readable JSON is
    its string value. Enum values must be strings.
    """

    __slots__ = ("enum_class", "constants")

    def __init__(self, enum_class: type[enum.Enum]):
        self.enum_class = enum_class
        self.constants = tuple(enum_class)

    def to_json(self, value: Any, readable: bool) -> Any:
        if readable:
            return value.value
        else:
            return self.constants.index(value)

    def from_json(self, json: Any, path: JsonPath) -> Any:
        if json.__class__ is int and 0 <= json < len(self.constants):
            return self.constants[json]
        if isinstance(json, str):
            lowered = json.strip().lower()
            for constant in self.constants:
                if lowered in (constant.value.lower(), constant.name.lower()):
                    return constant
        choices = ", ".join(c.value for c in self.constants)
        raise ConfigError(f"expected one of {{{choices}}}, got {json!r}", path)


_enum_class_to_adapter: dict[type[enum.Enum], EnumAdapter] = {}
