from dataclasses import dataclass
from typing import Any
from weakref import WeakValueDictionary

from rtmlib.impl.type_adapter import JsonPath, TypeAdapter


def get_optional_adapter(other_adapter: TypeAdapter) -> TypeAdapter:
    return _other_adapter_to_optional_adapter.setdefault(
        other_adapter, _OptionalAdapter(other_adapter)
    )


@dataclass(frozen=True)
class _OptionalAdapter(TypeAdapter):
    __slots__ = ("other_adapter",)

    other_adapter: TypeAdapter

    def to_json(self, value: Any, readable: bool) -> Any:
        return None if value is None else self.other_adapter.to_json(value, readable)

    def from_json(self, json: Any, path: JsonPath) -> Any:
        return None if json is None else self.other_adapter.from_json(json, path)


_other_adapter_to_optional_adapter: WeakValueDictionary[TypeAdapter, TypeAdapter] = (
    WeakValueDictionary()
)
