from typing import Any
from weakref import WeakValueDictionary

from rtmlib.errors import ConfigError
from rtmlib.impl.type_adapter import JsonPath, TypeAdapter


def get_array_adapter(item_adapter: TypeAdapter) -> TypeAdapter:
    return _item_to_array_adapter.setdefault(item_adapter, _ArrayAdapter(item_adapter))


class _ArrayAdapter(TypeAdapter):
    """Adapter for 'tuple[Item, ...]'. Any iterable, numpy arrays included, is
    accepted on the way out; a tuple always comes back."""

    __slots__ = ("item_adapter",)

    item_adapter: TypeAdapter

    def __init__(self, item_adapter: TypeAdapter):
        self.item_adapter = item_adapter

    def to_json(self, value: Any, readable: bool) -> Any:
        to_json = self.item_adapter.to_json
        return [to_json(e, readable) for e in value]

    def from_json(self, json: Any, path: JsonPath) -> tuple[Any, ...]:
        if not isinstance(json, list):
            raise ConfigError(f"expected a list, got {json!r}", path)
        from_json = self.item_adapter.from_json
        return tuple(from_json(e, path + (str(i),)) for i, e in enumerate(json))


_item_to_array_adapter: WeakValueDictionary[TypeAdapter, _ArrayAdapter] = (
    WeakValueDictionary()
)
