import math
from typing import Any, Final

from rtmlib.errors import ConfigError
from rtmlib.impl.type_adapter import JsonPath, TypeAdapter


class _BoolAdapter(TypeAdapter):
    def to_json(self, value: Any, readable: bool) -> Any:
        if readable:
            return True if value else False
        else:
            return 1 if value else 0

    def from_json(self, json: Any, path: JsonPath) -> bool:
        if json.__class__ is bool:
            return json
        if json.__class__ is int and json in (0, 1):
            return json == 1
        raise ConfigError(f"expected a boolean, got {json!r}", path)


BOOL_ADAPTER: Final[TypeAdapter] = _BoolAdapter()


class _IntAdapter(TypeAdapter):
    def to_json(self, value: Any, readable: bool) -> Any:
        return int(value)

    def from_json(self, json: Any, path: JsonPath) -> int:
        if json.__class__ is int:
            return json
        # Must accept integral float inputs and turn them into ints.
        if json.__class__ is float and math.isfinite(json) and json == round(json):
            return round(json)
        raise ConfigError(f"expected an integer, got {json!r}", path)


INT_ADAPTER: Final[TypeAdapter] = _IntAdapter()


class _FloatAdapter(TypeAdapter):
    def to_json(self, value: Any, readable: bool) -> Any:
        return float(value)

    def from_json(self, json: Any, path: JsonPath) -> float:
        if json.__class__ is float or json.__class__ is int:
            return json + 0.0
        raise ConfigError(f"expected a number, got {json!r}", path)


FLOAT_ADAPTER: Final[TypeAdapter] = _FloatAdapter()


class _StringAdapter(TypeAdapter):
    def to_json(self, value: Any, readable: bool) -> Any:
        return value

    def from_json(self, json: Any, path: JsonPath) -> str:
        if isinstance(json, str):
            return json
        raise ConfigError(f"expected a string, got {json!r}", path)


STRING_ADAPTER: Final[TypeAdapter] = _StringAdapter()
