import hashlib
import json as jsonlib
from dataclasses import FrozenInstanceError
from typing import Any, Generic, NoReturn, TypeVar, cast, final
from weakref import WeakValueDictionary

from rtmlib.impl.type_adapter import TypeAdapter

T = TypeVar("T")


@final
class Serializer(Generic[T]):
    """
    Converts values of one type to and from JSON.

    Dense JSON encodes records as arrays in field order and is what 'digest()' hashes.
    Readable JSON encodes records as objects keyed by field name and is what goes
    into files meant for people. 'from_json()' accepts either.
    """

    __slots__ = (
        "__weakref__",
        "_adapter",
    )

    _adapter: TypeAdapter

    def __init__(self, adapter: NoReturn):
        # NoReturn keeps the constructor internal: use make_serializer().
        object.__setattr__(self, "_adapter", adapter)

    def to_json(self, input: T, *, readable=False) -> Any:
        return self._adapter.to_json(input, readable)

    def to_json_code(self, input: T, readable=False) -> str:
        json = self._adapter.to_json(input, readable)
        if readable:
            return jsonlib.dumps(json, indent=2)
        return jsonlib.dumps(json, separators=(",", ":"))

    def from_json(self, json: Any) -> T:
        """Raises ConfigError naming the offending path."""
        return self._adapter.from_json(json, ())

    def from_json_code(self, json_code: str) -> T:
        return self.from_json(jsonlib.loads(json_code))

    def digest(self, input: T) -> str:
        """SHA-256 of the dense JSON, equal for equal values."""
        return hashlib.sha256(self.to_json_code(input).encode()).hexdigest()

    def __setattr__(self, name: str, value: Any):
        raise FrozenInstanceError(self.__class__.__qualname__)

    def __delattr__(self, name: str):
        raise FrozenInstanceError(self.__class__.__qualname__)


_adapter_to_serializer: WeakValueDictionary[TypeAdapter, Serializer] = (
    WeakValueDictionary()
)


def make_serializer(adapter: TypeAdapter) -> Serializer:
    return _adapter_to_serializer.setdefault(
        adapter, Serializer(cast(NoReturn, adapter))
    )
