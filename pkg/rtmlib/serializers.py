import enum
from typing import Final, Literal, TypeVar, overload

from rtmlib.impl import primitives
from rtmlib.impl.arrays import get_array_adapter
from rtmlib.impl.enums import get_enum_adapter
from rtmlib.impl.optionals import get_optional_adapter
from rtmlib.impl.records import get_record_adapter
from rtmlib.serializer import Serializer, make_serializer

Item = TypeVar("Item")
Other = TypeVar("Other")
Record = TypeVar("Record")
E = TypeVar("E", bound=enum.Enum)


def array_serializer(item_serializer: Serializer[Item]) -> Serializer[tuple[Item, ...]]:
    return make_serializer(get_array_adapter(item_serializer._adapter))


def optional_serializer(
    other_serializer: Serializer[Other],
) -> Serializer[Other | None]:
    return make_serializer(get_optional_adapter(other_serializer._adapter))


def enum_serializer(enum_class: type[E]) -> Serializer[E]:
    return make_serializer(get_enum_adapter(enum_class))


def record_serializer(record_class: type[Record]) -> Serializer[Record]:
    """Serializer for a dataclass, with field types resolved from its annotations."""
    return make_serializer(get_record_adapter(record_class))


@overload
def primitive_serializer(primitive: Literal["bool"]) -> Serializer[bool]: ...
@overload
def primitive_serializer(primitive: Literal["int"]) -> Serializer[int]: ...
@overload
def primitive_serializer(primitive: Literal["float"]) -> Serializer[float]: ...
@overload
def primitive_serializer(primitive: Literal["string"]) -> Serializer[str]: ...
def primitive_serializer(
    primitive: (
        Literal["bool"] | Literal["int"] | Literal["float"] | Literal["string"]
    ),
) -> Serializer[bool] | Serializer[int] | Serializer[float] | Serializer[str]:
    return _PRIMITIVE_TO_SERIALIZER[primitive]


_PRIMITIVE_TO_SERIALIZER: Final = {
    "bool": make_serializer(primitives.BOOL_ADAPTER),
    "int": make_serializer(primitives.INT_ADAPTER),
    "float": make_serializer(primitives.FLOAT_ADAPTER),
    "string": make_serializer(primitives.STRING_ADAPTER),
}
