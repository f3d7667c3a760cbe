from typing import Any, Protocol

JsonPath = tuple[str, ...]


class TypeAdapter(Protocol):
    def to_json(self, value: Any, readable: bool) -> Any:
        """
        Returns a value which can be passed to 'json.dumps()' in order to serialize
        the given T into JSON format.
        The JSON flavor (dense versus readable) is given by the 'readable' arg.
        """
        ...

    def from_json(self, json: Any, path: JsonPath) -> Any:
        """
        Transforms 'json' into a T.
        The 'json' arg is obtained by calling 'json.loads()' or 'yaml.safe_load()'.
        Both JSON flavors are accepted. On a type mismatch, raises a ConfigError
        carrying 'path', the location of 'json' within the enclosing document.
        """
        ...
