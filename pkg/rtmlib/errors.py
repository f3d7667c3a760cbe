from typing import Optional


class RtmError(Exception):
    """Base class of every error raised by rtmlib."""


class InvalidFieldError(RtmError, ValueError):
    """A log-permeability field holds non-finite values or has the wrong shape."""


class DomainError(RtmError, ValueError):
    """A position or front value lies outside the physical domain."""


class ParameterError(RtmError, ValueError):
    pass


class SolverError(RtmError, ArithmeticError):
    """The backward Euler root solve found no next front value."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class NumericalError(RtmError, ArithmeticError):
    pass


class NoiseModelError(RtmError, ValueError):
    pass


class DegenerateEnsembleError(RtmError, ValueError):
    pass


class EmptyEnsembleError(DegenerateEnsembleError):
    pass


class MalformedDataError(RtmError, ValueError):
    """A CSV or cache file on disk does not have the expected layout."""


class ConfigError(RtmError, ValueError):
    def __init__(
        self,
        reason: str,
        path: tuple[str, ...] = (),
        line: Optional[int] = None,
        source: str = "",
    ):
        self.reason = reason
        self.path = path
        self.line = line
        self.source = source
        super().__init__(self._format())

    @property
    def dotted_path(self) -> str:
        return ".".join(self.path)

    def located(self, source: str, line: Optional[int]) -> "ConfigError":
        return ConfigError(self.reason, self.path, line, source)

    def _format(self) -> str:
        location = ""
        if self.source:
            location = self.source
            if self.line is not None:
                location += f":{self.line}"
            location += ": "
        where = f"{self.dotted_path}: " if self.path else ""
        return f"{location}{where}{self.reason}"
