"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class PsmdpError(Exception):
    """Base class for all planner errors."""


class InputError(PsmdpError, ValueError):
    """Malformed or out-of-range input (exit code 2 at the CLI)."""


class ParseError(InputError):
    """Schedule text could not be parsed."""

    def __init__(self, message: str, text: str, position: int):
        super().__init__(f"{message} at position {position} in {text!r}")
        self.text = text
        self.position = position


class DomainError(PsmdpError):
    """Valid input that names something that does not exist (exit code 3)."""


class CapacityError(PsmdpError):
    """Macro-action enumeration exceeds the configured cap."""

    def __init__(self, count: int, cap: int):
        super().__init__(f"{count} macro actions exceed the enumeration cap of {cap}")
        self.count = count
        self.cap = cap


class ConvergenceError(PsmdpError):
    """An iterative solver hit its iteration limit."""

    def __init__(self, message: str, residual: float, last_policies=None):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
        self.last_policies = last_policies
