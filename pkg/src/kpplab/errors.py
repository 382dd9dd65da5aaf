"""Exception hierarchy shared by all kpplab modules."""


class KPPLabError(Exception):
    """Base class for every error raised by kpplab."""


class InvalidFunctionError(KPPLabError, ValueError):
    """A reaction term is non-finite or violates a structural requirement."""


class DomainError(KPPLabError, ValueError):
    """A query point lies where the operation is undefined (e.g. inside U)."""


class ParameterError(KPPLabError, ValueError):
    pass


class IntegrationError(KPPLabError, RuntimeError):
    """Front shooting did not reach the target state."""


class ConfigError(KPPLabError, ValueError):
    pass


class DivergenceError(KPPLabError, FloatingPointError):
    """Solver produced non-finite values or left [0, 1] beyond the slack."""


class FitError(KPPLabError, ValueError):
    pass


class GridMismatchError(KPPLabError, ValueError):
    pass


class EmptyLevelError(KPPLabError, ValueError):
    pass


class ScenarioError(KPPLabError, RuntimeError):
    pass


class FormatError(KPPLabError, ValueError):
    """Malformed KPPG container or JSON document."""
