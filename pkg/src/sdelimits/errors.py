"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A model or schedule parameter is outside its admissible range."""


class EvaluationError(ArithmeticError):
    """A coefficient or transform produced a non-finite value."""


class TransformOverflowError(OverflowError):
    """The scale-function exponent is too large to exponentiate directly."""


class OutOfRangeError(ValueError):
    """A point lies outside the tabulated transform window."""


class ConfigurationError(ValueError):
    """A checker, simulation or experiment configuration is inconsistent."""


class ResolutionError(ValueError):
    """The requested time step does not resolve the drift oscillation."""


class HypothesisNotMetError(RuntimeError):
    """A theorem check was requested but its hypotheses were not certified."""
