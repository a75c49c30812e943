class ValidationError(ValueError):
    """An arm or transition kernel violates the model assumptions."""


class ReversibilityError(ValidationError):
    """The kernel is not reversible with respect to its stationary distribution."""


class ConfigError(ValueError):
    """Invalid experiment configuration or parameter schedule."""


class ProtocolError(RuntimeError):
    """A player or the environment broke the slot feedback contract."""


class PracticalModeWarning(UserWarning):
    """Policy parameters do not meet the thresholds of the logarithmic regret bound."""
