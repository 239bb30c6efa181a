"""Exception types shared across the package."""


class ScasimError(Exception):
    """Base class for all package errors."""


class ContractError(ScasimError):
    """Precondition or dimension contract violated by a caller."""


class SynthesisError(ScasimError):
    """Controller synthesis failed (non-Hurwitz model, singular DC gain, ...)."""


class RealizationError(ScasimError):
    """A transfer function could not be realized as required."""


class SimulationFault(ScasimError):
    """Non-finite state encountered while stepping."""


class CalibrationError(ScasimError):
    """Perception calibration rejected its input log."""


class MetricError(ScasimError):
    """A metric was requested on a degenerate or missing window."""


class ConfigError(ScasimError):
    """Scenario configuration invalid or unparsable."""
