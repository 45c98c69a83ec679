"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError (and subclasses) -> 3.
"""


class StareError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(StareError):
    """Invalid configuration value or unusable flag combination."""


class DataError(StareError):
    """Input data violates a precondition (shape, type, labels, file format)."""


class NumericalError(StareError):
    """A numerical routine could not produce a usable result."""


class DegenerateFitError(NumericalError):
    """Every restart of an EM fit collapsed (component weight underflow).

    Carries the component count so callers skipping individual candidates
    can report which ones failed.
    """

    def __init__(self, k, message=None):
        self.k = int(k)
        super().__init__(message or f"all EM restarts degenerate for k={k}")


class InsufficientSamplesError(NumericalError):
    """Too few observations for the requested estimator (e.g. n < k+1)."""


class EstimatorError(NumericalError):
    """A divergence estimator failed on otherwise valid input.

    ``component_index`` is filled in when the failure happened inside a
    per-component loop, so the offending component is identifiable.
    """

    def __init__(self, message, component_index=None):
        self.component_index = component_index
        if component_index is not None:
            message = f"component {component_index}: {message}"
        super().__init__(message)
