"""Exception hierarchy.

Configuration problems map to CLI exit code 2, analysis problems to 3.
"""


class TimebinError(Exception):
    pass


class ConfigError(TimebinError):
    """Invalid or incomplete experiment configuration."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class SchemaError(ConfigError):
    """Config file does not match the documented key/section schema."""


class RangeError(ConfigError, ValueError):
    """A value is outside the range allowed by a type invariant."""


class ZeroMassSelection(TimebinError, ValueError):
    """Post-selection predicate retains (numerically) zero probability."""


class NoResonanceInWindow(TimebinError, ValueError):
    pass


class AnalysisError(TimebinError):
    pass


class EmptyChannel(AnalysisError):
    pass


class NoPeak(AnalysisError):
    pass


class InsufficientCounts(AnalysisError):
    pass


class FitDiverged(AnalysisError):
    pass
