"""Exception hierarchy shared by all zenopm modules."""


class ZenoPMError(Exception):
    """Base class for every error raised by zenopm."""


class InvalidParameterError(ZenoPMError, ValueError):
    pass


class InvalidObservableError(ZenoPMError, ValueError):
    pass


class DegeneratePostselectionError(ZenoPMError, ValueError):
    pass


class CoverageError(ZenoPMError, ValueError):
    pass


class DegenerateDistributionError(ZenoPMError, ValueError):
    pass


class MissingRandomnessError(ZenoPMError, ValueError):
    pass


class BinningMismatchError(ZenoPMError, ValueError):
    pass


class UndefinedScaleError(ZenoPMError, ValueError):
    pass


class EmptySignalError(ZenoPMError, ValueError):
    pass


class InsufficientDataError(ZenoPMError, ValueError):
    pass


class InvalidCalibrationError(ZenoPMError, ValueError):
    pass


class ConfigError(ZenoPMError, ValueError):
    """Invalid or unknown configuration key; ``key`` names the offender."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class PairingError(ZenoPMError):
    """A signal dataset has no matching background dataset (or vice versa)."""
