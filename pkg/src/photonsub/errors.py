"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration / input problems exit
with 2, numerical-floor conditions with 3.
"""


class PhotonSubError(Exception):
    """Base class for all package errors."""


class ValidationError(PhotonSubError):
    """Invalid configuration, parameters, or input data."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class CalibrationError(ValidationError):
    """Shot-noise calibration data is missing or insufficient."""


class NumericalFloorError(PhotonSubError):
    """A quantity fell below a numerical floor (e.g. herald probability)."""


class DegenerateHeraldError(NumericalFloorError):
    """Heralding probability below the configured floor."""


class TruncationError(NumericalFloorError):
    """Requested state leaks past the Fock cutoff beyond tolerance."""
