"""Exception types shared across the package."""


class WatermarkError(Exception):
    """Base class for all package errors."""


class PGMParseError(WatermarkError, ValueError):
    """Malformed PGM data. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnsupportedFormatError(WatermarkError, ValueError):
    pass


class DimensionError(WatermarkError, ValueError):
    pass


class InsufficientDataError(WatermarkError, ValueError):
    pass


class DegenerateError(WatermarkError, ValueError):
    """Zero variance / zero norm input where a spread is required."""


class CalibrationError(WatermarkError, RuntimeError):
    pass


class ConfigError(WatermarkError, ValueError):
    pass
