"""Exception types shared across the package."""


class SadamError(Exception):
    """Base class for all package-specific errors."""


class InputDomainError(SadamError, ValueError):
    """An argument is outside the documented domain (negative, non-finite, empty, ...)."""


class ConfigError(SadamError, ValueError):
    """A configuration value or combination of values is invalid."""


class PoisonedStateError(SadamError, FloatingPointError):
    """A non-finite gradient or iterate was encountered during optimization."""


class UnboundedALRError(SadamError, ValueError):
    """The adaptive-learning-rate bounds do not exist for this calibrator setting.

    Raised instead of returning an infinite bound, so downstream bound checks
    cannot silently pass against a vacuous interval.
    """


class UnsupportedQueryError(SadamError, ValueError):
    """The requested quantity (e.g. an optimal value) is not available for this problem."""


class DivergedRunError(SadamError, RuntimeError):
    """A constituent run of a study aborted; carries which run failed."""


class IdxParseError(SadamError, ValueError):
    """An IDX file failed to parse. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
