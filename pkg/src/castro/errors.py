"""Exception and warning types shared across the package."""


class CastroError(Exception):
    """Base class for all errors raised by castro."""


class ConfigError(CastroError):
    """Malformed or inconsistent problem configuration."""


class InfeasibleError(CastroError):
    """The constraints admit no sample, or a sampling stage ran out of attempts."""


class DataError(CastroError):
    """Experimental data that cannot be read or does not match the problem."""


class CastroWarning(UserWarning):
    """Non-fatal shortfalls (fewer rows than requested, flagged rows, ...)."""
