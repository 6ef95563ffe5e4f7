"""Exception hierarchy. Everything raised on purpose derives from TeaYieldError."""


class TeaYieldError(Exception):
    """Base class for all errors this package raises deliberately."""


class DataError(TeaYieldError):
    """Malformed or out-of-contract input data (bad CSV, schema mismatch,
    out-of-range values, dimension mismatches)."""


class ConfigError(TeaYieldError):
    """Invalid configuration file, option, or parameter value."""


class FitError(TeaYieldError):
    """A model or transform could not be fitted on the given data."""
