"""Exception taxonomy shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
anything else (including InvariantError) -> 4.
"""


class EvprError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(EvprError):
    """Invalid configuration: bad values, missing paths, contradictory modes."""


class DataError(EvprError):
    """Malformed or inconsistent input data (parse failures, bad headers, CRC)."""


class InvariantError(EvprError):
    """An internal invariant was violated; indicates a pipeline bug."""
