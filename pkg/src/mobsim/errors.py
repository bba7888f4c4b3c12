"""Exception types shared across the simulator.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3.
"""


class MobsimError(Exception):
    pass


class ConfigError(MobsimError):
    """Invalid configuration or a configuration that does not match the data."""


class DataError(MobsimError):
    """Malformed input data (CSV rows, trace lines, persona files)."""


class CategoryError(MobsimError):
    """A requested location category has no POIs at all."""
