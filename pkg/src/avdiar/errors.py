"""Exception types shared across the toolkit."""


class AvdiarError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(AvdiarError):
    """Invalid configuration value or inconsistent option combination."""


class DataError(AvdiarError):
    """Missing or malformed input data (files, manifests, annotations)."""
