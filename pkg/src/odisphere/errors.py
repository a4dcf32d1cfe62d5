"""Exception types shared across the toolkit."""


class OdisphereError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(OdisphereError):
    """Invalid configuration value or inconsistent parameter combination."""


class DegenerateInputError(OdisphereError):
    """Input is degenerate for the requested operation (all-zero map, constant map, ...)."""


class FormatError(OdisphereError):
    """Malformed file content (PFM, OSB1, fixation CSV)."""
