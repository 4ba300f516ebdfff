"""Exception types shared across the package."""


class MuxgelError(Exception):
    """Base class for all muxgel errors."""


class ShapeError(MuxgelError):
    """Operands disagree in width, height, or channel count."""


class ConfigError(MuxgelError):
    """Invalid configuration value, file, or unknown shape/mode tag."""


class ContractError(MuxgelError):
    """A data contract was violated (corrupt sample, mismatched ids,
    inconsistent extractor output)."""
