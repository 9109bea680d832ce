"""Exception types raised across the package."""


class NeurFdivError(Exception):
    """Base class for all package errors."""


class DomainError(NeurFdivError, ValueError):
    """An argument lies outside the domain of a function (e.g. the Hellinger pole)."""


class NonConvergence(NeurFdivError, RuntimeError):
    """A numerical routine could not reach its requested tolerance."""


class ConfigError(NeurFdivError, ValueError):
    """Invalid configuration or violated precondition on a config object."""


class InvalidSpec(ConfigError):
    """A network class specification cannot be expanded at the requested width."""


class MissingTruncation(ConfigError):
    """Squared Hellinger quantities need a truncation level ``t``."""


class DegenerateFit(NeurFdivError, ValueError):
    """A log-log rate fit has too few usable points."""
