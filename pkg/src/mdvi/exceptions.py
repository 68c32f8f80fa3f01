"""Exception types raised across the package."""


class MdviError(Exception):
    """Base class for all package errors."""


class DimensionError(MdviError, ValueError):
    """Array shapes do not match the MDP."""


class DomainError(MdviError, ValueError):
    """A functional is undefined on its inputs (e.g. KL outside the support)."""


class ConfigError(MdviError, ValueError):
    """A scheme or experiment configuration violates its invariants."""


class TraceDataError(MdviError, ValueError):
    """A run trace lacks the data needed for a computation."""


class DegenerateMdpError(MdviError, ValueError):
    """The MDP makes a metric undefined (e.g. an all-zero optimal value)."""
