"""Exception types shared across the package."""


class MifdcopError(Exception):
    """Base class for all package errors."""


class ValidationError(MifdcopError):
    """A problem, assignment, or file failed structural validation."""


class ConfigurationError(MifdcopError):
    """An algorithm configuration violates its invariants."""


class ProtocolError(MifdcopError):
    """An agent attempted an exchange the message-passing model forbids."""


class SearchSpaceError(MifdcopError):
    """An exact/reference search was refused because the space is too large."""


class NoSnapshotError(MifdcopError):
    """Best-state snapshot requested before any global cost finished propagating."""
