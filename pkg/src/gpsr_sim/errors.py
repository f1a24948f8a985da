"""Shared exception types."""

from __future__ import annotations


class SchemaError(ValueError):
    """A document is malformed; the message names the offending field."""


class ReferentialError(ValueError):
    """A document references an entity that does not exist."""


class IllegalEffect(ValueError):
    """A world mutation would violate a world invariant; nothing was changed."""


class PreconditionError(ValueError):
    """An operation was called in a state that forbids it."""


class BackendError(RuntimeError):
    """Base class for language-model backend failures."""


class BackendTransportError(BackendError):
    """The remote backend could not be reached."""


class BackendTimeoutError(BackendError):
    """The remote backend did not answer within the deadline."""


class BackendMalformedError(BackendError):
    """The remote backend answered outside the requested structured shape."""
