"""Exception types shared across the runtime.

Backend failures map onto a small taxonomy so callers can react to the
category instead of the transport detail. Decision parsing has its own
branch because parse failures are retried, not fatal.
"""

from __future__ import annotations


class ImagentError(Exception):
    """Base class for errors raised by this package."""


class BackendError(ImagentError):
    """A model backend call failed."""


class BackendTimeout(BackendError):
    """The call exceeded its per-call timeout."""


class BackendUnreachable(BackendError):
    """The backend could not be reached or answered with a server error."""


class CapabilityMissing(BackendError):
    """The backend was asked for a verb it does not support."""


class BadRequest(BackendError):
    """The backend rejected the request as malformed."""


class UnreadableImage(ImagentError):
    """An image artifact exists but cannot be decoded."""


class ScoreParseError(ImagentError):
    """A judge reply contained no usable score."""


class DecisionParseError(ImagentError):
    """A controller reply could not be turned into a decision."""


class NoActionError(DecisionParseError):
    """No recognizable action name anywhere in the reply."""


class MaskedActionError(DecisionParseError):
    """The reply named an action that is not permitted in this state."""


class MaskViolation(ImagentError):
    """An action outside the current mask reached the executor.

    This signals a bug in the decision layer, not a model failure, so it
    is never retried or swallowed.
    """


class DanglingArtifactError(ImagentError):
    """A trace references an artifact file that is not on disk."""


class SchemaMismatchError(ImagentError):
    """A trace file declares a schema version this build does not read."""


class CorpusError(ImagentError):
    """A bench corpus file is missing, unreadable, or malformed."""


# Wire error kinds, shared by the HTTP client and any conforming server.
WIRE_ERROR_KINDS = {
    "timeout": BackendTimeout,
    "unreachable": BackendUnreachable,
    "capability_missing": CapabilityMissing,
    "bad_request": BadRequest,
    "internal": BackendUnreachable,
}


def error_for_kind(kind: str, message: str) -> BackendError:
    cls = WIRE_ERROR_KINDS.get(kind, BackendUnreachable)
    return cls(message)
