"""Exception hierarchy shared across the package.

Every error raised on purpose derives from :class:`PrefAdaptError`, so callers
(and the CLI exit-code mapping) can distinguish bad arguments, bad files, and
corrupted state without string matching.
"""


class PrefAdaptError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(PrefAdaptError, ValueError):
    """An argument violates an operation's precondition (bad dimension,
    empty batch, zero-norm vector, out-of-range parameter)."""


class FormatError(PrefAdaptError):
    """A file does not carry the expected magic/version header."""


class CorruptionError(PrefAdaptError):
    """A file's header and payload disagree (truncation, size mismatch)."""


class ValidationError(PrefAdaptError):
    """Structurally readable data fails semantic validation (duplicate or
    unknown ids, non-finite components, empty score bands)."""


class ParseError(PrefAdaptError):
    """A record cannot be parsed at all (malformed JSONL line)."""


class IntegrityError(PrefAdaptError):
    """Persisted event-log state is inconsistent (sequence gaps, stale
    snapshots)."""
