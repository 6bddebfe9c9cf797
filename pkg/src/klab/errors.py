"""Exception hierarchy shared by the lab modules.

Every class carries the CLI exit code it maps to, so the command layer can
translate failures without a lookup table of its own.
"""


class KlabError(Exception):
    exit_code = 1


class MalformedCode(KlabError, ValueError):
    """A bit string is not a valid codeword of the expected code."""


class NotComputed(KlabError, LookupError):
    """The (condition, target) pair lies outside a table's domain."""

    exit_code = 4


class MissingCondition(NotComputed):
    """A condition row that a check needs has not been built."""

    def __init__(self, mode, condition):
        self.mode = mode
        self.condition = condition
        super().__init__(f"no {mode} row for condition {condition or 'ε'!r}")


class CapacityExceeded(KlabError):
    exit_code = 2


class IoFailure(KlabError, OSError):
    exit_code = 3


class CorruptCache(IoFailure):
    """Digest or structural check of a cache file failed."""


class FingerprintMismatch(KlabError):
    """Cached data was produced by a different machine or scale."""

    exit_code = 5


class LockHeld(KlabError):
    exit_code = 6


class Diverged(KlabError):
    """Fixed-point iteration reached a value with no finite complexity."""


class ScaleTooSmall(KlabError):
    pass
